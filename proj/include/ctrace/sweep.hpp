#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctrace/tracing.hpp"

namespace ctrace {

struct SweepOptions {
  double epsilon_gap = kDefaultEpsilonGap;
  bool include_audio_positions = false;
  bool clamp = false;  // clamp per-sample RR to [0, 1] before averaging
  std::size_t workers = 1;
};

struct ExclusionCounts {
  std::size_t clean_wrong = 0;
  std::size_t corrupt_right = 0;
  std::size_t no_gap = 0;

  std::size_t total() const noexcept { return clean_wrong + corrupt_right + no_gap; }
  friend bool operator==(const ExclusionCounts&, const ExclusionCounts&) = default;
};

struct SampleStatus {
  std::string id;
  Verdict verdict = Verdict::Valid;
  double p_clean = 0.0;
  double p_corrupted = 0.0;
};

struct AggregateStat {
  double mean = 0.0;
  std::size_t n_valid = 0;
};

/// Mean of per-sample RR values. Values are reduced in sorted order, so the
/// result is bit-identical under any permutation of the input. With clamp set,
/// each value is clamped to [0, 1] first. Throws NoValidSamples when empty.
AggregateStat aggregate(std::span<const double> values, bool clamp = false);

struct LayerSweepResult {
  std::vector<SampleStatus> samples;
  /// rr[site][sample]; empty optional for excluded samples.
  std::vector<std::vector<std::optional<double>>> rr;
  std::vector<AggregateStat> per_site;  // index = site 0..L
  ExclusionCounts excluded;
  std::size_t n_valid = 0;
};

struct SegmentSummary {
  std::size_t site = 0;
  Segment segment = Segment::Last;
  double mean_rr = 0.0;  // mean over valid samples of the within-segment mean
  double max_rr = 0.0;   // mean over valid samples of the within-segment max
  std::size_t n_valid = 0;
};

/// Per-position means, emitted only when every sample shares one layout.
struct PositionGrid {
  std::vector<std::size_t> positions;
  std::vector<Segment> segments;
  std::vector<std::vector<double>> mean_rr;  // [site index][k]
  std::size_t n_valid = 0;
};

struct TokenSweepResult {
  std::vector<std::size_t> sites;
  std::vector<SampleStatus> samples;
  /// Positions traced for each sample (textual, or all when audio is included).
  std::vector<std::vector<std::size_t>> positions;
  std::vector<std::vector<Segment>> segments;
  /// rr[site index][sample][k] for positions[sample][k]; empty for excluded samples.
  std::vector<std::vector<std::vector<double>>> rr;
  std::vector<SegmentSummary> summaries;  // site-major, segments in prompt order
  std::optional<PositionGrid> grid;
  ExclusionCounts excluded;
  std::size_t n_valid = 0;

  /// |sites| x total traced positions over all samples.
  std::size_t cell_count() const;
};

struct InterventionSweepResult {
  std::vector<SampleStatus> samples;
  std::vector<TraceResult> results;
  AggregateStat mean;
  ExclusionCounts excluded;
};

/// Clean and corrupted runs for every sample, in parallel. Verdicts come from here
/// and are shared by every cell of a sweep.
std::vector<PreparedSample> prepare_samples(const Model& model, std::span<const TraceSample> samples,
                                            const CorruptionSpec& corruption, const SweepOptions& options);

/// For each site 0..L, patches every textual position (all positions with
/// include_audio_positions) and records RR per valid sample.
LayerSweepResult layer_sweep(const Model& model, std::span<const TraceSample> samples,
                             const CorruptionSpec& corruption, const SweepOptions& options = {});

/// Single-patch RR for every (site, position) cell. `sites` empty means all.
TokenSweepResult token_sweep(const Model& model, std::span<const TraceSample> samples,
                             const CorruptionSpec& corruption, std::span<const std::size_t> sites = {},
                             const SweepOptions& options = {});

/// One fixed intervention applied to every sample.
InterventionSweepResult intervention_sweep(const Model& model, std::span<const TraceSample> samples,
                                           const CorruptionSpec& corruption, const InterventionSpec& patches,
                                           const SweepOptions& options = {});

}  // namespace ctrace
