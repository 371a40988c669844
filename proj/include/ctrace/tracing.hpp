#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "ctrace/model.hpp"

namespace ctrace {

/// Guard band on P_clean - P_corrupted below which a sample is excluded.
inline constexpr double kDefaultEpsilonGap = 1e-6;

/// Replacement for every audio frame in the corrupted run. Defaults to zeros.
struct CorruptionSpec {
  Vector silence_vector;

  static CorruptionSpec silence(std::size_t d_audio) { return {Vector(d_audio, 0.0)}; }
  void validate(std::size_t d_audio) const;

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

struct TraceSample {
  std::string id;
  MultiModalSequence clean_sequence;
  std::size_t target = 0;

  void validate_against(const ModelConfig& config) const;

  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

enum class Verdict { Valid, ExcludedCleanWrong, ExcludedCorruptRight, ExcludedNoGap };

std::string_view to_string(Verdict verdict);

struct TraceResult {
  double p_clean = 0.0;
  double p_corrupted = 0.0;
  double p_patched = 0.0;
  std::optional<double> rr;  // set only for valid samples, unclamped
  Verdict verdict = Verdict::Valid;
};

struct CorruptedSequence {
  MultiModalSequence sequence;
  bool had_no_audio = false;  // warning: nothing was replaced
};

/// Replaces every audio frame's features with the silence vector, keeping
/// text, ordering, segment labels, and length.
CorruptedSequence corrupt(const MultiModalSequence& seq, const CorruptionSpec& corruption);

/// (p_patched - p_corrupted) / (p_clean - p_corrupted). Throws NoGap when
/// p_clean - p_corrupted <= epsilon_gap.
double recovery_rate(double p_clean, double p_corrupted, double p_patched,
                     double epsilon_gap = kDefaultEpsilonGap);

/// Applies the exclusion rules in fixed order: clean prediction wrong,
/// corrupted prediction right, then no probability gap.
Verdict validate(double p_clean, double p_corrupted, std::size_t clean_argmax,
                 std::size_t corrupt_argmax, std::size_t target,
                 double epsilon_gap = kDefaultEpsilonGap);

/// Clean and corrupted runs for one sample, computed once and reused for every
/// intervention on it. Immutable after construction.
class PreparedSample {
 public:
  PreparedSample(const Model& model, const TraceSample& sample, const CorruptionSpec& corruption,
                 double epsilon_gap = kDefaultEpsilonGap);

  const TraceSample& sample() const noexcept { return sample_; }
  const MultiModalSequence& corrupted_sequence() const noexcept { return corrupted_; }
  const ActivationCache& clean_cache() const noexcept { return clean_cache_; }
  const Vector& clean_logits() const noexcept { return clean_logits_; }
  const Vector& corrupted_logits() const noexcept { return corrupted_logits_; }
  double p_clean() const noexcept { return p_clean_; }
  double p_corrupted() const noexcept { return p_corrupted_; }
  std::size_t clean_argmax() const noexcept { return clean_argmax_; }
  std::size_t corrupt_argmax() const noexcept { return corrupt_argmax_; }
  Verdict verdict() const noexcept { return verdict_; }
  bool valid() const noexcept { return verdict_ == Verdict::Valid; }
  double epsilon_gap() const noexcept { return epsilon_gap_; }

 private:
  TraceSample sample_;
  MultiModalSequence corrupted_;
  ActivationCache clean_cache_;
  Vector clean_logits_;
  Vector corrupted_logits_;
  double p_clean_ = 0.0;
  double p_corrupted_ = 0.0;
  std::size_t clean_argmax_ = 0;
  std::size_t corrupt_argmax_ = 0;
  Verdict verdict_ = Verdict::Valid;
  double epsilon_gap_ = kDefaultEpsilonGap;
};

/// Patched run: the corrupted sequence with hidden states from the clean cache.
TraceResult trace_patched(const Model& model, const PreparedSample& prepared,
                          const InterventionSpec& patches);

/// Clean, corrupted, and patched runs for one sample and one intervention.
TraceResult trace_one(const Model& model, const TraceSample& sample, const CorruptionSpec& corruption,
                      const InterventionSpec& patches, double epsilon_gap = kDefaultEpsilonGap);

}  // namespace ctrace
