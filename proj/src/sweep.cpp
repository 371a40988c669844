#include "ctrace/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace {

namespace {

// Runs fn(i) for i in [0, n) on `workers` threads. Each index writes only its
// own output slot, so results do not depend on scheduling. If several indices
// throw, the exception from the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void require_nonempty(std::span<const TraceSample> samples) {
  if (samples.empty()) throw Error(ErrorKind::InvalidSpec, "dataset contains no samples");
}

ExclusionCounts count_exclusions(std::span<const PreparedSample> prepared) {
  ExclusionCounts c;
  for (const auto& p : prepared) {
    switch (p.verdict()) {
      case Verdict::ExcludedCleanWrong: ++c.clean_wrong; break;
      case Verdict::ExcludedCorruptRight: ++c.corrupt_right; break;
      case Verdict::ExcludedNoGap: ++c.no_gap; break;
      case Verdict::Valid: break;
    }
  }
  return c;
}

void require_valid(std::size_t n_valid, const ExclusionCounts& c) {
  if (n_valid == 0)
    throw Error(ErrorKind::NoValidSamples,
                fmt::format("no valid samples: {} clean-wrong, {} corrupt-right, {} no-gap", c.clean_wrong,
                            c.corrupt_right, c.no_gap));
}

std::vector<SampleStatus> statuses(std::span<const PreparedSample> prepared) {
  std::vector<SampleStatus> out;
  out.reserve(prepared.size());
  for (const auto& p : prepared) out.push_back({p.sample().id, p.verdict(), p.p_clean(), p.p_corrupted()});
  return out;
}

std::vector<std::size_t> traced_positions(const MultiModalSequence& seq, bool include_audio) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (include_audio || seq[i].is_text()) out.push_back(i);
  return out;
}

double maybe_clamp(double v, bool clamp) { return clamp ? std::clamp(v, 0.0, 1.0) : v; }

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum;
}

}  // namespace

AggregateStat aggregate(std::span<const double> values, bool clamp) {
  if (values.empty()) throw Error(ErrorKind::NoValidSamples, "aggregate over zero valid samples");
  std::vector<double> v(values.begin(), values.end());
  for (double& x : v) x = maybe_clamp(x, clamp);
  return {sorted_sum(std::move(v)) / static_cast<double>(values.size()), values.size()};
}

std::size_t TokenSweepResult::cell_count() const {
  std::size_t per_site = 0;
  for (const auto& p : positions) per_site += p.size();
  return sites.size() * per_site;
}

std::vector<PreparedSample> prepare_samples(const Model& model, std::span<const TraceSample> samples,
                                            const CorruptionSpec& corruption, const SweepOptions& options) {
  require_nonempty(samples);
  corruption.validate(model.config().d_audio);
  std::vector<std::optional<PreparedSample>> slots(samples.size());
  parallel_for(samples.size(), options.workers, [&](std::size_t i) {
    slots[i].emplace(model, samples[i], corruption, options.epsilon_gap);
  });
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

LayerSweepResult layer_sweep(const Model& model, std::span<const TraceSample> samples,
                             const CorruptionSpec& corruption, const SweepOptions& options) {
  const auto prepared = prepare_samples(model, samples, corruption, options);
  const std::size_t n_sites = model.config().n_sites();
  const std::size_t n = prepared.size();

  LayerSweepResult r;
  r.samples = statuses(prepared);
  r.excluded = count_exclusions(prepared);
  r.n_valid = n - r.excluded.total();
  require_valid(r.n_valid, r.excluded);

  r.rr.assign(n_sites, std::vector<std::optional<double>>(n));
  parallel_for(n_sites * n, options.workers, [&](std::size_t cell) {
    const std::size_t site = cell / n;
    const std::size_t i = cell % n;
    const PreparedSample& p = prepared[i];
    if (!p.valid()) return;
    const auto patches =
        InterventionSpec::whole_site(p.sample().clean_sequence, site, options.include_audio_positions);
    r.rr[site][i] = trace_patched(model, p, patches).rr;
  });

  for (std::size_t s = 0; s < n_sites; ++s) {
    std::vector<double> values;
    for (const auto& v : r.rr[s])
      if (v) values.push_back(*v);
    r.per_site.push_back(aggregate(values, options.clamp));
  }
  return r;
}

TokenSweepResult token_sweep(const Model& model, std::span<const TraceSample> samples,
                             const CorruptionSpec& corruption, std::span<const std::size_t> sites,
                             const SweepOptions& options) {
  const std::size_t n_sites = model.config().n_sites();
  TokenSweepResult r;
  if (sites.empty()) {
    for (std::size_t s = 0; s < n_sites; ++s) r.sites.push_back(s);
  } else {
    r.sites.assign(sites.begin(), sites.end());
    for (std::size_t s : r.sites)
      if (s >= n_sites) throw Error(ErrorKind::Range, fmt::format("site {} outside 0..{}", s, n_sites - 1));
  }

  const auto prepared = prepare_samples(model, samples, corruption, options);
  const std::size_t n = prepared.size();
  r.samples = statuses(prepared);
  r.excluded = count_exclusions(prepared);
  r.n_valid = n - r.excluded.total();
  require_valid(r.n_valid, r.excluded);

  // Flat cell index: (site index, sample, k) over valid samples only.
  struct Cell {
    std::size_t site_index, sample, k;
  };
  std::vector<Cell> cells;
  r.rr.assign(r.sites.size(), std::vector<std::vector<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& seq = prepared[i].sample().clean_sequence;
    r.positions.push_back(traced_positions(seq, options.include_audio_positions));
    std::vector<Segment> segs;
    for (std::size_t p : r.positions.back()) segs.push_back(seq[p].segment);
    r.segments.push_back(std::move(segs));
    if (!prepared[i].valid()) continue;
    for (std::size_t si = 0; si < r.sites.size(); ++si) {
      r.rr[si][i].assign(r.positions[i].size(), 0.0);
      for (std::size_t k = 0; k < r.positions[i].size(); ++k) cells.push_back({si, i, k});
    }
  }

  parallel_for(cells.size(), options.workers, [&](std::size_t c) {
    const Cell& cell = cells[c];
    InterventionSpec patches;
    patches.add({r.sites[cell.site_index], r.positions[cell.sample][cell.k]});
    r.rr[cell.site_index][cell.sample][cell.k] = *trace_patched(model, prepared[cell.sample], patches).rr;
  });

  std::vector<Segment> segment_order;
  if (options.include_audio_positions) segment_order.push_back(Segment::Audio);
  segment_order.insert(segment_order.end(), std::begin(kTextSegments), std::end(kTextSegments));

  for (std::size_t si = 0; si < r.sites.size(); ++si) {
    for (Segment seg : segment_order) {
      std::vector<double> means, maxes;
      for (std::size_t i = 0; i < n; ++i) {
        if (!prepared[i].valid()) continue;
        std::vector<double> vals;
        for (std::size_t k = 0; k < r.positions[i].size(); ++k)
          if (r.segments[i][k] == seg) vals.push_back(maybe_clamp(r.rr[si][i][k], options.clamp));
        if (vals.empty()) continue;
        maxes.push_back(*std::max_element(vals.begin(), vals.end()));
        const double count = static_cast<double>(vals.size());
        double sum = 0.0;
        for (double v : vals) sum += v;
        means.push_back(sum / count);
      }
      if (means.empty()) continue;
      r.summaries.push_back({r.sites[si], seg, aggregate(means).mean, aggregate(maxes).mean, means.size()});
    }
  }

  // Per-position grid only when every sample has the same (kind, segment) layout.
  const auto layout = [](const MultiModalSequence& seq) {
    std::vector<std::pair<bool, Segment>> out;
    for (const auto& e : seq.elements()) out.emplace_back(e.is_text(), e.segment);
    return out;
  };
  const auto first = layout(prepared.front().sample().clean_sequence);
  const bool shared = std::all_of(prepared.begin(), prepared.end(), [&](const PreparedSample& p) {
    return layout(p.sample().clean_sequence) == first;
  });
  if (shared) {
    PositionGrid g;
    g.positions = r.positions.front();
    g.segments = r.segments.front();
    g.n_valid = r.n_valid;
    for (std::size_t si = 0; si < r.sites.size(); ++si) {
      std::vector<double> row;
      for (std::size_t k = 0; k < g.positions.size(); ++k) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < n; ++i)
          if (prepared[i].valid()) vals.push_back(r.rr[si][i][k]);
        row.push_back(aggregate(vals, options.clamp).mean);
      }
      g.mean_rr.push_back(std::move(row));
    }
    r.grid = std::move(g);
  }
  return r;
}

InterventionSweepResult intervention_sweep(const Model& model, std::span<const TraceSample> samples,
                                           const CorruptionSpec& corruption, const InterventionSpec& patches,
                                           const SweepOptions& options) {
  const auto prepared = prepare_samples(model, samples, corruption, options);
  InterventionSweepResult r;
  r.samples = statuses(prepared);
  r.excluded = count_exclusions(prepared);
  require_valid(prepared.size() - r.excluded.total(), r.excluded);
  r.results.resize(prepared.size());
  parallel_for(prepared.size(), options.workers, [&](std::size_t i) {
    patches.validate(model.config().n_sites(), prepared[i].sample().clean_sequence.size());
    r.results[i] = trace_patched(model, prepared[i], patches);
  });
  std::vector<double> values;
  for (const auto& t : r.results)
    if (t.rr) values.push_back(*t.rr);
  r.mean = aggregate(values, options.clamp);
  return r;
}

}  // namespace ctrace
