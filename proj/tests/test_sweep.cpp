#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "ctrace/error.hpp"
#include "ctrace/oracle.hpp"
#include "ctrace/results_io.hpp"
#include "ctrace/sweep.hpp"
#include "test_support.hpp"

namespace ctrace {
namespace {

std::vector<TraceSample> oracle_samples(const oracle::OracleSpec& spec, std::size_t n) {
  std::vector<TraceSample> out;
  for (const auto& s : oracle::to_dataset(spec, oracle::gen_dataset(spec, n)).samples) out.push_back(s);
  return out;
}

TEST(Aggregate, Examples) {
  const std::vector<double> v{0.5, 1.0, -0.5, 1.5};
  EXPECT_EQ(aggregate(v).mean, 0.625);
  EXPECT_EQ(aggregate(v).n_valid, 4u);
  EXPECT_EQ(aggregate(v, true).mean, 0.625);  // (0.5 + 1 + 0 + 1) / 4
  const std::vector<double> w{0.2, 0.4};
  EXPECT_NEAR(aggregate(w).mean, 0.3, 1e-15);
  EXPECT_THROW(aggregate(std::vector<double>{}), Error);
}

TEST(Aggregate, PermutationInvariantBitForBit) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::vector<double> v(257);
  for (double& x : v) x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 7) - 3);
  const double ref = aggregate(v).mean;
  for (int t = 0; t < 20; ++t) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(aggregate(v).mean, ref);
  }
}

TEST(LayerSweep, OracleMatchesExpectedMap) {
  const oracle::OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  const auto samples = oracle_samples(spec, 16);
  const auto r = layer_sweep(m, samples, CorruptionSpec::silence(4));
  EXPECT_EQ(r.n_valid, 16u);
  EXPECT_EQ(r.excluded, ExclusionCounts{});
  ASSERT_EQ(r.per_site.size(), 5u);
  const auto expected = oracle::expected_layer_map(spec);
  for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(r.per_site[s].mean, expected[s], 1e-9);
}

TEST(LayerSweep, IncludingAudioMakesTheRootSiteRecover) {
  const oracle::OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  SweepOptions o;
  o.include_audio_positions = true;
  const auto r = layer_sweep(m, oracle_samples(spec, 8), CorruptionSpec::silence(4), o);
  for (const auto& stat : r.per_site) EXPECT_NEAR(stat.mean, 1.0, 1e-9);
}

TEST(LayerSweep, FinalSiteRecoversOnRandomModels) {
  std::mt19937_64 rng(41);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Model m = testing::random_model(rng);
    std::vector<TraceSample> samples;
    for (int i = 0; i < 4; ++i)
      if (auto s = testing::random_valid_sample(rng, m)) {
        s->id = "r" + std::to_string(i);
        samples.push_back(*s);
      }
    if (samples.empty()) continue;
    const auto r = layer_sweep(m, samples, CorruptionSpec::silence(m.config().d_audio));
    EXPECT_NEAR(r.per_site.back().mean, 1.0, 1e-9);
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(LayerSweep, AllExcludedThrowsWithCounts) {
  const oracle::OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  auto samples = oracle_samples(spec, 3);
  for (auto& s : samples) s.target = 0;  // never the clean prediction
  try {
    layer_sweep(m, samples, CorruptionSpec::silence(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoValidSamples);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
  EXPECT_THROW(layer_sweep(m, std::vector<TraceSample>{}, CorruptionSpec::silence(4)), Error);
}

TEST(TokenSweep, SingleSampleSegmentMeansAreCellMeans) {
  std::mt19937_64 rng(43);
  Model m = testing::random_model(rng);
  auto sample = testing::random_valid_sample(rng, m);
  for (int t = 0; t < 20 && !sample; ++t) {
    m = testing::random_model(rng);
    sample = testing::random_valid_sample(rng, m);
  }
  ASSERT_TRUE(sample);
  const std::vector<TraceSample> samples{*sample};
  const auto r = token_sweep(m, samples, CorruptionSpec::silence(m.config().d_audio));
  ASSERT_EQ(r.n_valid, 1u);
  for (const auto& summary : r.summaries) {
    const std::size_t si = summary.site;
    double sum = 0, mx = -1e300;
    int n = 0;
    for (std::size_t k = 0; k < r.positions[0].size(); ++k)
      if (r.segments[0][k] == summary.segment) {
        sum += r.rr[si][0][k];
        mx = std::max(mx, r.rr[si][0][k]);
        ++n;
      }
    ASSERT_GT(n, 0);
    EXPECT_NEAR(summary.mean_rr, sum / n, 1e-12);
    EXPECT_EQ(summary.max_rr, mx);
  }
}

TEST(TokenSweep, CellCountAndSiteSelection) {
  const oracle::OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  const auto samples = oracle_samples(spec, 3);
  const auto all = token_sweep(m, samples, CorruptionSpec::silence(4));
  EXPECT_EQ(all.cell_count(), 5u * 3u * 12u);
  const std::vector<std::size_t> sites{1, 3};
  const auto some = token_sweep(m, samples, CorruptionSpec::silence(4), sites);
  EXPECT_EQ(some.sites, sites);
  EXPECT_EQ(some.cell_count(), 2u * 3u * 12u);
  const std::vector<std::size_t> bad{9};
  EXPECT_THROW(token_sweep(m, samples, CorruptionSpec::silence(4), bad), Error);
}

TEST(Sweeps, WorkerCountDoesNotChangeResults) {
  std::mt19937_64 rng(47);
  const Model m = testing::random_model(rng);
  std::vector<TraceSample> samples;
  for (int i = 0; i < 12; ++i) {
    TraceSample s{"x" + std::to_string(i), testing::random_sequence(rng, m.config()), 0};
    s.target = argmax(forward(m, s.clean_sequence).logits);
    samples.push_back(s);
  }
  if (auto v = testing::random_valid_sample(rng, m)) {
    v->id = "valid";
    samples.push_back(*v);
  }
  const auto silence = CorruptionSpec::silence(m.config().d_audio);
  const SweepContext ctx{m.config(), silence, "d", {}};
  SweepOptions one, many;
  many.workers = 7;
  EXPECT_EQ(results_to_json(ctx, layer_sweep(m, samples, silence, one)),
            results_to_json(ctx, layer_sweep(m, samples, silence, many)));
  EXPECT_EQ(results_to_json(ctx, token_sweep(m, samples, silence, {}, one)),
            results_to_json(ctx, token_sweep(m, samples, silence, {}, many)));
}

TEST(InterventionSweep, OracleSinglePatch) {
  const oracle::OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  const auto samples = oracle_samples(spec, 5);
  InterventionSpec p;
  p.add({2, samples[0].clean_sequence.last_position()});
  const auto r = intervention_sweep(m, samples, CorruptionSpec::silence(4), p);
  EXPECT_EQ(r.results.size(), 5u);
  EXPECT_NEAR(r.mean.mean, 1.0, 1e-9);
  EXPECT_EQ(r.mean.n_valid, 5u);
}

}  // namespace
}  // namespace ctrace
