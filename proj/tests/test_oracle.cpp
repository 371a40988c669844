#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "ctrace/error.hpp"
#include "ctrace/oracle.hpp"
#include "ctrace/sweep.hpp"

namespace ctrace {
namespace {

using oracle::OracleSpec;

// Reference values from 30-digit evaluation of the oracle forward pass.
constexpr double kPCleanK4 = 0.99950085004770759;      // V = 12
constexpr double kClosedFormK4 = 0.99950085004771319;  // e^10 / (e^10 + 11)
constexpr double kPCleanK2 = 0.99959156751738802;      // V = 10
constexpr double kClosedFormK2 = 0.99959156751739184;  // e^10 / (e^10 + 9)
constexpr double kHalfSignalP = 0.93099691354261477;   // e^5 / (e^5 + 11)

TraceSample as_trace(const oracle::SyntheticSample& s) { return {"s", s.clean_sequence, s.target}; }

TEST(Oracle, CleanProbabilityMatchesClosedForm) {
  const OracleSpec spec;
  const Model m = oracle::build_oracle(spec);
  for (std::size_t k = 0; k < spec.n_attributes; ++k) {
    const auto seq = oracle::make_sequence(spec, k);
    const double p = target_probability(forward(m, seq).logits, oracle::answer_token(k));
    EXPECT_NEAR(p, kPCleanK4, 1e-15);
    EXPECT_NEAR(p, kClosedFormK4, 1e-9);
  }
  OracleSpec k2;
  k2.n_attributes = 2;
  const Model m2 = oracle::build_oracle(k2);
  const double p2 = target_probability(forward(m2, oracle::make_sequence(k2, 1)).logits, oracle::answer_token(1));
  EXPECT_NEAR(p2, kPCleanK2, 1e-15);
  EXPECT_NEAR(p2, kClosedFormK2, 1e-9);
}

TEST(Oracle, CorruptedProbabilityIsUniform) {
  for (std::size_t k_attr : {2u, 4u, 6u}) {
    OracleSpec spec;
    spec.n_attributes = k_attr;
    const Model m = oracle::build_oracle(spec);
    const double v = static_cast<double>(m.config().vocab_size);
    for (const auto& s : oracle::gen_dataset(spec, 6)) {
      const auto c = corrupt(s.clean_sequence, CorruptionSpec::silence(k_attr));
      const Vector logits = forward(m, c.sequence).logits;
      EXPECT_NEAR(target_probability(logits, s.target), 1.0 / v, 1e-12);
      EXPECT_LT(argmax(logits), oracle::kFirstAnswerToken);
    }
  }
}

TEST(Oracle, CleanArgmaxIsTheAttribute) {
  OracleSpec spec;
  spec.n_attributes = 7;
  const Model m = oracle::build_oracle(spec);
  for (std::size_t k = 0; k < spec.n_attributes; ++k)
    EXPECT_EQ(argmax(forward(m, oracle::make_sequence(spec, k)).logits), oracle::answer_token(k));
}

TEST(Oracle, GenerationIsDeterministic) {
  OracleSpec spec;
  spec.seed = 77;
  const auto a = oracle::gen_dataset(spec, 50);
  const auto b = oracle::gen_dataset(spec, 50);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].attribute, b[i].attribute);
    EXPECT_EQ(a[i].clean_sequence, b[i].clean_sequence);
    EXPECT_EQ(a[i].target, oracle::answer_token(a[i].attribute));
  }
  // Prefixes agree: a sample depends only on (seed, index).
  const auto c = oracle::gen_dataset(spec, 10);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i].attribute, a[i].attribute);
  spec.seed = 78;
  const auto d = oracle::gen_dataset(spec, 50);
  std::size_t same = 0;
  for (std::size_t i = 0; i < d.size(); ++i) same += d[i].attribute == a[i].attribute;
  EXPECT_LT(same, 50u);
}

TEST(Oracle, StratifiedCountsAreBalanced) {
  OracleSpec spec;
  spec.n_attributes = 3;
  std::map<std::size_t, int> counts;
  for (const auto& s : oracle::gen_dataset(spec, 30, true)) ++counts[s.attribute];
  EXPECT_EQ(counts, (std::map<std::size_t, int>{{0, 10}, {1, 10}, {2, 10}}));
}

TEST(Oracle, SpecValidation) {
  auto kind = [](OracleSpec s) {
    try {
      oracle::build_oracle(s);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  OracleSpec s;
  s.copy_block = 5;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
  s = {};
  s.copy_block = 0;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
  s = {};
  s.n_attributes = 1;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
  s = {};
  s.attention_gain = 9.0;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
  s = {};
  s.readout_gain = 4.0;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
  s = {};
  s.n_audio_frames = 0;
  EXPECT_EQ(kind(s), ErrorKind::InvalidSpec);
}

TEST(Oracle, ExpectedMapsByExample) {
  OracleSpec spec;
  EXPECT_EQ(oracle::expected_layer_map(spec), (std::vector<double>{0, 0, 1, 1, 1}));
  spec.copy_block = 1;
  EXPECT_EQ(oracle::expected_layer_map(spec), (std::vector<double>{0, 1, 1, 1, 1}));
  spec.copy_block = 4;
  EXPECT_EQ(oracle::expected_layer_map(spec), (std::vector<double>{0, 0, 0, 0, 1}));

  spec.copy_block = 2;
  const auto map = oracle::expected_token_map(spec);
  ASSERT_EQ(map.positions.size(), 12u);  // 4 early + 4 object + 3 late + last
  EXPECT_EQ(map.positions.front(), 1u);
  EXPECT_EQ(map.positions.back(), 12u);
  EXPECT_EQ(map.segments.back(), Segment::Last);
  double total = 0;
  for (const auto& row : map.rr)
    for (double v : row) total += v;
  EXPECT_EQ(total, 3.0);
  EXPECT_EQ(map.rr[1].back(), 0.0);
  EXPECT_EQ(map.rr[2].back(), 1.0);
}

TEST(Oracle, EngineMatchesAnalyticMapsAcrossShapes) {
  for (std::size_t layers = 1; layers <= 4; ++layers)
    for (std::size_t copy = 1; copy <= layers; ++copy)
      for (std::size_t k_attr : {2u, 4u}) {
        OracleSpec spec;
        spec.n_layers = layers;
        spec.copy_block = copy;
        spec.n_attributes = k_attr;
        const Model m = oracle::build_oracle(spec);
        std::vector<TraceSample> samples;
        for (const auto& s : oracle::gen_dataset(spec, 2 * k_attr, true)) samples.push_back(as_trace(s));
        const auto silence = CorruptionSpec::silence(k_attr);

        const auto layer = layer_sweep(m, samples, silence);
        ASSERT_EQ(layer.n_valid, samples.size());
        const auto expected = oracle::expected_layer_map(spec);
        for (std::size_t s = 0; s < expected.size(); ++s)
          EXPECT_NEAR(layer.per_site[s].mean, expected[s], 1e-6) << layers << "/" << copy << " site " << s;

        const auto tokens = token_sweep(m, samples, silence);
        const auto map = oracle::expected_token_map(spec);
        ASSERT_TRUE(tokens.grid);
        EXPECT_EQ(tokens.grid->positions, map.positions);
        for (std::size_t s = 0; s < map.rr.size(); ++s)
          for (std::size_t k = 0; k < map.positions.size(); ++k)
            EXPECT_NEAR(tokens.grid->mean_rr[s][k], map.rr[s][k], 1e-6);
      }
}

TEST(Oracle, MultipleFramesShareTheSignal) {
  OracleSpec spec;
  spec.n_audio_frames = 2;
  const Model m = oracle::build_oracle(spec);
  const auto s = oracle::gen_dataset(spec, 1, true).front();
  const TraceSample sample = as_trace(s);
  const auto silence = CorruptionSpec::silence(spec.n_attributes);

  // Restoring one of two frames before the copy block carries half the content.
  InterventionSpec one;
  one.add({0, 0});
  const TraceResult r = trace_one(m, sample, silence, one);
  EXPECT_NEAR(r.p_patched, kHalfSignalP, 1e-9);

  InterventionSpec both;
  both.add({0, 0});
  both.add({0, 1});
  EXPECT_NEAR(*trace_one(m, sample, silence, both).rr, 1.0, 1e-9);
}

}  // namespace
}  // namespace ctrace
