#include "ctrace/oracle.hpp"

#include <cmath>
#include <random>

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace::oracle {

void OracleSpec::validate() const {
  auto bad = [](const std::string& msg) { return Error(ErrorKind::InvalidSpec, msg); };
  if (n_layers < 1) throw bad("oracle needs at least one layer");
  if (copy_block < 1 || copy_block > n_layers)
    throw bad(fmt::format("copy block {} outside 1..{}", copy_block, n_layers));
  if (n_attributes < 2) throw bad(fmt::format("need at least 2 attributes, got {}", n_attributes));
  if (!(attention_gain >= 10.0)) throw bad(fmt::format("attention gain {} < 10", attention_gain));
  if (!(readout_gain >= 5.0)) throw bad(fmt::format("readout gain {} < 5", readout_gain));
  if (!std::isfinite(attention_gain) || !std::isfinite(readout_gain)) throw bad("gains must be finite");
  if (n_audio_frames < 1) throw bad("need at least one audio frame");
}

std::size_t sequence_length(const OracleSpec& spec) {
  return spec.n_audio_frames + kEarlyPromptTokens + spec.n_attributes + kLatePromptTokens + 1;
}

ModelConfig oracle_config(const OracleSpec& spec) {
  spec.validate();
  ModelConfig c;
  c.n_layers = spec.n_layers;
  c.d_model = kFirstContentDim + spec.n_attributes;
  c.n_heads = 1;
  c.d_head = c.d_model;
  c.d_ff = 1;
  c.vocab_size = kFirstAnswerToken + spec.n_attributes;
  c.d_audio = spec.n_attributes;
  c.max_seq_len = sequence_length(spec);
  c.norm_kind = NormKind::Identity;
  return c;
}

Model build_oracle(const OracleSpec& spec) {
  const ModelConfig cfg = oracle_config(spec);
  const std::size_t k_attr = spec.n_attributes;
  ModelWeights w = ModelWeights::zeros(cfg);

  w.token_embedding(kQueryToken, kQueryMarkerDim) = 1.0;
  for (std::size_t k = 0; k < k_attr; ++k) w.audio_projection(k, kFirstContentDim + k) = 1.0;
  w.audio_bias[kAudioMarkerDim] = 1.0;

  // Scores are divided by sqrt(d_head); fold that into W_q so the query token
  // scores exactly attention_gain against every audio frame.
  BlockWeights& b = w.blocks[spec.copy_block - 1];
  b.w_q(kQueryMarkerDim, kAudioMarkerDim) = spec.attention_gain * std::sqrt(static_cast<double>(cfg.d_head));
  b.w_k(kAudioMarkerDim, kAudioMarkerDim) = 1.0;
  for (std::size_t k = 0; k < k_attr; ++k) {
    const std::size_t d = kFirstContentDim + k;
    b.w_v(d, d) = 1.0;
    b.w_o(d, d) = 1.0;
  }

  for (std::size_t k = 0; k < k_attr; ++k)
    w.unembedding(kFirstContentDim + k, answer_token(k)) = spec.readout_gain;

  return Model(cfg, std::move(w));
}

MultiModalSequence make_sequence(const OracleSpec& spec, std::size_t attribute) {
  if (attribute >= spec.n_attributes)
    throw Error(ErrorKind::Range, fmt::format("attribute {} >= {}", attribute, spec.n_attributes));
  std::vector<SequenceElement> e;
  Vector features(spec.n_attributes, 0.0);
  features[attribute] = 1.0;
  for (std::size_t i = 0; i < spec.n_audio_frames; ++i) e.push_back(SequenceElement::audio(features));
  for (std::size_t t = 0; t < kEarlyPromptTokens; ++t) e.push_back(SequenceElement::text(t, Segment::EarlyPrompt));
  for (std::size_t k = 0; k < spec.n_attributes; ++k) e.push_back(SequenceElement::text(answer_token(k), Segment::Object));
  for (std::size_t t = 0; t < kLatePromptTokens; ++t)
    e.push_back(SequenceElement::text(kEarlyPromptTokens + t, Segment::LatePrompt));
  e.push_back(SequenceElement::text(kQueryToken, Segment::Last));
  return MultiModalSequence(std::move(e));
}

std::vector<SyntheticSample> gen_dataset(const OracleSpec& spec, std::size_t n_samples, bool stratified) {
  spec.validate();
  if (n_samples < 1) throw Error(ErrorKind::InvalidSpec, "n_samples must be >= 1");
  std::vector<SyntheticSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::size_t attribute = i % spec.n_attributes;
    if (!stratified) {
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(std::uint64_t{i} >> 32)};
      std::mt19937_64 rng(seq);
      attribute = static_cast<std::size_t>(rng() % spec.n_attributes);
    }
    out.push_back({make_sequence(spec, attribute), answer_token(attribute), attribute});
  }
  return out;
}

Dataset to_dataset(const OracleSpec& spec, const std::vector<SyntheticSample>& samples) {
  Dataset ds;
  ds.header.d_audio = spec.n_attributes;
  ds.header.description = fmt::format(
      "copy-circuit oracle: layers={} copy_block={} attributes={} audio_frames={} seed={}", spec.n_layers,
      spec.copy_block, spec.n_attributes, spec.n_audio_frames, spec.seed);
  for (std::size_t i = 0; i < samples.size(); ++i)
    ds.samples.push_back({fmt::format("oracle-{:06}", i), samples[i].clean_sequence, samples[i].target});
  return ds;
}

std::vector<double> expected_layer_map(const OracleSpec& spec) {
  spec.validate();
  std::vector<double> out(spec.n_layers + 1, 0.0);
  for (std::size_t s = spec.copy_block; s <= spec.n_layers; ++s) out[s] = 1.0;
  return out;
}

TokenMap expected_token_map(const OracleSpec& spec) {
  spec.validate();
  const MultiModalSequence seq = make_sequence(spec, 0);
  TokenMap map;
  map.positions = seq.text_positions();
  for (std::size_t p : map.positions) map.segments.push_back(seq[p].segment);
  map.rr.assign(spec.n_layers + 1, std::vector<double>(map.positions.size(), 0.0));
  for (std::size_t s = spec.copy_block; s <= spec.n_layers; ++s) map.rr[s].back() = 1.0;
  return map;
}

}  // namespace ctrace::oracle
