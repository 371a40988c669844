#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctrace/dataset_io.hpp"
#include "ctrace/model.hpp"

namespace ctrace::oracle {

/// Parameters of the analytic copy-circuit model. A single attention head in
/// block `copy_block` moves the audio-encoded attribute into the last token;
/// every other block is zero, so the causal map is known exactly.
struct OracleSpec {
  std::size_t n_layers = 4;
  std::size_t copy_block = 2;
  std::size_t n_attributes = 4;
  double attention_gain = 30.0;  // >= 10 keeps attention saturated below 1e-9 error
  double readout_gain = 10.0;    // >= 5
  std::size_t n_audio_frames = 1;
  std::uint64_t seed = 0;

  /// Throws InvalidSpec unless 1 <= copy_block <= n_layers, K >= 2,
  /// attention_gain >= 10, readout_gain >= 5 and n_audio_frames >= 1.
  void validate() const;
};

// Fixed prompt template. Token ids: early prompt 0..3, late prompt 4..6, the
// final query token 7, then one answer token per attribute starting at 8.
// The object segment lists every answer token in order.
inline constexpr std::size_t kEarlyPromptTokens = 4;
inline constexpr std::size_t kLatePromptTokens = 3;
inline constexpr std::size_t kQueryToken = kEarlyPromptTokens + kLatePromptTokens;
inline constexpr std::size_t kFirstAnswerToken = kQueryToken + 1;

// Residual dimensions.
inline constexpr std::size_t kQueryMarkerDim = 0;
inline constexpr std::size_t kAudioMarkerDim = 1;
inline constexpr std::size_t kFirstContentDim = 2;

inline std::size_t answer_token(std::size_t attribute) { return kFirstAnswerToken + attribute; }

std::size_t sequence_length(const OracleSpec& spec);

ModelConfig oracle_config(const OracleSpec& spec);
Model build_oracle(const OracleSpec& spec);

struct SyntheticSample {
  MultiModalSequence clean_sequence;
  std::size_t target = 0;
  std::size_t attribute = 0;
};

/// Clean sequence for one attribute: audio frames, early prompt, object
/// tokens, late prompt, query token.
MultiModalSequence make_sequence(const OracleSpec& spec, std::size_t attribute);

/// Attributes come from a PRNG keyed by (seed, sample index), or cycle
/// 0..K-1 when stratified. Deterministic in (spec, n_samples, stratified).
std::vector<SyntheticSample> gen_dataset(const OracleSpec& spec, std::size_t n_samples,
                                         bool stratified = false);

/// Wraps generated samples as a tracing dataset with ids "oracle-<index>".
Dataset to_dataset(const OracleSpec& spec, const std::vector<SyntheticSample>& samples);

/// Expected layer-wise RR per site 0..L: 0 before copy_block, 1 from it on.
std::vector<double> expected_layer_map(const OracleSpec& spec);

struct TokenMap {
  std::vector<std::size_t> positions;  // textual positions of the template
  std::vector<Segment> segments;       // segment of each position
  std::vector<std::vector<double>> rr; // [site][k] for positions[k]
};

/// Expected single-patch RR: 1 at (site >= copy_block, last position), 0 elsewhere.
TokenMap expected_token_map(const OracleSpec& spec);

}  // namespace ctrace::oracle
