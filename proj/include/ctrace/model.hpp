#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ctrace/tensor.hpp"

namespace ctrace {

enum class NormKind { LayerNorm, Identity };

std::string_view to_string(NormKind kind);
NormKind norm_kind_from_string(std::string_view name);

/// Epsilon used by every LayerNorm in the model.
inline constexpr double kNormEps = 1e-5;

struct ModelConfig {
  std::size_t n_layers = 1;
  std::size_t d_model = 1;
  std::size_t n_heads = 1;
  std::size_t d_head = 1;
  std::size_t d_ff = 1;
  std::size_t vocab_size = 2;
  std::size_t d_audio = 1;
  std::size_t max_seq_len = 1;
  NormKind norm_kind = NormKind::LayerNorm;

  /// Throws InvalidSpec unless d_model == n_heads * d_head, counts >= 1, vocab >= 2.
  void validate() const;

  /// Number of residual sites: embeddings plus one per block.
  std::size_t n_sites() const noexcept { return n_layers + 1; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NormParams {
  Vector gamma;
  Vector beta;
};

struct BlockWeights {
  NormParams attn_norm;
  Tensor2 w_q, w_k, w_v, w_o;  // d_model x d_model, bias free
  NormParams mlp_norm;
  Tensor2 w_in;  // d_model x d_ff
  Vector b_in;
  Tensor2 w_out;  // d_ff x d_model
  Vector b_out;
};

struct ModelWeights {
  Tensor2 token_embedding;   // V x d_model
  Tensor2 pos_embedding;     // max_seq_len x d_model
  Tensor2 audio_projection;  // d_audio x d_model
  Vector audio_bias;         // d_model
  std::vector<BlockWeights> blocks;  // blocks[b - 1] produces site b
  NormParams final_norm;
  Tensor2 unembedding;  // d_model x V

  /// All-zero weights with unit norm gains, shaped for config.
  static ModelWeights zeros(const ModelConfig& config);

  /// Throws Shape on any tensor inconsistent with config, Numeric on non-finite entries.
  void validate(const ModelConfig& config) const;
};

/// Immutable, validated pair of config and weights. Safe to share across threads.
class Model {
 public:
  Model(ModelConfig config, ModelWeights weights);

  const ModelConfig& config() const noexcept { return config_; }
  const ModelWeights& weights() const noexcept { return weights_; }

 private:
  ModelConfig config_;
  ModelWeights weights_;
};

enum class Segment { Audio, EarlyPrompt, Object, LatePrompt, Last };

std::string_view to_string(Segment segment);
Segment segment_from_string(std::string_view name);

/// The four textual segments in prompt order.
inline constexpr Segment kTextSegments[] = {Segment::EarlyPrompt, Segment::Object,
                                            Segment::LatePrompt, Segment::Last};

struct TextToken {
  std::size_t token_id = 0;
  friend bool operator==(const TextToken&, const TextToken&) = default;
};

struct AudioFrame {
  Vector features;
  friend bool operator==(const AudioFrame&, const AudioFrame&) = default;
};

struct SequenceElement {
  std::variant<TextToken, AudioFrame> value;
  Segment segment = Segment::EarlyPrompt;

  static SequenceElement text(std::size_t token_id, Segment segment);
  static SequenceElement audio(Vector features);

  bool is_text() const noexcept { return std::holds_alternative<TextToken>(value); }
  bool is_audio() const noexcept { return std::holds_alternative<AudioFrame>(value); }

  friend bool operator==(const SequenceElement&, const SequenceElement&) = default;
};

/// Interleaved audio frames and text tokens. The constructor enforces that the
/// sequence is nonempty, that text and audio carry compatible segment labels,
/// and that exactly one element (the final one, a text token) is `last`.
class MultiModalSequence {
 public:
  MultiModalSequence() = default;
  explicit MultiModalSequence(std::vector<SequenceElement> elements);

  std::span<const SequenceElement> elements() const noexcept { return elements_; }
  const SequenceElement& operator[](std::size_t i) const { return elements_[i]; }
  std::size_t size() const noexcept { return elements_.size(); }
  std::size_t last_position() const noexcept { return elements_.size() - 1; }

  std::size_t audio_frame_count() const;
  std::vector<std::size_t> text_positions() const;

  /// Throws when token ids, feature lengths, or length disagree with config.
  void validate_against(const ModelConfig& config) const;

  /// Copy with every audio frame's features replaced.
  MultiModalSequence with_audio_features(std::span<const double> features) const;

  friend bool operator==(const MultiModalSequence&, const MultiModalSequence&) = default;

 private:
  std::vector<SequenceElement> elements_;
};

/// Residual stream at every (site, position). Site 0 is the embedding
/// output; site s >= 1 is the residual after block s.
class ActivationCache {
 public:
  ActivationCache() = default;
  ActivationCache(std::size_t n_sites, std::size_t n_positions, std::size_t d_model);

  std::size_t n_sites() const noexcept { return sites_.size(); }
  std::size_t n_positions() const noexcept { return sites_.empty() ? 0 : sites_[0].rows(); }
  std::size_t d_model() const noexcept { return sites_.empty() ? 0 : sites_[0].cols(); }

  std::span<const double> at(std::size_t site, std::size_t position) const;
  const Tensor2& site(std::size_t s) const { return sites_.at(s); }
  Tensor2& site(std::size_t s) { return sites_.at(s); }

  friend bool operator==(const ActivationCache&, const ActivationCache&) = default;

 private:
  std::vector<Tensor2> sites_;
};

struct Patch {
  std::size_t site = 0;
  std::size_t position = 0;
  friend auto operator<=>(const Patch&, const Patch&) = default;
};

/// Set of (site, position) hidden states overwritten from a donor cache.
class InterventionSpec {
 public:
  InterventionSpec() = default;
  /// Throws InvalidSpec on duplicate pairs.
  explicit InterventionSpec(std::span<const Patch> patches);

  /// Every textual position (optionally every position) at one site.
  static InterventionSpec whole_site(const MultiModalSequence& seq, std::size_t site,
                                     bool include_audio);
  /// Every position at one site.
  static InterventionSpec all_positions(std::size_t n_positions, std::size_t site);

  /// Returns false when the pair is already present.
  bool add(Patch patch) { return patches_.insert(patch).second; }

  bool empty() const noexcept { return patches_.empty(); }
  std::size_t size() const noexcept { return patches_.size(); }
  const std::set<Patch>& patches() const noexcept { return patches_; }

  /// Throws Range when any site > n_layers or position >= n_positions.
  void validate(std::size_t n_sites, std::size_t n_positions) const;

 private:
  std::set<Patch> patches_;
};

struct ForwardResult {
  Vector logits;  // V, read at the last position
  ActivationCache cache;
};

/// Rows of the embedding output, one per position.
Tensor2 embed(const Model& model, const MultiModalSequence& seq);

/// Forward pass. After computing each site s, every patch (s, i) overwrites
/// the residual at (s, i) with donor->at(s, i) before anything reads it; later
/// blocks then recompute from the patched stream. The returned cache records
/// post-patch values.
ForwardResult forward(const Model& model, const MultiModalSequence& seq,
                      const ActivationCache* donor = nullptr,
                      const InterventionSpec& patches = {});

/// softmax(logits)[target] over the full vocabulary.
double target_probability(std::span<const double> logits, std::size_t target);

}  // namespace ctrace
