#include "ctrace/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace {

std::string_view to_string(NormKind kind) {
  return kind == NormKind::LayerNorm ? "layer_norm" : "identity";
}

NormKind norm_kind_from_string(std::string_view name) {
  if (name == "layer_norm") return NormKind::LayerNorm;
  if (name == "identity") return NormKind::Identity;
  throw Error(ErrorKind::Format, fmt::format("unknown norm_kind '{}'", name));
}

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> counts[] = {
      {"n_layers", n_layers}, {"d_model", d_model},         {"n_heads", n_heads},
      {"d_head", d_head},     {"d_ff", d_ff},               {"d_audio", d_audio},
      {"max_seq_len", max_seq_len}};
  for (const auto& [name, value] : counts)
    if (value < 1) throw Error(ErrorKind::InvalidSpec, fmt::format("{} must be >= 1", name));
  if (vocab_size < 2) throw Error(ErrorKind::InvalidSpec, "vocab_size must be >= 2");
  if (d_model != n_heads * d_head)
    throw Error(ErrorKind::InvalidSpec,
                fmt::format("d_model ({}) != n_heads ({}) * d_head ({})", d_model, n_heads, d_head));
}

namespace {

NormParams unit_norm(std::size_t n) { return {Vector(n, 1.0), Vector(n, 0.0)}; }

void expect_shape(const Tensor2& t, std::size_t rows, std::size_t cols, std::string_view name) {
  if (t.rows() != rows || t.cols() != cols)
    throw Error(ErrorKind::Shape, fmt::format("{} has shape {}, expected [{}x{}]", name,
                                              t.shape_string(), rows, cols));
  if (!t.all_finite()) throw Error(ErrorKind::Numeric, fmt::format("{} has non-finite entries", name));
}

void expect_len(const Vector& v, std::size_t n, std::string_view name) {
  if (v.size() != n)
    throw Error(ErrorKind::Shape, fmt::format("{} has length {}, expected {}", name, v.size(), n));
  if (!all_finite(v)) throw Error(ErrorKind::Numeric, fmt::format("{} has non-finite entries", name));
}

void expect_norm(const NormParams& p, std::size_t n, std::string_view name) {
  expect_len(p.gamma, n, fmt::format("{}.gamma", name));
  expect_len(p.beta, n, fmt::format("{}.beta", name));
}

}  // namespace

ModelWeights ModelWeights::zeros(const ModelConfig& config) {
  const std::size_t d = config.d_model;
  ModelWeights w;
  w.token_embedding = Tensor2(config.vocab_size, d);
  w.pos_embedding = Tensor2(config.max_seq_len, d);
  w.audio_projection = Tensor2(config.d_audio, d);
  w.audio_bias = Vector(d, 0.0);
  w.blocks.resize(config.n_layers);
  for (auto& b : w.blocks) {
    b.attn_norm = unit_norm(d);
    b.w_q = b.w_k = b.w_v = b.w_o = Tensor2(d, d);
    b.mlp_norm = unit_norm(d);
    b.w_in = Tensor2(d, config.d_ff);
    b.b_in = Vector(config.d_ff, 0.0);
    b.w_out = Tensor2(config.d_ff, d);
    b.b_out = Vector(d, 0.0);
  }
  w.final_norm = unit_norm(d);
  w.unembedding = Tensor2(d, config.vocab_size);
  return w;
}

void ModelWeights::validate(const ModelConfig& config) const {
  const std::size_t d = config.d_model;
  expect_shape(token_embedding, config.vocab_size, d, "token_embedding");
  expect_shape(pos_embedding, config.max_seq_len, d, "pos_embedding");
  expect_shape(audio_projection, config.d_audio, d, "audio_projection");
  expect_len(audio_bias, d, "audio_bias");
  if (blocks.size() != config.n_layers)
    throw Error(ErrorKind::Shape,
                fmt::format("{} blocks present, config has n_layers={}", blocks.size(), config.n_layers));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = fmt::format("block.{}", i + 1);
    expect_norm(b.attn_norm, d, p + ".attn_norm");
    expect_shape(b.w_q, d, d, p + ".w_q");
    expect_shape(b.w_k, d, d, p + ".w_k");
    expect_shape(b.w_v, d, d, p + ".w_v");
    expect_shape(b.w_o, d, d, p + ".w_o");
    expect_norm(b.mlp_norm, d, p + ".mlp_norm");
    expect_shape(b.w_in, d, config.d_ff, p + ".w_in");
    expect_len(b.b_in, config.d_ff, p + ".b_in");
    expect_shape(b.w_out, config.d_ff, d, p + ".w_out");
    expect_len(b.b_out, d, p + ".b_out");
  }
  expect_norm(final_norm, d, "final_norm");
  expect_shape(unembedding, d, config.vocab_size, "unembedding");
}

Model::Model(ModelConfig config, ModelWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  weights_.validate(config_);
}

std::string_view to_string(Segment segment) {
  switch (segment) {
    case Segment::Audio: return "audio";
    case Segment::EarlyPrompt: return "early_prompt";
    case Segment::Object: return "object";
    case Segment::LatePrompt: return "late_prompt";
    case Segment::Last: return "last";
  }
  return "unknown";
}

Segment segment_from_string(std::string_view name) {
  for (Segment s : {Segment::Audio, Segment::EarlyPrompt, Segment::Object, Segment::LatePrompt,
                    Segment::Last})
    if (to_string(s) == name) return s;
  throw Error(ErrorKind::Format, fmt::format("unknown segment '{}'", name));
}

SequenceElement SequenceElement::text(std::size_t token_id, Segment segment) {
  return {TextToken{token_id}, segment};
}

SequenceElement SequenceElement::audio(Vector features) {
  return {AudioFrame{std::move(features)}, Segment::Audio};
}

MultiModalSequence::MultiModalSequence(std::vector<SequenceElement> elements)
    : elements_(std::move(elements)) {
  if (elements_.empty()) throw Error(ErrorKind::Format, "sequence is empty");
  std::size_t n_last = 0;
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    const auto& e = elements_[i];
    if (e.is_audio() != (e.segment == Segment::Audio))
      throw Error(ErrorKind::Format,
                  fmt::format("element {}: {} element labelled with segment '{}'", i,
                              e.is_audio() ? "audio" : "text", to_string(e.segment)));
    if (e.segment == Segment::Last) ++n_last;
  }
  if (n_last != 1)
    throw Error(ErrorKind::Format,
                fmt::format("sequence must contain exactly one 'last' element, found {}", n_last));
  if (elements_.back().segment != Segment::Last)
    throw Error(ErrorKind::Format, "the 'last' element must be the final element");
}

std::size_t MultiModalSequence::audio_frame_count() const {
  return static_cast<std::size_t>(std::count_if(elements_.begin(), elements_.end(),
                                                [](const auto& e) { return e.is_audio(); }));
}

std::vector<std::size_t> MultiModalSequence::text_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < elements_.size(); ++i)
    if (elements_[i].is_text()) out.push_back(i);
  return out;
}

void MultiModalSequence::validate_against(const ModelConfig& config) const {
  if (elements_.size() > config.max_seq_len)
    throw Error(ErrorKind::Range, fmt::format("sequence length {} exceeds max_seq_len {}",
                                              elements_.size(), config.max_seq_len));
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (const auto* t = std::get_if<TextToken>(&elements_[i].value)) {
      if (t->token_id >= config.vocab_size)
        throw Error(ErrorKind::Range, fmt::format("element {}: token id {} >= vocab_size {}", i,
                                                  t->token_id, config.vocab_size));
    } else {
      const auto& f = std::get<AudioFrame>(elements_[i].value).features;
      if (f.size() != config.d_audio)
        throw Error(ErrorKind::Shape, fmt::format("element {}: audio frame has {} features, d_audio is {}",
                                                  i, f.size(), config.d_audio));
      if (!all_finite(f))
        throw Error(ErrorKind::Numeric, fmt::format("element {}: non-finite audio feature", i));
    }
  }
}

MultiModalSequence MultiModalSequence::with_audio_features(std::span<const double> features) const {
  MultiModalSequence out = *this;
  for (auto& e : out.elements_)
    if (auto* a = std::get_if<AudioFrame>(&e.value)) a->features.assign(features.begin(), features.end());
  return out;
}

ActivationCache::ActivationCache(std::size_t n_sites, std::size_t n_positions, std::size_t d_model)
    : sites_(n_sites, Tensor2(n_positions, d_model)) {}

std::span<const double> ActivationCache::at(std::size_t site, std::size_t position) const {
  if (site >= sites_.size() || position >= n_positions())
    throw Error(ErrorKind::Range, fmt::format("cache index (site {}, position {}) out of range ({} x {})",
                                              site, position, sites_.size(), n_positions()));
  return sites_[site].row(position);
}

InterventionSpec::InterventionSpec(std::span<const Patch> patches) {
  for (const Patch& p : patches)
    if (!add(p))
      throw Error(ErrorKind::InvalidSpec,
                  fmt::format("duplicate patch (site {}, position {})", p.site, p.position));
}

InterventionSpec InterventionSpec::whole_site(const MultiModalSequence& seq, std::size_t site,
                                              bool include_audio) {
  InterventionSpec spec;
  for (std::size_t i = 0; i < seq.size(); ++i)
    if (include_audio || seq[i].is_text()) spec.add({site, i});
  return spec;
}

InterventionSpec InterventionSpec::all_positions(std::size_t n_positions, std::size_t site) {
  InterventionSpec spec;
  for (std::size_t i = 0; i < n_positions; ++i) spec.add({site, i});
  return spec;
}

void InterventionSpec::validate(std::size_t n_sites, std::size_t n_positions) const {
  for (const Patch& p : patches_)
    if (p.site >= n_sites || p.position >= n_positions)
      throw Error(ErrorKind::Range,
                  fmt::format("patch (site {}, position {}) out of range: {} sites, {} positions",
                              p.site, p.position, n_sites, n_positions));
}

Tensor2 embed(const Model& model, const MultiModalSequence& seq) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  seq.validate_against(cfg);
  Tensor2 x(seq.size(), cfg.d_model);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto row = x.row(i);
    auto pos = w.pos_embedding.row(i);
    if (const auto* t = std::get_if<TextToken>(&seq[i].value)) {
      auto tok = w.token_embedding.row(t->token_id);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = tok[j] + pos[j];
    } else {
      const auto proj = vecmat(std::get<AudioFrame>(seq[i].value).features, w.audio_projection);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = proj[j] + w.audio_bias[j] + pos[j];
    }
  }
  return x;
}

namespace {

Vector apply_norm(NormKind kind, const NormParams& p, std::span<const double> x) {
  if (kind == NormKind::Identity) return Vector(x.begin(), x.end());
  return layer_norm(x, p.gamma, p.beta, kNormEps);
}

Tensor2 norm_rows(NormKind kind, const NormParams& p, const Tensor2& x) {
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Vector r = apply_norm(kind, p, x.row(i));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// Causal multi-head self-attention over already-normalized rows.
Tensor2 attention(const ModelConfig& cfg, const BlockWeights& b, const Tensor2& h) {
  const Tensor2 q = matmul(h, b.w_q);
  const Tensor2 k = matmul(h, b.w_k);
  const Tensor2 v = matmul(h, b.w_v);
  const std::size_t n = h.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
  Tensor2 heads(n, cfg.d_model);
  Vector scores;
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    const std::size_t off = head * cfg.d_head;
    for (std::size_t i = 0; i < n; ++i) {
      scores.assign(i + 1, 0.0);
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cfg.d_head; ++c) dot += q(i, off + c) * k(j, off + c);
        scores[j] = dot * scale;
      }
      const Vector weights = softmax(scores);
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < cfg.d_head; ++c) heads(i, off + c) += weights[j] * v(j, off + c);
    }
  }
  return matmul(heads, b.w_o);
}

Tensor2 mlp(const BlockWeights& b, const Tensor2& h) {
  Tensor2 hidden = matmul(h, b.w_in);
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    auto row = hidden.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = gelu(row[j] + b.b_in[j]);
  }
  Tensor2 out = matmul(hidden, b.w_out);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.b_out[j];
  }
  return out;
}

void add_into(Tensor2& x, const Tensor2& delta) {
  auto dst = x.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void apply_patches(Tensor2& x, std::size_t site, std::span<const std::size_t> positions,
                   const ActivationCache& donor) {
  for (std::size_t pos : positions) {
    auto src = donor.at(site, pos);
    std::copy(src.begin(), src.end(), x.row(pos).begin());
  }
}

void check_finite(const Tensor2& x, std::size_t site) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    if (!all_finite(x.row(i)))
      throw Error(ErrorKind::Numeric, fmt::format("non-finite hidden state at site {}, position {}", site, i));
}

}  // namespace

ForwardResult forward(const Model& model, const MultiModalSequence& seq, const ActivationCache* donor,
                      const InterventionSpec& patches) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  const std::size_t n = seq.size();

  std::vector<std::vector<std::size_t>> by_site(cfg.n_sites());
  if (!patches.empty()) {
    if (donor == nullptr) throw Error(ErrorKind::InvalidSpec, "patches given without a donor cache");
    if (donor->n_sites() != cfg.n_sites() || donor->n_positions() != n || donor->d_model() != cfg.d_model)
      throw Error(ErrorKind::Shape,
                  fmt::format("donor cache is {} sites x {} positions x {}, run needs {} x {} x {}",
                              donor->n_sites(), donor->n_positions(), donor->d_model(), cfg.n_sites(), n,
                              cfg.d_model));
    patches.validate(cfg.n_sites(), n);
    for (const Patch& p : patches.patches()) by_site[p.site].push_back(p.position);
  }

  ForwardResult result;
  result.cache = ActivationCache(cfg.n_sites(), n, cfg.d_model);

  Tensor2 x = embed(model, seq);
  if (!by_site[0].empty()) apply_patches(x, 0, by_site[0], *donor);
  check_finite(x, 0);
  result.cache.site(0) = x;

  for (std::size_t s = 1; s <= cfg.n_layers; ++s) {
    const BlockWeights& b = w.blocks[s - 1];
    add_into(x, attention(cfg, b, norm_rows(cfg.norm_kind, b.attn_norm, x)));
    add_into(x, mlp(b, norm_rows(cfg.norm_kind, b.mlp_norm, x)));
    if (!by_site[s].empty()) apply_patches(x, s, by_site[s], *donor);
    check_finite(x, s);
    result.cache.site(s) = x;
  }

  const Vector final_state = apply_norm(cfg.norm_kind, w.final_norm, x.row(n - 1));
  result.logits = vecmat(final_state, w.unembedding);
  if (!all_finite(result.logits)) throw Error(ErrorKind::Numeric, "non-finite logits");
  return result;
}

double target_probability(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size())
    throw Error(ErrorKind::Range,
                fmt::format("target {} out of range for vocabulary of {}", target, logits.size()));
  return softmax(logits)[target];
}

}  // namespace ctrace
