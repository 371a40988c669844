#include "ctrace/tracing.hpp"

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace {

void CorruptionSpec::validate(std::size_t d_audio) const {
  if (silence_vector.size() != d_audio)
    throw Error(ErrorKind::Shape, fmt::format("silence vector has length {}, d_audio is {}",
                                              silence_vector.size(), d_audio));
  if (!all_finite(silence_vector)) throw Error(ErrorKind::Numeric, "silence vector is not finite");
}

void TraceSample::validate_against(const ModelConfig& config) const {
  if (target >= config.vocab_size)
    throw Error(ErrorKind::Range, fmt::format("sample '{}': target {} >= vocab_size {}", id, target,
                                              config.vocab_size));
  clean_sequence.validate_against(config);
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Valid: return "valid";
    case Verdict::ExcludedCleanWrong: return "excluded_clean_wrong";
    case Verdict::ExcludedCorruptRight: return "excluded_corrupt_right";
    case Verdict::ExcludedNoGap: return "excluded_no_gap";
  }
  return "unknown";
}

CorruptedSequence corrupt(const MultiModalSequence& seq, const CorruptionSpec& corruption) {
  for (const auto& e : seq.elements())
    if (const auto* a = std::get_if<AudioFrame>(&e.value); a && a->features.size() != corruption.silence_vector.size())
      throw Error(ErrorKind::Shape, fmt::format("silence vector has length {}, audio frames have {}",
                                                corruption.silence_vector.size(), a->features.size()));
  return {seq.with_audio_features(corruption.silence_vector), seq.audio_frame_count() == 0};
}

double recovery_rate(double p_clean, double p_corrupted, double p_patched, double epsilon_gap) {
  const double gap = p_clean - p_corrupted;
  if (!(gap > epsilon_gap))
    throw Error(ErrorKind::NoGap, fmt::format("P_clean - P_corrupted = {} is not above {}", gap, epsilon_gap));
  return (p_patched - p_corrupted) / gap;
}

Verdict validate(double p_clean, double p_corrupted, std::size_t clean_argmax, std::size_t corrupt_argmax,
                 std::size_t target, double epsilon_gap) {
  if (clean_argmax != target) return Verdict::ExcludedCleanWrong;
  if (corrupt_argmax == target) return Verdict::ExcludedCorruptRight;
  if (!(p_clean - p_corrupted > epsilon_gap)) return Verdict::ExcludedNoGap;
  return Verdict::Valid;
}

PreparedSample::PreparedSample(const Model& model, const TraceSample& sample,
                               const CorruptionSpec& corruption, double epsilon_gap)
    : sample_(sample), epsilon_gap_(epsilon_gap) {
  sample_.validate_against(model.config());
  corruption.validate(model.config().d_audio);
  corrupted_ = corrupt(sample_.clean_sequence, corruption).sequence;

  ForwardResult clean = forward(model, sample_.clean_sequence);
  clean_cache_ = std::move(clean.cache);
  clean_logits_ = std::move(clean.logits);
  corrupted_logits_ = forward(model, corrupted_).logits;

  p_clean_ = target_probability(clean_logits_, sample_.target);
  p_corrupted_ = target_probability(corrupted_logits_, sample_.target);
  clean_argmax_ = argmax(clean_logits_);
  corrupt_argmax_ = argmax(corrupted_logits_);
  verdict_ = validate(p_clean_, p_corrupted_, clean_argmax_, corrupt_argmax_, sample_.target, epsilon_gap_);
}

TraceResult trace_patched(const Model& model, const PreparedSample& prepared, const InterventionSpec& patches) {
  const ForwardResult patched = forward(model, prepared.corrupted_sequence(), &prepared.clean_cache(), patches);
  TraceResult r;
  r.p_clean = prepared.p_clean();
  r.p_corrupted = prepared.p_corrupted();
  r.p_patched = target_probability(patched.logits, prepared.sample().target);
  r.verdict = prepared.verdict();
  if (prepared.valid())
    r.rr = recovery_rate(r.p_clean, r.p_corrupted, r.p_patched, prepared.epsilon_gap());
  return r;
}

TraceResult trace_one(const Model& model, const TraceSample& sample, const CorruptionSpec& corruption,
                      const InterventionSpec& patches, double epsilon_gap) {
  const PreparedSample prepared(model, sample, corruption, epsilon_gap);
  patches.validate(model.config().n_sites(), sample.clean_sequence.size());
  return trace_patched(model, prepared, patches);
}

}  // namespace ctrace
