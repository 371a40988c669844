#include "ctrace/weights_io.hpp"

#include <bit>
#include <fstream>
#include <fmt/ranges.h>
#include <map>

#include <fmt/core.h>

#include "ctrace/error.hpp"

namespace ctrace {

using nlohmann::json;

namespace {

struct TensorSlot {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
};

std::vector<TensorSlot> tensor_slots(ModelWeights& w) {
  std::vector<TensorSlot> slots;
  auto mat = [&](std::string name, Tensor2& t) {
    slots.push_back({std::move(name), {t.rows(), t.cols()}, t.data()});
  };
  auto vec = [&](std::string name, Vector& v) {
    slots.push_back({std::move(name), {v.size()}, std::span<double>(v)});
  };
  mat("token_embedding", w.token_embedding);
  mat("pos_embedding", w.pos_embedding);
  mat("audio_projection", w.audio_projection);
  vec("audio_bias", w.audio_bias);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string p = fmt::format("block.{}.", i + 1);
    vec(p + "attn_norm.gamma", b.attn_norm.gamma);
    vec(p + "attn_norm.beta", b.attn_norm.beta);
    mat(p + "w_q", b.w_q);
    mat(p + "w_k", b.w_k);
    mat(p + "w_v", b.w_v);
    mat(p + "w_o", b.w_o);
    vec(p + "mlp_norm.gamma", b.mlp_norm.gamma);
    vec(p + "mlp_norm.beta", b.mlp_norm.beta);
    mat(p + "w_in", b.w_in);
    vec(p + "b_in", b.b_in);
    mat(p + "w_out", b.w_out);
    vec(p + "b_out", b.b_out);
  }
  vec("final_norm.gamma", w.final_norm.gamma);
  vec("final_norm.beta", w.final_norm.beta);
  mat("unembedding", w.unembedding);
  return slots;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

Error format_error(const std::string& msg) { return Error(ErrorKind::Format, msg); }

std::size_t count_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned())
    throw format_error(fmt::format("config field '{}' missing or not a non-negative integer", key));
  return j.at(key).get<std::size_t>();
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  return json{{"n_layers", c.n_layers},   {"d_model", c.d_model},
              {"n_heads", c.n_heads},     {"d_head", c.d_head},
              {"d_ff", c.d_ff},           {"vocab_size", c.vocab_size},
              {"d_audio", c.d_audio},     {"max_seq_len", c.max_seq_len},
              {"norm_kind", std::string(to_string(c.norm_kind))}};
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw format_error("config is not a JSON object");
  ModelConfig c;
  c.n_layers = count_field(j, "n_layers");
  c.d_model = count_field(j, "d_model");
  c.n_heads = count_field(j, "n_heads");
  c.d_head = count_field(j, "d_head");
  c.d_ff = count_field(j, "d_ff");
  c.vocab_size = count_field(j, "vocab_size");
  c.d_audio = count_field(j, "d_audio");
  c.max_seq_len = count_field(j, "max_seq_len");
  if (!j.contains("norm_kind") || !j.at("norm_kind").is_string())
    throw format_error("config field 'norm_kind' missing");
  c.norm_kind = norm_kind_from_string(j.at("norm_kind").get<std::string>());
  return c;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  ModelWeights w = model.weights();
  auto slots = tensor_slots(w);

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& s : slots) {
    tensors.push_back({{"name", s.name}, {"shape", s.shape}, {"dtype", "f64"}, {"byte_offset", offset}});
    offset += s.data.size() * sizeof(double);
  }
  const json manifest{{"format_version", kWeightFormatVersion},
                      {"config", config_to_json(model.config())},
                      {"tensors", std::move(tensors)}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& s : slots)
    for (double v : s.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw format_error("weight container shorter than its 8-byte length prefix");
  const std::uint64_t manifest_len = get_u64(bytes.data());
  if (manifest_len > bytes.size() - 8)
    throw format_error(fmt::format("manifest length {} exceeds file size {}", manifest_len, bytes.size()));

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const json::parse_error& e) {
    throw format_error(fmt::format("manifest is not valid JSON: {}", e.what()));
  }
  if (!manifest.is_object()) throw format_error("manifest is not a JSON object");
  if (manifest.value("format_version", -1) != kWeightFormatVersion)
    throw format_error(fmt::format("unsupported format_version (expected {})", kWeightFormatVersion));
  if (!manifest.contains("config")) throw format_error("manifest has no config");
  const ModelConfig config = config_from_json(manifest.at("config"));
  try {
    config.validate();
  } catch (const Error& e) {
    throw format_error(fmt::format("invalid config in manifest: {}", e.what()));
  }

  ModelWeights w = ModelWeights::zeros(config);
  auto slots = tensor_slots(w);
  std::map<std::string, TensorSlot*> by_name;
  for (auto& s : slots) by_name.emplace(s.name, &s);

  const auto payload = bytes.subspan(8 + manifest_len);
  if (!manifest.contains("tensors") || !manifest.at("tensors").is_array())
    throw format_error("manifest has no tensors array");
  std::map<std::string, bool> seen;
  for (const json& t : manifest.at("tensors")) {
    if (!t.is_object() || !t.contains("name") || !t.at("name").is_string())
      throw format_error("tensor entry without a name");
    const std::string name = t.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw format_error(fmt::format("unknown tensor '{}'", name));
    if (seen[name]) throw format_error(fmt::format("duplicate tensor '{}'", name));
    seen[name] = true;
    if (t.value("dtype", "") != "f64") throw format_error(fmt::format("tensor '{}' dtype is not f64", name));
    TensorSlot& slot = *it->second;
    std::vector<std::size_t> shape;
    try {
      shape = t.at("shape").get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
      throw format_error(fmt::format("tensor '{}' has a malformed shape", name));
    }
    if (shape != slot.shape)
      throw format_error(fmt::format("tensor '{}' shape [{}] does not match config [{}]", name,
                                     fmt::join(shape, ","), fmt::join(slot.shape, ",")));
    if (!t.contains("byte_offset") || !t.at("byte_offset").is_number_unsigned())
      throw format_error(fmt::format("tensor '{}' has no byte_offset", name));
    const std::uint64_t off = t.at("byte_offset").get<std::uint64_t>();
    const std::uint64_t len = slot.data.size() * sizeof(double);
    if (off > payload.size() || len > payload.size() - off)
      throw format_error(fmt::format("tensor '{}' extends past end of payload", name));
    for (std::size_t i = 0; i < slot.data.size(); ++i)
      slot.data[i] = std::bit_cast<double>(get_u64(payload.data() + off + i * sizeof(double)));
  }
  for (const auto& s : slots)
    if (!seen[s.name]) throw format_error(fmt::format("missing tensor '{}'", s.name));

  try {
    return Model(config, std::move(w));
  } catch (const Error& e) {
    throw format_error(fmt::format("weights rejected: {}", e.what()));
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorKind::Io, fmt::format("'{}' does not exist or is not a regular file", path.string()));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot open '{}' for reading", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, fmt::format("write to '{}' failed", path.string()));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_file_bytes(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace ctrace
