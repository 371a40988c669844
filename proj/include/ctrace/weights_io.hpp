#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrace/model.hpp"

namespace ctrace {

// Weight container layout (all integers and floats little-endian):
//
//   u64          manifest byte length N
//   N bytes      UTF-8 JSON manifest
//   payload      contiguous f64 values
//
// Manifest: {"format_version": 1,
//            "config": {n_layers, d_model, n_heads, d_head, d_ff, vocab_size,
//                       d_audio, max_seq_len, norm_kind},
//            "tensors": [{"name", "shape", "dtype": "f64", "byte_offset"}]}
//
// byte_offset is relative to the start of the payload. Tensor names, in the
// order the writer emits them:
//
//   token_embedding            [V, d_model]
//   pos_embedding              [max_seq_len, d_model]
//   audio_projection           [d_audio, d_model]
//   audio_bias                 [d_model]
//   block.<b>.attn_norm.gamma  [d_model]        b = 1..n_layers
//   block.<b>.attn_norm.beta   [d_model]
//   block.<b>.w_q / w_k / w_v / w_o  [d_model, d_model]
//   block.<b>.mlp_norm.gamma   [d_model]
//   block.<b>.mlp_norm.beta    [d_model]
//   block.<b>.w_in             [d_model, d_ff]
//   block.<b>.b_in             [d_ff]
//   block.<b>.w_out            [d_ff, d_model]
//   block.<b>.b_out            [d_model]
//   final_norm.gamma           [d_model]
//   final_norm.beta            [d_model]
//   unembedding                [d_model, V]
//
// Norm parameters are stored even when norm_kind is "identity".

inline constexpr int kWeightFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const Model& model);
/// Throws Io when the file cannot be read, Format on any structural violation.
Model load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ctrace
