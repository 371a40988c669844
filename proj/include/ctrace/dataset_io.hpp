#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctrace/tracing.hpp"

namespace ctrace {

// JSONL dataset. First line is the header:
//   {"kind":"header","d_audio":N,"silence_vector":[...]?,"description":"..."}
// then one sample per line:
//   {"id":"...","target_token":T,"elements":[
//       {"kind":"text","token":I,"segment":"early_prompt"|"object"|"late_prompt"|"last"}
//     | {"kind":"audio","features":[f64,...]}]}
//
// The writer emits keys in sorted order, one compact object per line, with a
// trailing newline; loading then writing such a file reproduces it exactly.

struct DatasetHeader {
  std::size_t d_audio = 1;
  std::optional<Vector> silence_vector;
  std::string description;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<TraceSample> samples;

  /// Header silence vector when present, zeros otherwise.
  CorruptionSpec default_corruption() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws Format on unknown kinds, wrong feature lengths, missing or duplicate
/// `last` segments, duplicate ids, and (when vocab_size is given) token ids >= V.
Dataset parse_dataset(std::string_view text, std::optional<std::size_t> vocab_size = std::nullopt);
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<std::size_t> vocab_size = std::nullopt);

std::string format_dataset(const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Hex SHA-256 of the normalized dataset text.
std::string dataset_digest(const Dataset& dataset);

std::string sha256_hex(std::string_view bytes);

}  // namespace ctrace
