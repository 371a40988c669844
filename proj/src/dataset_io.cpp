#include "ctrace/dataset_io.hpp"

#include <set>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ctrace/error.hpp"
#include "ctrace/weights_io.hpp"

namespace ctrace {

using nlohmann::json;

namespace {

Error line_error(std::size_t line, const std::string& msg) {
  return Error(ErrorKind::Format, fmt::format("dataset line {}: {}", line, msg));
}

Vector number_array(const json& j, std::size_t line, std::string_view what) {
  if (!j.is_array()) throw line_error(line, fmt::format("{} is not an array", what));
  Vector out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number()) throw line_error(line, fmt::format("{} contains a non-number", what));
    out.push_back(v.get<double>());
  }
  if (!all_finite(out)) throw line_error(line, fmt::format("{} contains a non-finite value", what));
  return out;
}

std::size_t index_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key) || !obj.at(key).is_number_unsigned())
    throw line_error(line, fmt::format("'{}' missing or not a non-negative integer", key));
  return obj.at(key).get<std::size_t>();
}

DatasetHeader parse_header(const json& j, std::size_t line) {
  if (!j.is_object() || j.value("kind", "") != "header")
    throw line_error(line, "first line must be a header object with \"kind\":\"header\"");
  DatasetHeader h;
  h.d_audio = index_field(j, "d_audio", line);
  if (h.d_audio < 1) throw line_error(line, "d_audio must be >= 1");
  if (j.contains("silence_vector") && !j.at("silence_vector").is_null()) {
    h.silence_vector = number_array(j.at("silence_vector"), line, "silence_vector");
    if (h.silence_vector->size() != h.d_audio)
      throw line_error(line, fmt::format("silence_vector has length {}, d_audio is {}",
                                         h.silence_vector->size(), h.d_audio));
  }
  if (j.contains("description")) {
    if (!j.at("description").is_string()) throw line_error(line, "description is not a string");
    h.description = j.at("description").get<std::string>();
  }
  return h;
}

SequenceElement parse_element(const json& e, std::size_t d_audio, std::optional<std::size_t> vocab_size,
                              std::size_t line) {
  if (!e.is_object() || !e.contains("kind") || !e.at("kind").is_string())
    throw line_error(line, "element without a kind");
  const std::string kind = e.at("kind").get<std::string>();
  if (kind == "text") {
    const std::size_t token = index_field(e, "token", line);
    if (vocab_size && token >= *vocab_size)
      throw line_error(line, fmt::format("token id {} >= vocab_size {}", token, *vocab_size));
    if (!e.contains("segment") || !e.at("segment").is_string())
      throw line_error(line, "text element without a segment");
    Segment seg;
    try {
      seg = segment_from_string(e.at("segment").get<std::string>());
    } catch (const Error& err) {
      throw line_error(line, err.what());
    }
    if (seg == Segment::Audio) throw line_error(line, "text element labelled 'audio'");
    return SequenceElement::text(token, seg);
  }
  if (kind == "audio") {
    if (!e.contains("features")) throw line_error(line, "audio element without features");
    Vector f = number_array(e.at("features"), line, "features");
    if (f.size() != d_audio)
      throw line_error(line, fmt::format("audio frame has {} features, d_audio is {}", f.size(), d_audio));
    return SequenceElement::audio(std::move(f));
  }
  throw line_error(line, fmt::format("unknown element kind '{}'", kind));
}

json element_to_json(const SequenceElement& e) {
  if (const auto* t = std::get_if<TextToken>(&e.value))
    return json{{"kind", "text"}, {"token", t->token_id}, {"segment", std::string(to_string(e.segment))}};
  return json{{"kind", "audio"}, {"features", std::get<AudioFrame>(e.value).features}};
}

}  // namespace

CorruptionSpec Dataset::default_corruption() const {
  if (header.silence_vector) return {*header.silence_vector};
  return CorruptionSpec::silence(header.d_audio);
}

Dataset parse_dataset(std::string_view text, std::optional<std::size_t> vocab_size) {
  Dataset ds;
  bool have_header = false;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw line_error(line_no, fmt::format("invalid JSON: {}", e.what()));
    }
    if (!have_header) {
      ds.header = parse_header(j, line_no);
      have_header = true;
      continue;
    }
    if (!j.is_object()) throw line_error(line_no, "sample is not a JSON object");
    if (j.contains("kind")) throw line_error(line_no, fmt::format("unexpected record kind {}", j.at("kind").dump()));
    if (!j.contains("id") || !j.at("id").is_string()) throw line_error(line_no, "sample without a string id");
    TraceSample s;
    s.id = j.at("id").get<std::string>();
    if (!ids.insert(s.id).second) throw line_error(line_no, fmt::format("duplicate sample id '{}'", s.id));
    s.target = index_field(j, "target_token", line_no);
    if (vocab_size && s.target >= *vocab_size)
      throw line_error(line_no, fmt::format("target_token {} >= vocab_size {}", s.target, *vocab_size));
    if (!j.contains("elements") || !j.at("elements").is_array())
      throw line_error(line_no, "sample without an elements array");
    std::vector<SequenceElement> elements;
    for (const json& e : j.at("elements"))
      elements.push_back(parse_element(e, ds.header.d_audio, vocab_size, line_no));
    try {
      s.clean_sequence = MultiModalSequence(std::move(elements));
    } catch (const Error& err) {
      throw line_error(line_no, err.what());
    }
    ds.samples.push_back(std::move(s));
  }
  if (!have_header) throw Error(ErrorKind::Format, "dataset has no header line");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> vocab_size) {
  const auto bytes = read_file_bytes(path);
  return parse_dataset(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), vocab_size);
}

std::string format_dataset(const Dataset& ds) {
  std::string out;
  json header{{"kind", "header"}, {"d_audio", ds.header.d_audio}, {"description", ds.header.description}};
  if (ds.header.silence_vector) header["silence_vector"] = *ds.header.silence_vector;
  out += header.dump();
  out += '\n';
  for (const auto& s : ds.samples) {
    json elements = json::array();
    for (const auto& e : s.clean_sequence.elements()) elements.push_back(element_to_json(e));
    out += json{{"id", s.id}, {"target_token", s.target}, {"elements", std::move(elements)}}.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_text_file(path, format_dataset(ds));
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 computation failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string dataset_digest(const Dataset& ds) { return sha256_hex(format_dataset(ds)); }

}  // namespace ctrace
