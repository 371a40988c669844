#include "cli.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "ctrace/dataset_io.hpp"
#include "ctrace/oracle.hpp"
#include "ctrace/report.hpp"
#include "ctrace/results_io.hpp"
#include "ctrace/sweep.hpp"
#include "ctrace/weights_io.hpp"

namespace ctrace::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::Format: return kExitFormat;
    case ErrorKind::NoValidSamples:
    case ErrorKind::NoGap: return kExitNoValidSamples;
    case ErrorKind::InvalidSpec: return kExitInvalidSpec;
    case ErrorKind::Shape:
    case ErrorKind::Range: return kExitShape;
    case ErrorKind::Numeric: return kExitNumeric;
  }
  return kExitUsage;
}

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  usage error (bad or missing flags)\n"
    "  2  file missing, unreadable, or unwritable\n"
    "  3  malformed weight container, dataset, results, or config file\n"
    "  4  no valid samples after the exclusion filter\n"
    "  5  invalid configuration or oracle spec value\n"
    "  6  shape or index mismatch between model, dataset, and patches\n"
    "  7  non-finite value during a forward pass";

std::string_view to_string(SweepKind k) {
  switch (k) {
    case SweepKind::Layers: return "layers";
    case SweepKind::Tokens: return "tokens";
    case SweepKind::Single: return "single";
  }
  return "layers";
}

SweepKind sweep_kind_from_string(std::string_view s) {
  if (s == "layers") return SweepKind::Layers;
  if (s == "tokens") return SweepKind::Tokens;
  if (s == "single") return SweepKind::Single;
  throw Error(ErrorKind::InvalidSpec, fmt::format("unknown sweep kind '{}' (layers, tokens, single)", s));
}

Vector parse_float_list(const std::string& text) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidSpec, fmt::format("'{}' is not a number", item));
    }
  }
  return out;
}

void write_outputs(const fs::path& dir, const json& doc) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  write_text_file(dir / "results.json", dump_results(doc));
  write_text_file(dir / "results.csv", results_csv(doc));
  for (const auto& [name, svg] : report::render_figures(doc)) write_text_file(dir / name, svg);
}

void print_summary(std::ostream& out, const json& doc) {
  const auto& ex = doc.at("exclusions");
  fmt::print(out, "samples: {}  valid: {}  excluded: clean_wrong={} corrupt_right={} no_gap={}\n",
             doc.at("samples").size(), doc.at("n_valid").get<std::size_t>(), ex.at("clean_wrong").get<std::size_t>(),
             ex.at("corrupt_right").get<std::size_t>(), ex.at("no_gap").get<std::size_t>());
  const std::string kind = doc.at("sweep_kind").get<std::string>();
  if (kind == "layers") {
    fmt::print(out, "{:>6}  {:>12}  {:>8}\n", "site", "mean_rr", "n_valid");
    for (std::size_t s = 0; s < doc.at("sites").size(); ++s)
      fmt::print(out, "{:>6}  {:>12.6f}  {:>8}\n", doc.at("sites")[s].get<std::size_t>(),
                 doc.at("mean_rr")[s].get<double>(), doc.at("site_n_valid")[s].get<std::size_t>());
  } else if (kind == "tokens") {
    fmt::print(out, "{:>6}  {:<14}  {:>12}  {:>12}\n", "site", "segment", "mean_rr", "max_rr");
    for (const auto& s : doc.at("segment_summary"))
      fmt::print(out, "{:>6}  {:<14}  {:>12.6f}  {:>12.6f}\n", s.at("site").get<std::size_t>(),
                 s.at("segment").get<std::string>(), s.at("mean_rr").get<double>(), s.at("max_rr").get<double>());
  } else {
    fmt::print(out, "mean_rr: {:.6f}\n", doc.at("mean_rr").get<double>());
  }
}

struct LoadedInputs {
  Model model;
  Dataset dataset;
  CorruptionSpec corruption;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
  Model model = load_model(cfg.model_path);
  Dataset ds = load_dataset(cfg.dataset_path, model.config().vocab_size);
  if (ds.header.d_audio != model.config().d_audio)
    throw Error(ErrorKind::Shape, fmt::format("dataset d_audio {} does not match model d_audio {}", ds.header.d_audio,
                                              model.config().d_audio));
  CorruptionSpec corruption = cfg.silence ? CorruptionSpec{*cfg.silence} : ds.default_corruption();
  corruption.validate(model.config().d_audio);
  return {std::move(model), std::move(ds), std::move(corruption)};
}

json run_sweep(const RunConfig& cfg) {
  cfg.validate();
  const LoadedInputs in = load_inputs(cfg);
  SweepOptions opts{cfg.epsilon_gap, cfg.include_audio_positions, cfg.clamp, cfg.workers};
  const SweepContext ctx{in.model.config(), in.corruption, dataset_digest(in.dataset), opts};
  switch (cfg.sweep_kind) {
    case SweepKind::Layers:
      if (!cfg.sites.empty()) throw Error(ErrorKind::InvalidSpec, "--sites applies to token sweeps only");
      return results_to_json(ctx, layer_sweep(in.model, in.dataset.samples, in.corruption, opts));
    case SweepKind::Tokens:
      return results_to_json(ctx, token_sweep(in.model, in.dataset.samples, in.corruption, cfg.sites, opts));
    case SweepKind::Single: {
      const InterventionSpec patches(cfg.patches);
      return results_to_json(ctx, intervention_sweep(in.model, in.dataset.samples, in.corruption, patches, opts),
                             patches);
    }
  }
  return {};
}

json oracle_spec_to_json(const oracle::OracleSpec& s) {
  return json{{"n_layers", s.n_layers},
              {"copy_block", s.copy_block},
              {"n_attributes", s.n_attributes},
              {"attention_gain", s.attention_gain},
              {"readout_gain", s.readout_gain},
              {"n_audio_frames", s.n_audio_frames},
              {"seed", s.seed}};
}

void run_oracle_gen(const oracle::OracleSpec& spec, std::size_t n_samples, bool stratified, const fs::path& dir,
                    std::ostream& out) {
  spec.validate();
  const Model model = oracle::build_oracle(spec);
  const Dataset ds = oracle::to_dataset(spec, oracle::gen_dataset(spec, n_samples, stratified));
  const oracle::TokenMap tokens = oracle::expected_token_map(spec);
  json token_segments = json::array();
  for (Segment s : tokens.segments) token_segments.push_back(std::string(ctrace::to_string(s)));

  const json manifest{{"spec", oracle_spec_to_json(spec)},
                      {"n_samples", n_samples},
                      {"stratified", stratified},
                      {"files", {{"model", "model.ctw"}, {"dataset", "dataset.jsonl"}}},
                      {"dataset_digest", dataset_digest(ds)},
                      {"expected_layer_map", oracle::expected_layer_map(spec)},
                      {"expected_token_map",
                       {{"positions", tokens.positions}, {"segments", token_segments}, {"rr", tokens.rr}}}};

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  save_model(dir / "model.ctw", model);
  save_dataset(dir / "dataset.jsonl", ds);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  fmt::print(out, "wrote {} samples, model, and manifest to {}\n", n_samples, dir.string());
}

json trace_result_to_json(const std::string& id, const TraceResult& r) {
  return json{{"id", id},
              {"p_clean", r.p_clean},
              {"p_corrupted", r.p_corrupted},
              {"p_patched", r.p_patched},
              {"rr", r.rr ? json(*r.rr) : json(nullptr)},
              {"verdict", std::string(to_string(r.verdict))}};
}

}  // namespace

void RunConfig::validate() const {
  if (workers < 1) throw Error(ErrorKind::InvalidSpec, "worker count must be >= 1");
  if (!(epsilon_gap >= 0.0)) throw Error(ErrorKind::InvalidSpec, "epsilon gap must be >= 0");
  if (model_path.empty()) throw Error(ErrorKind::InvalidSpec, "no model path given");
  if (dataset_path.empty()) throw Error(ErrorKind::InvalidSpec, "no dataset path given");
  for (const auto& p : {model_path, dataset_path}) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec))
      throw Error(ErrorKind::Io, fmt::format("'{}' does not exist or is not a regular file", p.string()));
  }
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Format, "run config is not a JSON object");
  RunConfig c;
  try {
    if (j.contains("model_path")) c.model_path = j.at("model_path").get<std::string>();
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("sweep_kind")) c.sweep_kind = sweep_kind_from_string(j.at("sweep_kind").get<std::string>());
    if (j.contains("sites")) c.sites = j.at("sites").get<std::vector<std::size_t>>();
    if (j.contains("silence") && !j.at("silence").is_null()) c.silence = j.at("silence").get<Vector>();
    if (j.contains("epsilon_gap")) c.epsilon_gap = j.at("epsilon_gap").get<double>();
    if (j.contains("clamp")) c.clamp = j.at("clamp").get<bool>();
    if (j.contains("include_audio_positions")) c.include_audio_positions = j.at("include_audio_positions").get<bool>();
    if (j.contains("workers")) c.workers = j.at("workers").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("patches"))
      for (const auto& p : j.at("patches")) c.patches.push_back(parse_patch(p.get<std::string>()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, fmt::format("run config: {}", e.what()));
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json patches = json::array();
  for (const Patch& p : c.patches) patches.push_back(fmt::format("{}:{}", p.site, p.position));
  return json{{"model_path", c.model_path.string()},
              {"dataset_path", c.dataset_path.string()},
              {"output_dir", c.output_dir.string()},
              {"sweep_kind", std::string(to_string(c.sweep_kind))},
              {"sites", c.sites},
              {"silence", c.silence ? json(*c.silence) : json(nullptr)},
              {"epsilon_gap", c.epsilon_gap},
              {"clamp", c.clamp},
              {"include_audio_positions", c.include_audio_positions},
              {"workers", c.workers},
              {"seed", c.seed},
              {"patches", std::move(patches)}};
}

Patch parse_patch(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t a = 0, b = 0;
    const std::string site = text.substr(0, colon), pos = text.substr(colon + 1);
    const unsigned long s = std::stoul(site, &a);
    const unsigned long p = std::stoul(pos, &b);
    if (a != site.size() || b != pos.size() || site.starts_with('-') || pos.starts_with('-'))
      throw std::invalid_argument(text);
    return {s, p};
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidSpec, fmt::format("patch '{}' is not of the form site:position", text));
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal tracing for multimodal decoder-only transformers", "trace"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  // trace oracle gen
  auto* oracle_cmd = app.add_subcommand("oracle", "Analytic copy-circuit oracle models");
  oracle_cmd->require_subcommand(1);
  auto* gen = oracle_cmd->add_subcommand("gen", "Write an oracle weight container, dataset, and manifest");
  oracle::OracleSpec spec;
  std::size_t n_samples = 64;
  bool stratified = false;
  fs::path gen_dir;
  gen->add_option("--output-dir", gen_dir, "Directory for model.ctw, dataset.jsonl, manifest.json")->required();
  gen->add_option("--layers", spec.n_layers, "Number of transformer blocks")->capture_default_str();
  gen->add_option("--copy-block", spec.copy_block, "Block (1-based) holding the copy head")->capture_default_str();
  gen->add_option("--attributes", spec.n_attributes, "Number of attribute classes K")->capture_default_str();
  gen->add_option("--attention-gain", spec.attention_gain, "Copy head query gain (>= 10)")->capture_default_str();
  gen->add_option("--readout-gain", spec.readout_gain, "Unembedding gain on content dims (>= 5)")->capture_default_str();
  gen->add_option("--audio-frames", spec.n_audio_frames, "Audio frames per sample")->capture_default_str();
  gen->add_option("--seed", spec.seed, "Dataset PRNG seed")->capture_default_str();
  gen->add_option("--samples", n_samples, "Number of samples")->capture_default_str();
  gen->add_flag("--stratified", stratified, "Cycle attributes so each class gets an equal share");

  // trace sweep
  auto* sweep = app.add_subcommand("sweep", "Run a layer-wise, token-wise, or fixed-intervention sweep");
  fs::path config_file;
  std::string model_path, dataset_path, output_dir, kind, silence;
  std::vector<std::size_t> sites;
  std::vector<std::string> patch_texts;
  double epsilon_gap = 1e-6;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool clamp = false, include_audio = false;
  sweep->add_option("--config", config_file, "RunConfig JSON file; flags override its fields");
  auto* o_model = sweep->add_option("--model", model_path, "Weight container");
  auto* o_dataset = sweep->add_option("--dataset", dataset_path, "JSONL dataset");
  auto* o_out = sweep->add_option("--output-dir", output_dir, "Directory for results.json, results.csv, and SVGs");
  auto* o_kind = sweep->add_option("--kind", kind, "layers | tokens | single");
  auto* o_sites = sweep->add_option("--sites", sites, "Token sweep site filter, comma separated")->delimiter(',');
  auto* o_silence = sweep->add_option("--silence", silence, "Silence vector, comma separated");
  auto* o_eps = sweep->add_option("--epsilon-gap", epsilon_gap, "Exclusion guard band on P_clean - P_corrupted");
  auto* o_clamp = sweep->add_flag("--clamp", clamp, "Clamp per-sample RR to [0, 1] before averaging");
  auto* o_audio = sweep->add_flag("--include-audio-positions", include_audio, "Also patch audio positions");
  auto* o_workers = sweep->add_option("--workers", workers, "Worker threads");
  auto* o_seed = sweep->add_option("--seed", seed, "Recorded in the run config");
  auto* o_patch = sweep->add_option("--patch", patch_texts, "site:position, repeatable (kind single)");

  // trace report
  auto* report_cmd = app.add_subcommand("report", "Re-render CSV and SVG figures from a results.json");
  fs::path results_path, report_dir;
  report_cmd->add_option("--results", results_path, "results.json written by sweep")->required();
  report_cmd->add_option("--output-dir", report_dir, "Directory for results.csv and SVGs")->required();

  // trace run
  auto* run = app.add_subcommand("run", "Trace one sample with one intervention; prints the result as JSON");
  std::string run_model, run_dataset, run_id, run_silence;
  std::vector<std::string> run_patches;
  std::optional<std::size_t> layer_site;
  double run_eps = 1e-6;
  bool run_audio = false;
  run->add_option("--model", run_model, "Weight container")->required();
  run->add_option("--dataset", run_dataset, "JSONL dataset")->required();
  run->add_option("--sample-id", run_id, "Sample id (default: first sample)");
  run->add_option("--patch", run_patches, "site:position, repeatable");
  run->add_option("--layer-site", layer_site, "Patch every textual position at this site");
  run->add_flag("--include-audio-positions", run_audio, "With --layer-site, also patch audio positions");
  run->add_option("--silence", run_silence, "Silence vector, comma separated");
  run->add_option("--epsilon-gap", run_eps, "Exclusion guard band");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      run_oracle_gen(spec, n_samples, stratified, gen_dir, out);
      return kExitOk;
    }
    if (sweep->parsed()) {
      RunConfig cfg;
      if (!config_file.empty()) {
        const auto bytes = read_file_bytes(config_file);
        json j;
        try {
          j = json::parse(bytes.begin(), bytes.end());
        } catch (const json::parse_error& e) {
          throw Error(ErrorKind::Format, fmt::format("config '{}': {}", config_file.string(), e.what()));
        }
        cfg = run_config_from_json(j);
      }
      if (o_model->count()) cfg.model_path = model_path;
      if (o_dataset->count()) cfg.dataset_path = dataset_path;
      if (o_out->count()) cfg.output_dir = output_dir;
      if (o_kind->count()) cfg.sweep_kind = sweep_kind_from_string(kind);
      if (o_sites->count()) cfg.sites = sites;
      if (o_silence->count()) cfg.silence = parse_float_list(silence);
      if (o_eps->count()) cfg.epsilon_gap = epsilon_gap;
      if (o_clamp->count()) cfg.clamp = clamp;
      if (o_audio->count()) cfg.include_audio_positions = include_audio;
      if (o_workers->count()) cfg.workers = workers;
      if (o_seed->count()) cfg.seed = seed;
      if (o_patch->count()) {
        cfg.patches.clear();
        for (const auto& p : patch_texts) cfg.patches.push_back(parse_patch(p));
      }
      if (cfg.output_dir.empty()) throw Error(ErrorKind::InvalidSpec, "no output directory given");
      const json doc = run_sweep(cfg);
      write_outputs(cfg.output_dir, doc);
      print_summary(out, doc);
      return kExitOk;
    }
    if (report_cmd->parsed()) {
      const auto bytes = read_file_bytes(results_path);
      json doc;
      try {
        doc = json::parse(bytes.begin(), bytes.end());
      } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Format, fmt::format("results '{}': {}", results_path.string(), e.what()));
      }
      check_results_document(doc);
      std::error_code ec;
      fs::create_directories(report_dir, ec);
      if (ec) throw Error(ErrorKind::Io, fmt::format("cannot create '{}': {}", report_dir.string(), ec.message()));
      write_text_file(report_dir / "results.csv", results_csv(doc));
      for (const auto& [name, svg] : report::render_figures(doc)) write_text_file(report_dir / name, svg);
      fmt::print(out, "rendered figures into {}\n", report_dir.string());
      return kExitOk;
    }
    if (run->parsed()) {
      RunConfig cfg;
      cfg.model_path = run_model;
      cfg.dataset_path = run_dataset;
      cfg.epsilon_gap = run_eps;
      if (!run_silence.empty()) cfg.silence = parse_float_list(run_silence);
      cfg.validate();
      const LoadedInputs in = load_inputs(cfg);
      if (in.dataset.samples.empty()) throw Error(ErrorKind::InvalidSpec, "dataset contains no samples");
      auto it = in.dataset.samples.begin();
      if (!run_id.empty()) {
        it = std::find_if(in.dataset.samples.begin(), in.dataset.samples.end(),
                          [&](const TraceSample& s) { return s.id == run_id; });
        if (it == in.dataset.samples.end())
          throw Error(ErrorKind::InvalidSpec, fmt::format("no sample with id '{}'", run_id));
      }
      InterventionSpec patches;
      if (layer_site) patches = InterventionSpec::whole_site(it->clean_sequence, *layer_site, run_audio);
      for (const auto& p : run_patches) patches.add(parse_patch(p));
      const TraceResult r = trace_one(in.model, *it, in.corruption, patches, cfg.epsilon_gap);
      out << trace_result_to_json(it->id, r).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
  return kExitUsage;
}

}  // namespace ctrace::cli
