#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrace/error.hpp"
#include "ctrace/model.hpp"

namespace ctrace::cli {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,          // bad or missing command line flags
  kExitIo = 2,             // file missing, unreadable, or unwritable
  kExitFormat = 3,         // malformed weight container, dataset, results, or config file
  kExitNoValidSamples = 4, // every sample excluded by the validity filter
  kExitInvalidSpec = 5,    // configuration value out of range (e.g. copy block > layers)
  kExitShape = 6,          // model, dataset, and patch dimensions disagree
  kExitNumeric = 7,        // NaN or Inf during a forward pass
};

int exit_code_for(ErrorKind kind);

enum class SweepKind { Layers, Tokens, Single };

struct RunConfig {
  std::filesystem::path model_path;
  std::filesystem::path dataset_path;
  std::filesystem::path output_dir;
  SweepKind sweep_kind = SweepKind::Layers;
  std::vector<std::size_t> sites;         // empty = all
  std::optional<Vector> silence;          // overrides the dataset header
  double epsilon_gap = 1e-6;
  bool clamp = false;
  bool include_audio_positions = false;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::vector<Patch> patches;             // sweep_kind == single

  /// Throws InvalidSpec / Io when a field violates its invariants.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);

/// Parses "site:position".
Patch parse_patch(const std::string& text);

/// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctrace::cli
