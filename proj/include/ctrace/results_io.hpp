#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ctrace/model.hpp"
#include "ctrace/sweep.hpp"

namespace ctrace {

inline constexpr int kResultsFormatVersion = 1;

/// Everything besides the grids that a results document records. Worker count
/// is deliberately absent: it never changes results.
struct SweepContext {
  ModelConfig config;
  CorruptionSpec corruption;
  std::string dataset_digest;
  SweepOptions options;
};

nlohmann::json results_to_json(const SweepContext& ctx, const LayerSweepResult& result);
nlohmann::json results_to_json(const SweepContext& ctx, const TokenSweepResult& result);
nlohmann::json results_to_json(const SweepContext& ctx, const InterventionSweepResult& result,
                               const InterventionSpec& patches);

/// CSV with header `sweep_kind,site,position_or_segment,stat,value,n_valid`,
/// derived from a results document alone.
std::string results_csv(const nlohmann::json& doc);

/// Stable text form of a results document (2-space indent, trailing newline).
std::string dump_results(const nlohmann::json& doc);

/// Throws Format when the document is not a results document.
void check_results_document(const nlohmann::json& doc);

}  // namespace ctrace
