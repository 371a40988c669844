#include "ctrace/results_io.hpp"

#include <fmt/core.h>

#include "ctrace/error.hpp"
#include "ctrace/weights_io.hpp"

namespace ctrace {

using nlohmann::json;

namespace {

constexpr const char* kSiteIndexing = "site 0 = embedding output; site s >= 1 = residual stream after block s";

json base_document(const SweepContext& ctx, std::string_view kind, std::span<const SampleStatus> samples,
                   const ExclusionCounts& excluded) {
  json s = json::array();
  for (const auto& st : samples)
    s.push_back({{"id", st.id},
                 {"verdict", std::string(to_string(st.verdict))},
                 {"p_clean", st.p_clean},
                 {"p_corrupted", st.p_corrupted}});
  return json{{"format_version", kResultsFormatVersion},
              {"sweep_kind", std::string(kind)},
              {"site_indexing", kSiteIndexing},
              {"config", config_to_json(ctx.config)},
              {"corruption", {{"silence_vector", ctx.corruption.silence_vector}}},
              {"dataset_digest", ctx.dataset_digest},
              {"options",
               {{"epsilon_gap", ctx.options.epsilon_gap},
                {"clamp", ctx.options.clamp},
                {"include_audio_positions", ctx.options.include_audio_positions}}},
              {"samples", std::move(s)},
              {"exclusions",
               {{"clean_wrong", excluded.clean_wrong},
                {"corrupt_right", excluded.corrupt_right},
                {"no_gap", excluded.no_gap}}},
              {"n_valid", samples.size() - excluded.total()}};
}

json segment_names(std::span<const Segment> segs) {
  json out = json::array();
  for (Segment s : segs) out.push_back(std::string(to_string(s)));
  return out;
}

std::string csv_row(std::string_view kind, const std::string& site, const std::string& where,
                    std::string_view stat, double value, std::size_t n_valid) {
  return fmt::format("{},{},{},{},{},{}\n", kind, site, where, stat, value, n_valid);
}

}  // namespace

json results_to_json(const SweepContext& ctx, const LayerSweepResult& r) {
  json doc = base_document(ctx, "layers", r.samples, r.excluded);
  json sites = json::array(), means = json::array(), n_valid = json::array(), per_sample = json::array();
  for (std::size_t s = 0; s < r.per_site.size(); ++s) {
    sites.push_back(s);
    means.push_back(r.per_site[s].mean);
    n_valid.push_back(r.per_site[s].n_valid);
    json row = json::array();
    for (const auto& v : r.rr[s]) row.push_back(v ? json(*v) : json(nullptr));
    per_sample.push_back(std::move(row));
  }
  doc["sites"] = std::move(sites);
  doc["mean_rr"] = std::move(means);
  doc["site_n_valid"] = std::move(n_valid);
  doc["per_sample_rr"] = std::move(per_sample);
  return doc;
}

json results_to_json(const SweepContext& ctx, const TokenSweepResult& r) {
  json doc = base_document(ctx, "tokens", r.samples, r.excluded);
  doc["sites"] = r.sites;
  doc["positions"] = r.positions;
  json segs = json::array();
  for (const auto& s : r.segments) segs.push_back(segment_names(s));
  doc["segments"] = std::move(segs);

  json per_sample = json::array();
  for (std::size_t si = 0; si < r.sites.size(); ++si) {
    json row = json::array();
    for (std::size_t i = 0; i < r.samples.size(); ++i)
      row.push_back(r.samples[i].verdict == Verdict::Valid ? json(r.rr[si][i]) : json(nullptr));
    per_sample.push_back(std::move(row));
  }
  doc["per_sample_rr"] = std::move(per_sample);

  json summary = json::array();
  for (const auto& s : r.summaries)
    summary.push_back({{"site", s.site},
                       {"segment", std::string(to_string(s.segment))},
                       {"mean_rr", s.mean_rr},
                       {"max_rr", s.max_rr},
                       {"n_valid", s.n_valid}});
  doc["segment_summary"] = std::move(summary);

  if (r.grid) {
    doc["position_grid"] = {{"positions", r.grid->positions},
                            {"segments", segment_names(r.grid->segments)},
                            {"mean_rr", r.grid->mean_rr},
                            {"n_valid", r.grid->n_valid}};
  } else {
    doc["position_grid"] = nullptr;
  }
  return doc;
}

json results_to_json(const SweepContext& ctx, const InterventionSweepResult& r, const InterventionSpec& patches) {
  json doc = base_document(ctx, "single", r.samples, r.excluded);
  json p = json::array();
  for (const Patch& patch : patches.patches()) p.push_back({patch.site, patch.position});
  doc["patches"] = std::move(p);
  json results = json::array();
  for (const auto& t : r.results)
    results.push_back({{"p_patched", t.p_patched}, {"rr", t.rr ? json(*t.rr) : json(nullptr)}});
  doc["results"] = std::move(results);
  doc["mean_rr"] = r.mean.mean;
  return doc;
}

void check_results_document(const json& doc) {
  if (!doc.is_object() || doc.value("format_version", -1) != kResultsFormatVersion || !doc.contains("sweep_kind"))
    throw Error(ErrorKind::Format, "not a results document (missing format_version or sweep_kind)");
  const std::string kind = doc.at("sweep_kind").get<std::string>();
  if (kind != "layers" && kind != "tokens" && kind != "single")
    throw Error(ErrorKind::Format, fmt::format("unknown sweep_kind '{}'", kind));
}

std::string results_csv(const json& doc) {
  check_results_document(doc);
  std::string out = "sweep_kind,site,position_or_segment,stat,value,n_valid\n";
  try {
    const std::string kind = doc.at("sweep_kind").get<std::string>();
    const bool audio = doc.at("options").at("include_audio_positions").get<bool>();
    if (kind == "layers") {
      const auto& sites = doc.at("sites");
      for (std::size_t s = 0; s < sites.size(); ++s)
        out += csv_row(kind, std::to_string(sites[s].get<std::size_t>()), audio ? "all_positions" : "text_tokens",
                       "mean_rr", doc.at("mean_rr")[s].get<double>(), doc.at("site_n_valid")[s].get<std::size_t>());
    } else if (kind == "tokens") {
      for (const auto& s : doc.at("segment_summary")) {
        const std::string site = std::to_string(s.at("site").get<std::size_t>());
        const std::string seg = s.at("segment").get<std::string>();
        const std::size_t n = s.at("n_valid").get<std::size_t>();
        out += csv_row(kind, site, seg, "mean_rr", s.at("mean_rr").get<double>(), n);
        out += csv_row(kind, site, seg, "max_rr", s.at("max_rr").get<double>(), n);
      }
      if (const auto& g = doc.at("position_grid"); !g.is_null()) {
        const auto& sites = doc.at("sites");
        const std::size_t n = g.at("n_valid").get<std::size_t>();
        for (std::size_t si = 0; si < sites.size(); ++si)
          for (std::size_t k = 0; k < g.at("positions").size(); ++k)
            out += csv_row(kind, std::to_string(sites[si].get<std::size_t>()),
                           fmt::format("pos:{}", g.at("positions")[k].get<std::size_t>()), "mean_rr",
                           g.at("mean_rr")[si][k].get<double>(), n);
      }
    } else {
      std::string where;
      for (const auto& p : doc.at("patches"))
        where += fmt::format("{}{}:{}", where.empty() ? "" : " ", p[0].get<std::size_t>(), p[1].get<std::size_t>());
      out += csv_row(kind, "", where, "mean_rr", doc.at("mean_rr").get<double>(), doc.at("n_valid").get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, fmt::format("malformed results document: {}", e.what()));
  }
  return out;
}

std::string dump_results(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace ctrace
