#include "ctrace/report.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "ctrace/error.hpp"
#include "ctrace/results_io.hpp"

namespace ctrace::report {

using nlohmann::json;

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kZero{0x21, 0x66, 0xac};
constexpr Rgb kHalf{0xf7, 0xf7, 0xf7};
constexpr Rgb kOne{0xb2, 0x18, 0x2b};

Rgb lerp(Rgb a, Rgb b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

std::string hex(Rgb c) {
  auto ch = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0))); };
  return fmt::format("#{:02x}{:02x}{:02x}", ch(c.r), ch(c.g), ch(c.b));
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt_value(double v) { return fmt::format("{:.4f}", v); }

constexpr double kCellW = 40, kCellH = 26, kLeft = 150, kTop = 50;

std::string svg_open(double w, double h) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect class=\"background\" x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"#ffffff\"/>\n",
      w, h);
}

}  // namespace

std::string rr_color(double rr) {
  const double v = std::clamp(rr, 0.0, 1.0);
  if (v == 0.0) return kColorAtZero;
  if (v == 0.5) return kColorAtHalf;
  if (v == 1.0) return kColorAtOne;
  return v < 0.5 ? hex(lerp(kZero, kHalf, v / 0.5)) : hex(lerp(kHalf, kOne, (v - 0.5) / 0.5));
}

std::string render_heatmap(const Heatmap& map) {
  if (map.values.empty() || map.values.front().empty())
    throw Error(ErrorKind::InvalidSpec, "cannot render an empty heatmap");
  const std::size_t rows = map.values.size();
  const std::size_t cols = map.values.front().size();
  for (const auto& row : map.values) {
    if (row.size() != cols) throw Error(ErrorKind::InvalidSpec, "heatmap rows have different lengths");
    for (double v : row)
      if (!std::isfinite(v)) throw Error(ErrorKind::Numeric, "heatmap value is not finite");
  }
  if (map.row_labels.size() != rows || map.col_labels.size() != cols)
    throw Error(ErrorKind::InvalidSpec, "heatmap label count does not match grid");

  const double grid_w = kCellW * static_cast<double>(cols);
  const double grid_h = kCellH * static_cast<double>(rows);
  const double legend_x = kLeft + grid_w + 30;
  const double width = legend_x + 150;
  const double height = std::max(kTop + grid_h + 60, kTop + 200);

  std::string svg = svg_open(width, height);
  svg += fmt::format("<text class=\"title\" x=\"{}\" y=\"24\" font-size=\"14\">{}</text>\n", kLeft,
                     escape(map.title));

  svg += "<g class=\"cells\">\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = map.values[r][c];
      const double x = kLeft + kCellW * static_cast<double>(c);
      const double y = kTop + kCellH * static_cast<double>(r);
      svg += fmt::format(
          "<rect class=\"cell\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{} / {}: "
          "{}</title></rect>\n",
          x, y, kCellW, kCellH, rr_color(v), escape(map.row_labels[r]), escape(map.col_labels[c]), fmt_value(v));
      const double cx = x + kCellW / 2, cy = y + kCellH / 2;
      if (v > 1.0)
        svg += fmt::format("<path class=\"overflow-high\" d=\"M{} {} L{} {} L{} {} Z\" fill=\"#000000\"/>\n", cx,
                           cy - 5, cx - 5, cy + 4, cx + 5, cy + 4);
      else if (v < 0.0)
        svg += fmt::format("<path class=\"overflow-low\" d=\"M{} {} L{} {} L{} {} Z\" fill=\"#000000\"/>\n", cx,
                           cy + 5, cx - 5, cy - 4, cx + 5, cy - 4);
    }
  }
  svg += "</g>\n";

  svg += "<g class=\"axes\">\n";
  svg += fmt::format(
      "<rect class=\"frame\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
      kLeft, kTop, grid_w, grid_h);
  for (std::size_t c = 0; c < cols; ++c)
    svg += fmt::format("<text class=\"x-tick\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       kLeft + kCellW * (static_cast<double>(c) + 0.5), kTop + grid_h + 14,
                       escape(map.col_labels[c]));
  for (std::size_t r = 0; r < rows; ++r)
    svg += fmt::format("<text class=\"y-tick\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kLeft - 6,
                       kTop + kCellH * (static_cast<double>(r) + 0.5) + 4, escape(map.row_labels[r]));
  svg += fmt::format("<text class=\"x-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + grid_w / 2, kTop + grid_h + 34, escape(map.x_label));
  svg += fmt::format("<text class=\"y-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">"
                     "{}</text>\n",
                     16, kTop + grid_h / 2, 16, kTop + grid_h / 2, escape(map.y_label));
  svg += "</g>\n";

  svg += "<g class=\"legend\">\n";
  svg += fmt::format("<text x=\"{}\" y=\"{}\">recovery rate</text>\n", legend_x, kTop - 8);
  constexpr int kSteps = 10;
  constexpr double kSwatch = 12;
  for (int i = 0; i <= kSteps; ++i) {
    const double v = 1.0 - static_cast<double>(i) / kSteps;
    const double y = kTop + kSwatch * i;
    svg += fmt::format("<rect class=\"legend-swatch\" x=\"{}\" y=\"{}\" width=\"16\" height=\"{}\" fill=\"{}\"/>\n",
                       legend_x, y, kSwatch, rr_color(v));
    if (i % 5 == 0)
      svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", legend_x + 22, y + 10, fmt::format("{:.1f}", v));
  }
  const double note_y = kTop + kSwatch * (kSteps + 1) + 20;
  svg += fmt::format("<path d=\"M{} {} L{} {} L{} {} Z\" fill=\"#000000\"/>\n", legend_x + 8, note_y - 9,
                     legend_x + 3, note_y, legend_x + 13, note_y);
  svg += fmt::format("<text x=\"{}\" y=\"{}\">RR &gt; 1</text>\n", legend_x + 22, note_y);
  svg += fmt::format("<path d=\"M{} {} L{} {} L{} {} Z\" fill=\"#000000\"/>\n", legend_x + 8, note_y + 16,
                     legend_x + 3, note_y + 7, legend_x + 13, note_y + 7);
  svg += fmt::format("<text x=\"{}\" y=\"{}\">RR &lt; 0</text>\n", legend_x + 22, note_y + 16);
  svg += "</g>\n</svg>\n";
  return svg;
}

std::string render_line_plot(const LinePlot& plot) {
  if (plot.x_labels.empty() || plot.series.empty())
    throw Error(ErrorKind::InvalidSpec, "cannot render an empty line plot");
  double lo = 0.0, hi = 1.0;
  for (const auto& [name, ys] : plot.series) {
    if (ys.size() != plot.x_labels.size())
      throw Error(ErrorKind::InvalidSpec, fmt::format("series '{}' length does not match x axis", name));
    for (double y : ys) {
      if (!std::isfinite(y)) throw Error(ErrorKind::Numeric, "line plot value is not finite");
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  constexpr double kW = 480, kH = 260, kL = 60, kT = 40;
  const std::size_t n = plot.x_labels.size();
  auto px = [&](std::size_t i) { return kL + (n == 1 ? kW / 2 : kW * static_cast<double>(i) / (n - 1)); };
  auto py = [&](double y) { return kT + kH * (hi - y) / (hi - lo); };

  static constexpr const char* kPalette[] = {"#b2182b", "#2166ac", "#1b7837", "#762a83", "#e08214"};
  std::string svg = svg_open(kL + kW + 170, kT + kH + 60);
  svg += fmt::format("<text class=\"title\" x=\"{}\" y=\"24\" font-size=\"14\">{}</text>\n", kL, escape(plot.title));
  svg += "<g class=\"axes\">\n";
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\"/>\n", kL, kT, kT + kH);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#333333\"/>\n", kL, kT + kH, kL + kW);
  for (double tick : {0.0, 0.5, 1.0}) {
    svg += fmt::format("<line class=\"grid\" x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#dddddd\"/>\n", kL,
                       py(tick), kL + kW);
    svg += fmt::format("<text class=\"y-tick\" x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.1f}</text>\n", kL - 6,
                       py(tick) + 4, tick);
  }
  for (std::size_t i = 0; i < n; ++i)
    svg += fmt::format("<text class=\"x-tick\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(i),
                       kT + kH + 14, escape(plot.x_labels[i]));
  svg += fmt::format("<text class=\"x-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kL + kW / 2,
                     kT + kH + 34, escape(plot.x_label));
  svg += fmt::format("<text class=\"y-label\" x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">"
                     "{1}</text>\n",
                     kT + kH / 2, escape(plot.y_label));
  svg += "</g>\n";
  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const auto& [name, ys] = plot.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < n; ++i) points += fmt::format("{}{},{}", i ? " " : "", px(i), py(ys[i]));
    svg += fmt::format("<g class=\"series\"><polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       points, color);
    for (std::size_t i = 0; i < n; ++i)
      svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"><title>{}: {}</title></circle>\n", px(i),
                         py(ys[i]), color, escape(plot.x_labels[i]), fmt_value(ys[i]));
    svg += "</g>\n";
    const double ly = kT + 14 + 16 * static_cast<double>(s);
    svg += fmt::format("<g class=\"legend\"><rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{}\"/>"
                       "<text x=\"{}\" y=\"{}\">{}</text></g>\n",
                       kL + kW + 20, ly - 4, color, kL + kW + 38, ly, escape(name));
  }
  svg += "</svg>\n";
  return svg;
}

std::map<std::string, std::string> render_figures(const json& doc) {
  check_results_document(doc);
  std::map<std::string, std::string> out;
  try {
    const std::string kind = doc.at("sweep_kind").get<std::string>();
    if (kind == "layers") {
      LinePlot plot{"Layer-wise recovery rate", "site (0 = embeddings)", "mean RR", {}, {}};
      std::vector<double> ys = doc.at("mean_rr").get<std::vector<double>>();
      for (const auto& s : doc.at("sites")) plot.x_labels.push_back(std::to_string(s.get<std::size_t>()));
      plot.series.emplace_back(
          doc.at("options").at("include_audio_positions").get<bool>() ? "all positions" : "text tokens", ys);
      out["layers.svg"] = render_line_plot(plot);
      Heatmap map{"Layer-wise recovery rate", "site", "", {}, {"mean RR"}, {ys}};
      map.col_labels = plot.x_labels;
      out["layers_heatmap.svg"] = render_heatmap(map);
    } else if (kind == "tokens") {
      const auto sites = doc.at("sites").get<std::vector<std::size_t>>();
      std::vector<std::string> site_labels;
      for (std::size_t s : sites) site_labels.push_back(std::to_string(s));
      std::vector<std::string> seg_names;
      for (const auto& s : doc.at("segment_summary")) {
        const std::string seg = s.at("segment").get<std::string>();
        if (std::find(seg_names.begin(), seg_names.end(), seg) == seg_names.end()) seg_names.push_back(seg);
      }
      for (const char* stat : {"mean_rr", "max_rr"}) {
        Heatmap map{fmt::format("Token-wise recovery rate by segment ({})", stat), "site", "segment", site_labels,
                    seg_names, {}};
        map.values.assign(seg_names.size(), std::vector<double>(sites.size(), 0.0));
        for (const auto& s : doc.at("segment_summary")) {
          const auto row = std::find(seg_names.begin(), seg_names.end(), s.at("segment").get<std::string>()) -
                           seg_names.begin();
          const auto col =
              std::find(sites.begin(), sites.end(), s.at("site").get<std::size_t>()) - sites.begin();
          map.values[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] = s.at(stat).get<double>();
        }
        out[fmt::format("tokens_segments_{}.svg", stat == std::string("mean_rr") ? "mean" : "max")] =
            render_heatmap(map);
      }
      if (const auto& g = doc.at("position_grid"); !g.is_null()) {
        Heatmap map{"Token-wise recovery rate by position", "site", "position", site_labels, {}, {}};
        const auto positions = g.at("positions").get<std::vector<std::size_t>>();
        const auto segs = g.at("segments").get<std::vector<std::string>>();
        const auto means = g.at("mean_rr").get<std::vector<std::vector<double>>>();
        for (std::size_t k = 0; k < positions.size(); ++k) {
          map.row_labels.push_back(fmt::format("{} ({})", positions[k], segs[k]));
          std::vector<double> row;
          for (std::size_t si = 0; si < sites.size(); ++si) row.push_back(means[si][k]);
          map.values.push_back(std::move(row));
        }
        out["tokens_positions.svg"] = render_heatmap(map);
      }
    } else {
      std::vector<double> rr;
      std::vector<std::string> labels;
      const auto& samples = doc.at("samples");
      const auto& results = doc.at("results");
      for (std::size_t i = 0; i < results.size(); ++i)
        if (!results[i].at("rr").is_null()) {
          rr.push_back(results[i].at("rr").get<double>());
          labels.push_back(samples[i].at("id").get<std::string>());
        }
      Heatmap map{"Recovery rate per sample", "sample", "", labels, {"RR"}, {rr}};
      out["single.svg"] = render_heatmap(map);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, fmt::format("malformed results document: {}", e.what()));
  }
  return out;
}

}  // namespace ctrace::report
