#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctrace::report {

// Diverging RR color scale, linear in RGB between three anchors:
//   RR 0.0 -> #2166ac (blue), RR 0.5 -> #f7f7f7 (near white), RR 1.0 -> #b2182b (red).
// Values outside [0, 1] take the nearest endpoint color and the cell gets an
// overflow marker: an upward triangle (class "overflow-high") above 1, a
// downward triangle (class "overflow-low") below 0.
inline constexpr const char* kColorAtZero = "#2166ac";
inline constexpr const char* kColorAtHalf = "#f7f7f7";
inline constexpr const char* kColorAtOne = "#b2182b";

std::string rr_color(double rr);

struct Heatmap {
  std::string title;
  std::string x_label;  // columns
  std::string y_label;  // rows
  std::vector<std::string> col_labels;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> values;  // [row][col]
};

/// One <rect class="cell"> per value, axis labels, and a color legend.
/// Throws InvalidSpec on an empty or ragged grid, Numeric on non-finite values.
std::string render_heatmap(const Heatmap& map);

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> x_labels;
  std::vector<std::pair<std::string, std::vector<double>>> series;
};

std::string render_line_plot(const LinePlot& plot);

/// Every figure for a results document, keyed by file name. Pure function of
/// the document.
std::map<std::string, std::string> render_figures(const nlohmann::json& results);

}  // namespace ctrace::report
