#pragma once

// Self-contained SVG charts. Each chart embeds the CSV text it was drawn
// from inside a <metadata> element so the plotted data can be checked
// against the companion file.

#include <iosfwd>
#include <string>
#include <vector>

namespace fera {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::vector<Series> series;
};

/// values[row][col]; rows are drawn top to bottom, columns left to right.
struct Heatmap {
  std::string title;
  std::string x_label;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> values;
  double vmin = 0.0;
  double vmax = 1.0;
};

void write_line_plot_svg(std::ostream& os, const LinePlot& plot, const std::string& csv_text);
void write_heatmap_svg(std::ostream& os, const Heatmap& map, const std::string& csv_text);

/// The text between <metadata> tags, unescaped.
std::string embedded_csv(const std::string& svg);

}  // namespace fera
