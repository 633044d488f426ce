#include "fera/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "fera/csv.hpp"
#include "fera/errors.hpp"

namespace fera {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto end = s.find(';', i);
    const std::string ent = s.substr(i, end - i + 1);
    if (ent == "&amp;") out += '&';
    else if (ent == "&lt;") out += '<';
    else if (ent == "&gt;") out += '>';
    else if (ent == "&quot;") out += '"';
    else out += ent;
    i = end;
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void header(std::ostream& os, const std::string& title, const std::string& csv_text) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<metadata>" << escape(csv_text) << "</metadata>\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

/// Stepwise-rounded tick spacing covering [lo, hi] with about n ticks.
double nice_step(double span, int n) {
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace

void write_line_plot_svg(std::ostream& os, const LinePlot& plot, const std::string& csv_text) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return plot.log_y ? std::log10(y) : y; };
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (plot.log_y && !(s.y[i] > 0.0))) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (ty(y) - y0) / (y1 - y0) * ph; };

  header(os, plot.title, csv_text);
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const double xs = nice_step(x1 - x0, 6);
  for (double v = std::ceil(x0 / xs) * xs; v <= x1 + 1e-9 * xs; v += xs) {
    os << "<text x=\"" << num(px(v)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">"
       << format_real(v) << "</text>\n";
  }
  const double ys = nice_step(y1 - y0, 5);
  for (double v = std::ceil(y0 / ys) * ys; v <= y1 + 1e-9 * ys; v += ys) {
    const double yy = kTop + ph - (v - y0) / (y1 - y0) * ph;
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << num(yy) << "\" y2=\"" << num(yy)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(yy + 4) << "\" text-anchor=\"end\">"
       << (plot.log_y ? "1e" + format_real(v) : format_real(v)) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
     << escape(plot.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << kTop + ph / 2 << ")\">" << escape(plot.y_label) << "</text>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (plot.log_y && !(s.y[i] > 0.0))) continue;
      os << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = kTop + 14 + 16 * static_cast<double>(k);
    os << "<line x1=\"" << kLeft + pw + 12 << "\" x2=\"" << kLeft + pw + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
}

void write_heatmap_svg(std::ostream& os, const Heatmap& map, const std::string& csv_text) {
  const std::size_t rows = map.values.size();
  const std::size_t cols = rows ? map.values.front().size() : 0;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  const double cw = cols ? pw / static_cast<double>(cols) : pw;
  const double ch = rows ? ph / static_cast<double>(rows) : ph;
  const double span = map.vmax > map.vmin ? map.vmax - map.vmin : 1.0;
  header(os, map.title, csv_text);
  for (std::size_t r = 0; r < rows; ++r) {
    if (map.values[r].size() != cols) throw ShapeError("heatmap rows have different lengths");
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::clamp((map.values[r][c] - map.vmin) / span, 0.0, 1.0);
      // White to dark blue.
      const int red = static_cast<int>(std::lround(255.0 * (1.0 - 0.9 * v)));
      const int green = static_cast<int>(std::lround(255.0 * (1.0 - 0.7 * v)));
      const int blue = static_cast<int>(std::lround(255.0 * (1.0 - 0.3 * v)));
      os << "<rect x=\"" << num(kLeft + cw * static_cast<double>(c)) << "\" y=\""
         << num(kTop + ch * static_cast<double>(r)) << "\" width=\"" << num(cw + 0.05) << "\" height=\""
         << num(ch + 0.05) << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\"/>\n";
    }
    if (r < map.row_labels.size()) {
      os << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(kTop + ch * (static_cast<double>(r) + 0.5) + 4)
         << "\" text-anchor=\"end\">" << escape(map.row_labels[r]) << "</text>\n";
    }
  }
  const std::size_t stride = std::max<std::size_t>(1, cols / 10);
  for (std::size_t c = 0; c < cols && c < map.col_labels.size(); c += stride) {
    os << "<text x=\"" << num(kLeft + cw * (static_cast<double>(c) + 0.5)) << "\" y=\"" << num(kTop + ph + 16)
       << "\" text-anchor=\"middle\">" << escape(map.col_labels[c]) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
     << escape(map.x_label) << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << kLeft + pw + 12 << "\" y=\"" << kTop + 12 << "\">" << format_real(map.vmax) << "</text>\n";
  os << "<text x=\"" << kLeft + pw + 12 << "\" y=\"" << kTop + ph << "\">" << format_real(map.vmin) << "</text>\n";
  os << "</svg>\n";
}

std::string embedded_csv(const std::string& svg) {
  const auto b = svg.find("<metadata>");
  const auto e = svg.find("</metadata>");
  if (b == std::string::npos || e == std::string::npos || e < b) return "";
  return unescape(svg.substr(b + 10, e - b - 10));
}

}  // namespace fera
