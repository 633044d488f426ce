#include "fera/csv.hpp"

#include <cmath>
#include <cstdio>

namespace fera {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_csv_row(std::ostream& os, std::span<const std::string> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i != 0) os << ',';
    os << cells[i];
  }
  os << '\n';
}

void write_csv_row(std::ostream& os, std::span<const double> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i != 0) os << ',';
    os << format_real(cells[i]);
  }
  os << '\n';
}

}  // namespace fera
