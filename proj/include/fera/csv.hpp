#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace fera {

/// Nine significant digits; infinities as "inf"/"-inf", NaN as "nan".
std::string format_real(double v);

/// Comma-separated row terminated by a single LF.
void write_csv_row(std::ostream& os, std::span<const std::string> cells);
void write_csv_row(std::ostream& os, std::span<const double> cells);

}  // namespace fera
