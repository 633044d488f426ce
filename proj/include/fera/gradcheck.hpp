#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fera/tape.hpp"

namespace fera {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_name;
  std::size_t parameter_count = 0;
};

using ScalarObjective = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Compares an analytic gradient with central differences, step h = 1e-5 * (1 + |theta|).
/// The error per parameter is |analytic - numeric| / max(1, |numeric|).
/// Throws NumericError naming the parameter if either gradient is non-finite.
GradCheckResult grad_check(const ScalarObjective& f, const GradientFn& grad, std::span<const double> point,
                           std::span<const std::string> names = {});

/// Builds a scalar objective on a fresh double tape from one tracked parameter vector.
using TapeObjective = std::function<Var(Tape<double>&, Var params)>;

GradCheckResult grad_check(const TapeObjective& build, std::span<const double> point,
                           std::span<const std::string> names = {});

}  // namespace fera
