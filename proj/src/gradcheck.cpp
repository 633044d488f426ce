#include "fera/gradcheck.hpp"

#include <cmath>

#include "fera/errors.hpp"

namespace fera {
namespace {

std::string param_name(std::span<const std::string> names, std::size_t i) {
  return i < names.size() ? names[i] : "param[" + std::to_string(i) + "]";
}

}  // namespace

GradCheckResult grad_check(const ScalarObjective& f, const GradientFn& grad, std::span<const double> point,
                           std::span<const std::string> names) {
  const std::vector<double> analytic = grad(point);
  if (analytic.size() != point.size()) throw ShapeError("gradient length does not match parameter count");
  std::vector<double> theta(point.begin(), point.end());
  GradCheckResult result;
  result.parameter_count = point.size();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(analytic[i])) throw NumericError("non-finite analytic gradient for " + param_name(names, i));
    const double orig = theta[i];
    const double h = 1e-5 * (1.0 + std::abs(orig));
    theta[i] = orig + h;
    const double fp = f(theta);
    theta[i] = orig - h;
    const double fm = f(theta);
    theta[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    if (!std::isfinite(numeric)) throw NumericError("non-finite numeric gradient for " + param_name(names, i));
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err > result.max_rel_error || i == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      if (err >= result.max_rel_error) {
        result.worst_index = i;
        result.worst_name = param_name(names, i);
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const TapeObjective& build, std::span<const double> point,
                           std::span<const std::string> names) {
  auto f = [&](std::span<const double> p) {
    Tape<double> tape;
    Var params = tape.vector(p, false);
    return tape.scalar(build(tape, params));
  };
  auto g = [&](std::span<const double> p) {
    Tape<double> tape;
    Var params = tape.vector(p, true);
    Var out = build(tape, params);
    tape.backward(out);
    auto gr = tape.grad(params);
    return std::vector<double>(gr.begin(), gr.end());
  };
  return grad_check(f, g, point, names);
}

}  // namespace fera
