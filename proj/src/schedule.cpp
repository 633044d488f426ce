#include "fera/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fera/errors.hpp"

namespace fera {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + name + "' (expected linear or cosine)");
}

const char* schedule_kind_name(ScheduleKind kind) noexcept {
  return kind == ScheduleKind::linear ? "linear" : "cosine";
}

void NoiseSchedule::check_step(std::size_t t) const {
  if (t > total_steps) {
    throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(total_steps) + "]");
  }
}

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t total_steps) {
  if (total_steps < 10) throw DomainError("noise schedule needs at least 10 steps");
  NoiseSchedule s;
  s.kind = kind;
  s.total_steps = total_steps;
  s.betas.assign(total_steps + 1, 0.0);
  const auto n = static_cast<double>(total_steps);
  if (kind == ScheduleKind::linear) {
    constexpr double lo = 1e-4;
    constexpr double hi = 2e-2;
    for (std::size_t t = 1; t <= total_steps; ++t) {
      s.betas[t] = lo + (hi - lo) * static_cast<double>(t - 1) / (n - 1.0);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / n + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0.0);
    for (std::size_t t = 1; t <= total_steps; ++t) {
      const double prev = f(static_cast<double>(t - 1)) / f0;
      const double cur = f(static_cast<double>(t)) / f0;
      s.betas[t] = std::clamp(1.0 - cur / prev, 1e-8, 0.999);
    }
  }
  s.alpha_bar.assign(total_steps + 1, 1.0);
  for (std::size_t t = 1; t <= total_steps; ++t) s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.betas[t]);
  return s;
}

}  // namespace fera
