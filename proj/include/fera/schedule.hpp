#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fera {

enum class ScheduleKind { linear, cosine };

ScheduleKind parse_schedule_kind(const std::string& name);
const char* schedule_kind_name(ScheduleKind kind) noexcept;

/// Discrete DDPM noise schedule. Index 0 is the clean signal: betas[0] = 0, alpha_bar[0] = 1,
/// and alpha_bar[t] = prod_{s=1..t} (1 - betas[s]).
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  std::size_t total_steps = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bar;

  void check_step(std::size_t t) const;
};

/// linear: betas evenly spaced in [1e-4, 2e-2]; cosine: squared-cosine alpha_bar with offset 0.008.
NoiseSchedule make_schedule(ScheduleKind kind, std::size_t total_steps);

}  // namespace fera
