#pragma once

// Registered central-difference gradient checks over every differentiable
// component, evaluated in double precision on small fields.

#include <cstdint>
#include <string>
#include <vector>

#include "fera/gradcheck.hpp"

namespace fera {

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  double tolerance = 1e-4;
  bool passed() const noexcept { return result.max_rel_error < tolerance; }
};

/// Names of the registered checks, in execution order.
std::vector<std::string> registered_grad_checks();

/// Runs one registered check. Throws LookupError for an unknown name.
GradCheckEntry run_grad_check(const std::string& name, std::uint64_t seed, double tolerance = 1e-4);

/// Runs every registered check.
std::vector<GradCheckEntry> run_all_grad_checks(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace fera
