#pragma once

#include <cstddef>
#include <vector>

namespace fera {

/// Blend weights over M experts; a point on the probability simplex.
struct RoutingWeights {
  std::vector<double> alpha;

  std::size_t size() const noexcept { return alpha.size(); }
  /// Throws ShapeError on a length mismatch and DomainError off the simplex (tolerance 1e-6).
  void validate(std::size_t experts) const;

  static RoutingWeights uniform(std::size_t experts);
  static RoutingWeights one_hot(std::size_t experts, std::size_t index);
};

}  // namespace fera
