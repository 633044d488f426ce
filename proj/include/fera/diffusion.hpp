#pragma once

#include <cstddef>

#include "fera/field.hpp"
#include "fera/schedule.hpp"

namespace fera {

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
template <class T>
BasicField<T> forward_corrupt(const BasicField<T>& x0, std::size_t t, const NoiseSchedule& schedule,
                              const BasicField<T>& noise);

inline constexpr double kMinAlphaBarForInversion = 1e-8;

/// Clean-signal estimate from an epsilon prediction: (x_t - sqrt(1 - ab) * eps_hat) / sqrt(ab).
template <class T>
BasicField<T> x0_estimate(const BasicField<T>& x_t, const BasicField<T>& eps_hat, std::size_t t,
                          const NoiseSchedule& schedule);

}  // namespace fera
