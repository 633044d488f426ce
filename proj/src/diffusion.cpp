#include "fera/diffusion.hpp"

#include <cmath>

#include "fera/errors.hpp"

namespace fera {

template <class T>
BasicField<T> forward_corrupt(const BasicField<T>& x0, std::size_t t, const NoiseSchedule& schedule,
                              const BasicField<T>& noise) {
  schedule.check_step(t);
  require_same_shape(x0, noise, "forward_corrupt");
  const double ab = schedule.alpha_bar[t];
  if (ab == 1.0) return x0;
  return axpby(static_cast<T>(std::sqrt(ab)), x0, static_cast<T>(std::sqrt(1.0 - ab)), noise);
}

template <class T>
BasicField<T> x0_estimate(const BasicField<T>& x_t, const BasicField<T>& eps_hat, std::size_t t,
                          const NoiseSchedule& schedule) {
  schedule.check_step(t);
  require_same_shape(x_t, eps_hat, "x0_estimate");
  const double ab = schedule.alpha_bar[t];
  if (ab < kMinAlphaBarForInversion) {
    throw NumericError("alpha_bar at step " + std::to_string(t) + " is too small to invert");
  }
  const double inv = 1.0 / std::sqrt(ab);
  return axpby(static_cast<T>(inv), x_t, static_cast<T>(-std::sqrt(1.0 - ab) * inv), eps_hat);
}

template BasicField<float> forward_corrupt<float>(const BasicField<float>&, std::size_t, const NoiseSchedule&,
                                                  const BasicField<float>&);
template BasicField<double> forward_corrupt<double>(const BasicField<double>&, std::size_t, const NoiseSchedule&,
                                                    const BasicField<double>&);
template BasicField<float> x0_estimate<float>(const BasicField<float>&, const BasicField<float>&, std::size_t,
                                              const NoiseSchedule&);
template BasicField<double> x0_estimate<double>(const BasicField<double>&, const BasicField<double>&, std::size_t,
                                                const NoiseSchedule&);

}  // namespace fera
