#include "ptedit/schedule.hpp"

#include "ptedit/error.hpp"

#include <cmath>
#include <numbers>

namespace ptedit {

double
NoiseSchedule::sqrt_ab(int t) const
{
  return std::sqrt(alpha_bar.at(static_cast<std::size_t>(t)));
}

double
NoiseSchedule::sqrt_one_minus_ab(int t) const
{
  return std::sqrt(1.0 - alpha_bar.at(static_cast<std::size_t>(t)));
}

NoiseSchedule
make_schedule(int T, ScheduleKind kind)
{
  if (T < 2)
    throw Error(ErrorKind::InvalidT, "schedule needs T >= 2, got " + std::to_string(T));
  (void)kind;
  constexpr double s = 0.008;
  constexpr double max_beta = 0.999;
  const auto f = [&](double t) {
    const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule out;
  out.T = T;
  out.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
  out.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double raw = f(t) / f(0.0);
    const double prev = out.alpha_bar[static_cast<std::size_t>(t) - 1];
    const double beta = std::min(1.0 - raw / prev, max_beta);
    out.alpha_bar[static_cast<std::size_t>(t)] = prev * (1.0 - beta);
  }
  return out;
}

Points
q_sample(const Points& x0, int t, const Points& eps, const NoiseSchedule& schedule)
{
  if (t < 0 || t > schedule.T)
    throw Error(ErrorKind::BadStep, "step " + std::to_string(t) + " outside [0, T]");
  if (eps.rows() != x0.rows())
    throw Error(ErrorKind::ShapeMismatch, "noise and cloud differ in point count");
  return schedule.sqrt_ab(t) * x0 + schedule.sqrt_one_minus_ab(t) * eps;
}

} // namespace ptedit
