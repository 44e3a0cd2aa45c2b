#pragma once

#include "ptedit/geometry.hpp"

#include <vector>

namespace ptedit {

/// Cumulative signal-retention table ᾱ_0..ᾱ_T with ᾱ_0 = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha_bar;

  double sqrt_ab(int t) const;
  double sqrt_one_minus_ab(int t) const;
};

enum class ScheduleKind { Cosine };

/// Cosine schedule (s = 0.008). Per-step betas are capped at 0.999 so that
/// ᾱ_T stays positive. Throws InvalidT for T < 2.
NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::Cosine);

/// x_t = sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) eps. Accepts 0 <= t <= T; throws BadStep
/// otherwise and ShapeMismatch when eps does not match x0.
Points q_sample(const Points& x0, int t, const Points& eps, const NoiseSchedule& schedule);

/// K x 3 standard normal draw.
template <typename Rng>
Points standard_normal(std::size_t k, Rng& rng);

} // namespace ptedit

#include <random>

namespace ptedit {

template <typename Rng>
Points standard_normal(std::size_t k, Rng& rng)
{
  std::normal_distribution<double> n01(0.0, 1.0);
  Points p(static_cast<Eigen::Index>(k), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      p(i, j) = n01(rng);
  return p;
}

} // namespace ptedit
