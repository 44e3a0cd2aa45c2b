#pragma once

#include "ptedit/error.hpp"

#include <doctest.h>

#include <random>

// Passes when `expr` throws ptedit::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                                                                          \
  do {                                                                                                                 \
    bool thrown_ = false;                                                                                              \
    try {                                                                                                              \
      (void)(expr);                                                                                                    \
    } catch (const ptedit::Error& e_) {                                                                                \
      thrown_ = true;                                                                                                  \
      CHECK_MESSAGE(e_.kind() == (expected_kind), "got " << std::string(ptedit::to_string(e_.kind())));                            \
    }                                                                                                                  \
    CHECK_MESSAGE(thrown_, "expected " << std::string(ptedit::to_string(expected_kind)));                                          \
  } while (false)

namespace testutil {

inline ptedit::Points random_points(std::size_t n, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  ptedit::Points p(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int c = 0; c < 3; ++c)
      p(i, c) = u(rng);
  return p;
}

} // namespace testutil
