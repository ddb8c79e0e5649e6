#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>

namespace dplbfgs {

inline double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double nrm2_sq(std::span<const double> x) { return dot(x, x); }

inline double nrm2(std::span<const double> x) { return std::sqrt(nrm2_sq(x)); }

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void fill_zero(std::span<double> x) {
  for (auto& v : x) v = 0.0;
}

inline double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

}  // namespace dplbfgs
