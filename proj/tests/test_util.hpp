#pragma once

// Test-only helpers: random draws and independent reference computations.
// Nothing here calls into the scoring/gradient paths it is used to check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "prefrep/linalg.hpp"

namespace prefrep::tu {

inline std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

inline Matrix random_skew(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      p(i, j) = g(rng);
      p(j, i) = -p(i, j);
    }
  return p;
}

/// Householder QR of a gaussian matrix; returns the orthogonal factor.
inline Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  Matrix a(n, n);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = g(rng);
  Matrix q = Matrix::identity(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    std::vector<double> v(n, 0.0);
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    const double alpha = a(k, k) > 0 ? -norm : norm;
    for (std::size_t i = k; i < n; ++i) v[i] = a(i, k);
    v[k] -= alpha;
    double vn = 0.0;
    for (double x : v) vn += x * x;
    if (vn == 0.0) continue;
    // a <- (I - 2 v v^T / vn) a ; q <- q (I - 2 v v^T / vn)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < n; ++i) s += v[i] * a(i, j);
      for (std::size_t i = k; i < n; ++i) a(i, j) -= 2.0 * v[i] * s / vn;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k; j < n; ++j) s += q(i, j) * v[j];
      for (std::size_t j = k; j < n; ++j) q(i, j) -= 2.0 * s * v[j] / vn;
    }
  }
  return q;
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Mixed relative/absolute gradient comparison: each coordinate must satisfy
/// |a - b| <= rel * max(|a|, |b|) or |a - b| <= abs_floor.
struct GradCompare {
  double worst_rel = 0.0;
  bool ok = true;
};

/// Relative error |a - n| / max(|a|, |n|) per coordinate. Coordinates where
/// both values are below `zero_floor` are exact zeros up to difference noise
/// and are checked absolutely instead.
inline GradCompare compare_gradients(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                     double rel = 1e-4, double zero_floor = 1e-7) {
  GradCompare out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = std::abs(analytic[i] - numeric[i]);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale < zero_floor) {
      if (d > zero_floor) out.ok = false;
      continue;
    }
    const double r = d / scale;
    out.worst_rel = std::max(out.worst_rel, r);
    if (r > rel) out.ok = false;
  }
  return out;
}

/// Dense v_i^T D R D v_j via explicit matrices (independent of skew_score).
inline double dense_score(const std::vector<double>& vi, const std::vector<double>& vj,
                          const std::vector<double>& lambdas) {
  const std::size_t n = vi.size();
  Matrix d(n, n), r(n, n);
  for (std::size_t l = 0; l < n / 2; ++l) {
    d(2 * l, 2 * l) = d(2 * l + 1, 2 * l + 1) = std::sqrt(lambdas[l]);
    r(2 * l, 2 * l + 1) = -1.0;
    r(2 * l + 1, 2 * l) = 1.0;
  }
  const Matrix op = d * r * d;
  const auto rv = op.apply(vj);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += vi[i] * rv[i];
  return s;
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace prefrep::tu
