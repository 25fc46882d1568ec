#pragma once

/// \file core.hpp
/// Skew-symmetric preference scoring.
///
/// An embedding in R^{2k} is laid out block-wise: block l occupies
/// coordinates (2l, 2l+1) = (a_l, b_l). The preference operator R is the
/// block-diagonal matrix of k copies of [[0,-1],[1,0]], and the context scale
/// matrix D has blocks sqrt(lambda_l) * I2. The score of i over j is
///
///   s(i, j) = v_i^T D R D v_j = sum_l lambda_l * (b_i,l * a_j,l - a_i,l * b_j,l)
///
/// computed termwise in O(k) without materializing R.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefrep/error.hpp"
#include "prefrep/linalg.hpp"

namespace prefrep {

/// A point in R^{2k}; coordinates are validated finite on construction.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> coords) : coords_(std::move(coords)) {
    if (coords_.empty() || coords_.size() % 2 != 0) {
      throw ValidationError("embedding length must be a positive even number, got " +
                            std::to_string(coords_.size()));
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      if (!std::isfinite(coords_[i])) {
        throw ValidationError("embedding coordinate " + std::to_string(i) + " is not finite");
      }
    }
  }

  std::size_t blocks() const noexcept { return coords_.size() / 2; }
  std::size_t size() const noexcept { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const noexcept { return coords_; }
  double norm() const { return norm2(coords_); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> coords_;
};

/// Per-block nonnegative eigenvalue scales lambda_l.
class ScaleVector {
 public:
  ScaleVector() = default;
  explicit ScaleVector(std::vector<double> lambdas) : lambdas_(std::move(lambdas)) {
    if (lambdas_.empty()) throw ValidationError("scale vector must have at least one block");
    for (std::size_t l = 0; l < lambdas_.size(); ++l) {
      if (!std::isfinite(lambdas_[l]) || lambdas_[l] < 0.0) {
        throw ValidationError("scale " + std::to_string(l) + " must be finite and >= 0, got " +
                              std::to_string(lambdas_[l]));
      }
    }
  }

  static ScaleVector ones(std::size_t k) { return ScaleVector(std::vector<double>(k, 1.0)); }

  std::size_t blocks() const noexcept { return lambdas_.size(); }
  double operator[](std::size_t l) const { return lambdas_[l]; }
  std::span<const double> values() const noexcept { return lambdas_; }

 private:
  std::vector<double> lambdas_;
};

namespace detail {

inline void require_blocks(std::size_t a, std::size_t b, const char* what_a, const char* what_b) {
  if (a != b) {
    throw ValidationError(std::string("block count mismatch: ") + what_a + " has k=" +
                          std::to_string(a) + ", " + what_b + " has k=" + std::to_string(b));
  }
}

}  // namespace detail

/// s(i, j) = v_i^T D R D v_j. Swapping arguments negates every summand, so
/// antisymmetry holds exactly in floating point.
inline double skew_score(const EmbeddingVector& vi, const EmbeddingVector& vj,
                         const ScaleVector& scales) {
  detail::require_blocks(vi.blocks(), vj.blocks(), "v_i", "v_j");
  detail::require_blocks(vi.blocks(), scales.blocks(), "embeddings", "scales");
  double s = 0.0;
  for (std::size_t l = 0; l < vi.blocks(); ++l) {
    const double ai = vi[2 * l], bi = vi[2 * l + 1];
    const double aj = vj[2 * l], bj = vj[2 * l + 1];
    s += scales[l] * (bi * aj - ai * bj);
  }
  return s;
}

inline double skew_score(const EmbeddingVector& vi, const EmbeddingVector& vj) {
  return skew_score(vi, vj, ScaleVector::ones(vi.blocks()));
}

/// Logistic sigmoid in the branch form that never evaluates exp of a large
/// positive argument.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// log sigma(z) = -softplus(-z).
inline double log_sigmoid(double z) { return -softplus(-z); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// sigma(s / beta).
inline double preference_prob(double score, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ValidationError("beta must be a positive finite number, got " + std::to_string(beta));
  }
  return sigmoid(score / beta);
}

/// D R D v. Each block (a, b) maps to lambda_l * (-b, a).
inline EmbeddingVector apply_operator(const EmbeddingVector& v, const ScaleVector& scales) {
  detail::require_blocks(v.blocks(), scales.blocks(), "embedding", "scales");
  std::vector<double> out(v.size());
  for (std::size_t l = 0; l < v.blocks(); ++l) {
    out[2 * l] = -scales[l] * v[2 * l + 1];
    out[2 * l + 1] = scales[l] * v[2 * l];
  }
  return EmbeddingVector(std::move(out));
}

inline EmbeddingVector apply_operator(const EmbeddingVector& v) {
  return apply_operator(v, ScaleVector::ones(v.blocks()));
}

/// Dense 2k x 2k preference operator. Only used for verification.
inline Matrix materialize_operator(std::size_t k) {
  Matrix r(2 * k, 2 * k);
  for (std::size_t l = 0; l < k; ++l) {
    r(2 * l, 2 * l + 1) = -1.0;
    r(2 * l + 1, 2 * l) = 1.0;
  }
  return r;
}

/// Unit-length copy; throws on a zero vector since its direction is undefined.
inline EmbeddingVector normalized(const EmbeddingVector& v) {
  const double n = v.norm();
  if (n == 0.0) throw ValidationError("cannot normalize a zero-norm embedding");
  std::vector<double> out(v.coords().begin(), v.coords().end());
  for (double& x : out) x /= n;
  return EmbeddingVector(std::move(out));
}

}  // namespace prefrep
