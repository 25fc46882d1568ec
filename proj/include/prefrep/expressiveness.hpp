#pragma once

/// \file expressiveness.hpp
/// Explicit embeddings that realize an arbitrary real skew-symmetric score
/// matrix P under the block preference operator, plus a verifier for the
/// canonical operator form.
///
/// construct_real: v_i has a_i = e_i and b_i = P_i / 2 (row i halved), stored
/// in the block layout, so block l of v_i is (delta_il, P_il / 2). Then
///   v_i^T R v_j = b_i . a_j - a_i . b_j = P_ij / 2 - P_ji / 2 = P_ij.
///
/// construct_spectral: for even n, P = U (sum_l lambda_l J_l) U^T with U
/// orthogonal; row i of U D (D = sqrt(lambda) blocks) is v_i.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "prefrep/core.hpp"
#include "prefrep/error.hpp"
#include "prefrep/linalg.hpp"

namespace prefrep {

/// Square matrix with P = -P^T (within 1e-12) and a zero diagonal.
class SkewMatrix {
 public:
  static constexpr double kDefaultTolerance = 1e-12;

  explicit SkewMatrix(Matrix values, double tol = kDefaultTolerance) : values_(std::move(values)) {
    if (!values_.square() || values_.rows() == 0) {
      throw ValidationError("skew matrix must be square and nonempty, got " +
                            std::to_string(values_.rows()) + "x" + std::to_string(values_.cols()));
    }
    double worst = -1.0;
    std::size_t wi = 0, wj = 0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i; j < size(); ++j) {
        const double asym = std::abs(values_(i, j) + values_(j, i));
        if (asym > worst) {
          worst = asym;
          wi = i;
          wj = j;
        }
      }
    if (worst > tol) {
      throw ValidationError("matrix is not skew-symmetric: |P(" + std::to_string(wi) + "," +
                            std::to_string(wj) + ") + P(" + std::to_string(wj) + "," +
                            std::to_string(wi) + ")| = " + std::to_string(worst) +
                            " (cell row " + std::to_string(wi + 1) + ", column " +
                            std::to_string(wj + 1) + ")");
    }
  }

  std::size_t size() const noexcept { return values_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& matrix() const noexcept { return values_; }

 private:
  Matrix values_;
};

struct RealConstruction {
  std::vector<EmbeddingVector> embeddings;  // each in R^{2n}, block layout
  std::size_t k = 0;                        // operator block count (= n)
};

inline RealConstruction construct_real(const SkewMatrix& p) {
  const std::size_t n = p.size();
  RealConstruction out;
  out.k = n;
  out.embeddings.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(2 * n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      v[2 * l] = (i == l) ? 1.0 : 0.0;
      v[2 * l + 1] = 0.5 * p(i, l);
    }
    out.embeddings.emplace_back(std::move(v));
  }
  return out;
}

/// Gram matrix of scores v_i^T D R D v_j over a set of embeddings.
inline Matrix rescore(const std::vector<EmbeddingVector>& embeddings, const ScaleVector& scales) {
  const std::size_t n = embeddings.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = skew_score(embeddings[i], embeddings[j], scales);
  return m;
}

inline Matrix rescore(const std::vector<EmbeddingVector>& embeddings) {
  if (embeddings.empty()) return {};
  return rescore(embeddings, ScaleVector::ones(embeddings.front().blocks()));
}

// ---------------------------------------------------------------------------
// Complex form

struct ComplexEmbedding {
  std::vector<double> re;
  std::vector<double> im;

  std::complex<double> operator[](std::size_t i) const { return {re[i], im[i]}; }
  std::size_t size() const noexcept { return re.size(); }
};

/// Hermitian inner product <u, w> = sum_k u_k conj(w_k), conjugate-linear in
/// the second argument. For k=1 and unit phases, Im <e^{i a}, e^{i b}> = sin(a - b).
inline std::complex<double> hermitian_inner(const ComplexEmbedding& u, const ComplexEmbedding& w) {
  if (u.size() != w.size()) throw ValidationError("complex embeddings differ in length");
  std::complex<double> s{0.0, 0.0};
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * std::conj(w[k]);
  return s;
}

/// v_i = e_i + i * P_i / 2.
inline std::vector<ComplexEmbedding> construct_complex(const SkewMatrix& p) {
  const std::size_t n = p.size();
  std::vector<ComplexEmbedding> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].re.assign(n, 0.0);
    out[i].re[i] = 1.0;
    out[i].im.resize(n);
    for (std::size_t j = 0; j < n; ++j) out[i].im[j] = 0.5 * p(i, j);
  }
  return out;
}

inline Matrix rescore_complex(const std::vector<ComplexEmbedding>& embeddings) {
  const std::size_t n = embeddings.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = hermitian_inner(embeddings[i], embeddings[j]).imag();
  return m;
}

// ---------------------------------------------------------------------------
// Spectral form

struct SpectralDecomposition {
  Matrix u;                               // n x n orthogonal; columns (2l, 2l+1) span block l
  std::vector<double> lambdas;            // k values, descending, >= 0
  std::vector<EmbeddingVector> embeddings;  // row i of U D
};

namespace detail {

inline void orthogonalize_against(std::vector<double>& x, const std::vector<std::vector<double>>& basis) {
  // Two passes of modified Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& b : basis) {
      const double c = dot(x, b);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= c * b[i];
    }
}

}  // namespace detail

/// Eigen-structure of S = P P^T (eigenvalues lambda_l^2, each doubled) gives
/// the order; each block is built by taking the next S-eigenvector u not yet
/// spanned, then pairing it with w = P u / |P u| so that P u = lambda w and
/// P w = -lambda u. Blocks with lambda below 1e-10 are null blocks and get an
/// arbitrary orthonormal completion.
inline SpectralDecomposition construct_spectral(const SkewMatrix& p) {
  const std::size_t n = p.size();
  if (n % 2 != 0) {
    throw ValidationError("spectral construction needs an even dimension, got " + std::to_string(n));
  }
  const Matrix& pm = p.matrix();
  const Matrix s = pm * pm.transpose();
  const SymmetricEigen eig = jacobi_eigen(s);
  const double scale = std::max(1.0, max_abs(pm));

  std::vector<std::vector<double>> basis;
  std::vector<double> lambdas;
  std::vector<std::vector<double>> null_candidates;

  for (std::size_t c = 0; c < n && basis.size() < n; ++c) {
    std::vector<double> u = eig.vectors.column(c);
    detail::orthogonalize_against(u, basis);
    const double un = norm2(u);
    if (un < 0.5) continue;  // already spanned by earlier blocks
    for (double& x : u) x /= un;

    std::vector<double> w = pm.apply(u);
    const double lambda = norm2(w);
    if (lambda < 1e-10 * scale) {
      null_candidates.push_back(std::move(u));
      continue;
    }
    for (double& x : w) x /= lambda;
    detail::orthogonalize_against(w, basis);
    {
      const double c1 = dot(w, u);
      for (std::size_t i = 0; i < n; ++i) w[i] -= c1 * u[i];
      const double wn = norm2(w);
      for (double& x : w) x /= wn;
    }
    basis.push_back(std::move(u));
    basis.push_back(std::move(w));
    lambdas.push_back(dot(basis.back(), pm.apply(basis[basis.size() - 2])));
  }

  // Null blocks: orthonormal completion of whatever is left.
  std::vector<std::vector<double>> null_basis;
  auto try_add_null = [&](std::vector<double> x) {
    std::vector<std::vector<double>> all = basis;
    all.insert(all.end(), null_basis.begin(), null_basis.end());
    detail::orthogonalize_against(x, all);
    const double xn = norm2(x);
    if (xn < 0.5) return;
    for (double& v : x) v /= xn;
    null_basis.push_back(std::move(x));
  };
  for (auto& x : null_candidates) try_add_null(std::move(x));
  for (std::size_t e = 0; e < n && basis.size() + null_basis.size() < n; ++e) {
    std::vector<double> x(n, 0.0);
    x[e] = 1.0;
    try_add_null(std::move(x));
  }
  if (basis.size() + null_basis.size() != n || null_basis.size() % 2 != 0) {
    throw NumericalError("spectral construction could not complete an orthonormal basis");
  }
  for (std::size_t i = 0; i < null_basis.size(); i += 2) {
    basis.push_back(null_basis[i]);
    basis.push_back(null_basis[i + 1]);
    lambdas.push_back(0.0);
  }

  for (double& lam : lambdas) {
    if (lam < -1e-10) {
      throw NumericalError("spectral construction produced a negative block scale " +
                           std::to_string(lam));
    }
    if (lam < 1e-10) lam = 0.0;
  }

  SpectralDecomposition out;
  out.lambdas = lambdas;
  out.u = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < n; ++r) out.u(r, c) = basis[c][r];
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(n);
    for (std::size_t l = 0; l < n / 2; ++l) {
      const double root = std::sqrt(lambdas[l]);
      v[2 * l] = root * out.u(i, 2 * l);
      v[2 * l + 1] = root * out.u(i, 2 * l + 1);
    }
    out.embeddings.emplace_back(std::move(v));
  }
  return out;
}

/// max |U^T U - I|.
inline double orthogonality_residual(const Matrix& u) {
  return max_abs_diff(u.transpose() * u, Matrix::identity(u.cols()));
}

// ---------------------------------------------------------------------------
// Canonical operator check

struct CanonicalReport {
  bool canonical = false;
  double skew_residual = 0.0;        // max |R + R^T|
  double orthogonality_residual = 0.0;  // max |R^T R - I|
  double square_residual = 0.0;      // max |R^2 + I|
  std::string diagnostics;
};

/// A 2k x 2k matrix is a valid preference operator (U J U^T for some
/// orthogonal U) iff it is skew-symmetric and orthogonal.
inline CanonicalReport canonical_check(const Matrix& r, double tol = 1e-10) {
  if (!r.square() || r.rows() == 0 || r.rows() % 2 != 0) {
    throw ValidationError("canonical_check needs a square matrix of even dimension");
  }
  const std::size_t n = r.rows();
  const Matrix id = Matrix::identity(n);
  CanonicalReport rep;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      rep.skew_residual = std::max(rep.skew_residual, std::abs(r(i, j) + r(j, i)));
  rep.orthogonality_residual = max_abs_diff(r.transpose() * r, id);
  Matrix sq = r * r;
  for (std::size_t i = 0; i < n; ++i) sq(i, i) += 1.0;
  rep.square_residual = max_abs(sq);

  const bool skew = rep.skew_residual < tol;
  const bool orth = rep.orthogonality_residual < tol;
  rep.canonical = skew && orth;
  if (!skew) rep.diagnostics += "not skew-symmetric (max |R+R^T| = " + std::to_string(rep.skew_residual) + "); ";
  if (!orth) {
    rep.diagnostics += "not magnitude-preserving (max |R^T R - I| = " +
                       std::to_string(rep.orthogonality_residual) + "); ";
  }
  if (rep.square_residual >= tol) {
    rep.diagnostics += "R^2 != -I (max |R^2 + I| = " + std::to_string(rep.square_residual) + "); ";
  }
  if (rep.canonical) rep.diagnostics = "ok";
  return rep;
}

}  // namespace prefrep
