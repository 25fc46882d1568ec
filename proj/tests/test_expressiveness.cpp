#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "prefrep/expressiveness.hpp"
#include "prefrep/models.hpp"
#include "prefrep/training.hpp"
#include "test_util.hpp"

using namespace prefrep;

TEST(ConstructReal, ZeroMatrix) {
  const auto c = construct_real(SkewMatrix(Matrix(4, 4)));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(c.embeddings[i][2 * l + 1], 0.0);
  EXPECT_EQ(max_abs(rescore(c.embeddings)), 0.0);
}

TEST(ConstructReal, TwoByTwoHandWorked) {
  const auto c = construct_real(SkewMatrix(Matrix::from_rows({{0, 1}, {-1, 0}})));
  // Block layout of v1 = [e1; (0, 1/2)] and v2 = [e2; (-1/2, 0)].
  EXPECT_EQ(c.embeddings[0], EmbeddingVector({1.0, 0.0, 0.0, 0.5}));
  EXPECT_EQ(c.embeddings[1], EmbeddingVector({0.0, -0.5, 1.0, 0.0}));
  EXPECT_EQ(skew_score(c.embeddings[0], c.embeddings[1]), 1.0);
}

TEST(ConstructReal, ReconstructsRandomMatrices) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + t % 16;
    const Matrix p = tu::random_skew(n, rng, 3.0);
    const auto c = construct_real(SkewMatrix(p));
    EXPECT_LT(max_abs_diff(rescore(c.embeddings), p), 1e-12);
  }
}

TEST(ConstructReal, RejectsNonSkewWithLocation) {
  Matrix p = Matrix::from_rows({{0, 1, 0}, {-1, 0, 2}, {0, -2.5, 0}});
  try {
    (void)SkewMatrix(p);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1,2)"), std::string::npos) << msg;
  }
  EXPECT_THROW(SkewMatrix(Matrix::from_rows({{1.0}})), ValidationError);
}

TEST(ConstructComplex, ZeroAndSine) {
  for (const auto& v : construct_complex(SkewMatrix(Matrix(3, 3)))) {
    for (double x : v.im) EXPECT_EQ(x, 0.0);
  }
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int t = 0; t < 50; ++t) {
    const double a = ang(rng), b = ang(rng);
    ComplexEmbedding va{{std::cos(a)}, {std::sin(a)}}, vb{{std::cos(b)}, {std::sin(b)}};
    EXPECT_NEAR(hermitian_inner(va, vb).imag(), std::sin(a - b), 1e-15);
  }
}

TEST(ConstructComplex, AgreesWithRealConstruction) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix p = tu::random_skew(1 + t % 12, rng);
    const SkewMatrix sp(p);
    const Matrix cr = rescore_complex(construct_complex(sp));
    EXPECT_LT(max_abs_diff(cr, p), 1e-12);
    EXPECT_LT(max_abs_diff(cr, rescore(construct_real(sp).embeddings)), 1e-12);
  }
}

TEST(ConstructSpectral, SingleCanonicalBlock) {
  const auto d = construct_spectral(SkewMatrix(Matrix::from_rows({{0, -2.5}, {2.5, 0}})));
  ASSERT_EQ(d.lambdas.size(), 1u);
  EXPECT_NEAR(d.lambdas[0], 2.5, 1e-14);
  EXPECT_LT(max_abs_diff(rescore(d.embeddings), Matrix::from_rows({{0, -2.5}, {2.5, 0}})), 1e-14);
}

TEST(ConstructSpectral, ZeroMatrix) {
  const auto d = construct_spectral(SkewMatrix(Matrix(6, 6)));
  for (double l : d.lambdas) EXPECT_EQ(l, 0.0);
  EXPECT_EQ(max_abs(rescore(d.embeddings)), 0.0);
  EXPECT_LT(orthogonality_residual(d.u), 1e-12);
}

TEST(ConstructSpectral, RandomMatricesReconstruct) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 * (1 + t % 8);
    const Matrix p = tu::random_skew(n, rng, 2.0);
    const auto d = construct_spectral(SkewMatrix(p));
    EXPECT_LT(max_abs_diff(rescore(d.embeddings), p), 1e-6);
    EXPECT_LT(orthogonality_residual(d.u), 1e-8);
    EXPECT_TRUE(std::is_sorted(d.lambdas.rbegin(), d.lambdas.rend()));
    for (double l : d.lambdas) EXPECT_GE(l, 0.0);
  }
}

TEST(ConstructSpectral, DegenerateAndLowRankSpectra) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 * (2 + t % 5);
    const Matrix q = tu::random_orthogonal(n, rng);
    // Repeated scales and rank deficiency: lambdas 3, 3, 0, ..., 0 or 1, 1, ..., 1
    Matrix core(n, n);
    for (std::size_t l = 0; l < n / 2; ++l) {
      const double lam = (t % 2 == 0) ? (l < 2 ? 3.0 : 0.0) : 1.0;
      core(2 * l, 2 * l + 1) = -lam;
      core(2 * l + 1, 2 * l) = lam;
    }
    Matrix p = q * core * q.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      p(i, i) = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) p(j, i) = -p(i, j);
    }
    const auto d = construct_spectral(SkewMatrix(p));
    EXPECT_LT(max_abs_diff(rescore(d.embeddings), p), 1e-6);
    EXPECT_LT(orthogonality_residual(d.u), 1e-8);
  }
}

TEST(ConstructSpectral, RejectsOddDimension) {
  EXPECT_THROW(construct_spectral(SkewMatrix(Matrix(3, 3))), ValidationError);
}

TEST(CanonicalCheck, AcceptsCanonicalAndRotatedForms) {
  for (std::size_t k = 1; k <= 6; ++k) EXPECT_TRUE(canonical_check(materialize_operator(k)).canonical);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 1 + t % 5;
    const Matrix u = tu::random_orthogonal(2 * k, rng);
    EXPECT_TRUE(canonical_check(u * materialize_operator(k) * u.transpose()).canonical);
  }
}

TEST(CanonicalCheck, RejectsIdentityAndScaledOperator) {
  const auto id = canonical_check(Matrix::identity(4));
  EXPECT_FALSE(id.canonical);
  EXPECT_NE(id.diagnostics.find("skew"), std::string::npos);
  Matrix scaled = materialize_operator(2);
  scaled(0, 1) = -2.0;
  scaled(1, 0) = 2.0;
  const auto s = canonical_check(scaled);
  EXPECT_FALSE(s.canonical);
  EXPECT_NE(s.diagnostics.find("magnitude"), std::string::npos);
  EXPECT_THROW(canonical_check(Matrix::identity(3)), ValidationError);
}

TEST(RoundTrip, GpmScoreMatrixThroughConstruction) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    std::set<ItemRef> catalog;
    const std::size_t n = 3 + t;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("y" + std::to_string(i));
      catalog.insert({"c", ids.back()});
    }
    GpmModel m = init_gpm(catalog, 1 + t % 3, t % 2 == 0, 0.1, 1.0, t);
    m.params.scales["c"] = tu::gaussian_vector(m.k, rng);
    const ScoreMatrix sm = score_matrix(m, "c", ids);
    const auto c = construct_real(SkewMatrix(sm.values, 1e-10));
    EXPECT_LT(max_abs_diff(rescore(c.embeddings), sm.values), 1e-10);
  }
}
