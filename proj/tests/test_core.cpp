#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "prefrep/core.hpp"
#include "prefrep/expressiveness.hpp"
#include "test_util.hpp"

using namespace prefrep;

TEST(SkewScore, SelfScoreIsZero) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    EmbeddingVector v(tu::gaussian_vector(6, rng));
    EXPECT_NEAR(skew_score(v, v), 0.0, 1e-12);
  }
}

TEST(SkewScore, BasisVectorsFollowTransposeConvention) {
  // s = v_i^T R v_j with R = [[0,-1],[1,0]].
  EmbeddingVector e1({1.0, 0.0}), e2({0.0, 1.0});
  EXPECT_DOUBLE_EQ(skew_score(e2, e1, ScaleVector({1.0})), 1.0);
  EXPECT_DOUBLE_EQ(skew_score(e1, e2, ScaleVector({1.0})), -1.0);
}

TEST(SkewScore, AntisymmetryIsExact) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    EmbeddingVector a(tu::gaussian_vector(4, rng)), b(tu::gaussian_vector(4, rng));
    ScaleVector lam({u(rng), u(rng)});
    EXPECT_EQ(skew_score(a, b, lam), -skew_score(b, a, lam));
  }
}

TEST(SkewScore, UnitPhasesGiveSineOfAngleGap) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  for (int t = 0; t < 100; ++t) {
    const double ti = ang(rng), tj = ang(rng);
    EmbeddingVector vi({std::cos(ti), std::sin(ti)}), vj({std::cos(tj), std::sin(tj)});
    EXPECT_NEAR(skew_score(vi, vj), std::sin(ti - tj), 1e-15);
  }
}

TEST(SkewScore, MatchesDenseOperator) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 50; ++t) {
    auto a = tu::gaussian_vector(8, rng), b = tu::gaussian_vector(8, rng);
    std::vector<double> lam{u(rng), u(rng), u(rng), u(rng)};
    EXPECT_NEAR(skew_score(EmbeddingVector(a), EmbeddingVector(b), ScaleVector(lam)),
                tu::dense_score(a, b, lam), 1e-12);
  }
}

TEST(SkewScore, BtConsistencyWithSharedConstantCoordinate) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    const double c = g(rng), ri = g(rng), rj = g(rng);
    EXPECT_NEAR(skew_score(EmbeddingVector({c, ri}), EmbeddingVector({c, rj}), ScaleVector({1.0})),
                c * (ri - rj), 1e-12);
    // Reward in the first slot flips the sign.
    EXPECT_NEAR(skew_score(EmbeddingVector({ri, c}), EmbeddingVector({rj, c}), ScaleVector({1.0})),
                c * (rj - ri), 1e-12);
  }
}

TEST(SkewScore, DimensionMismatchNamesBothSizes) {
  EmbeddingVector a({1, 0}), b({1, 0, 0, 1});
  try {
    (void)skew_score(a, b, ScaleVector({1.0}));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("k=1"), std::string::npos);
    EXPECT_NE(msg.find("k=2"), std::string::npos);
  }
  EXPECT_THROW((void)skew_score(a, a, ScaleVector({1.0, 1.0})), ValidationError);
}

TEST(EmbeddingVector, RejectsOddOrNonFinite) {
  EXPECT_THROW(EmbeddingVector({1.0, 2.0, 3.0}), ValidationError);
  EXPECT_THROW(EmbeddingVector({1.0, NAN}), ValidationError);
  EXPECT_THROW(ScaleVector({-0.1}), ValidationError);
}

TEST(PreferenceProb, KnownValues) {
  EXPECT_DOUBLE_EQ(preference_prob(0.0, 1.0), 0.5);
  EXPECT_NEAR(preference_prob(std::log(3.0), 1.0), 0.75, 1e-15);
  EXPECT_NEAR(preference_prob(1.0, 0.1), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(preference_prob(1.0, 0.1), 0.9999546, 1e-7);
}

TEST(PreferenceProb, ComplementAndOverflow) {
  for (double s = -30.0; s <= 30.0; s += 0.37) {
    EXPECT_NEAR(preference_prob(s, 1.0) + preference_prob(-s, 1.0), 1.0, 1e-12);
  }
  EXPECT_EQ(preference_prob(800.0, 1.0), 1.0);
  EXPECT_EQ(preference_prob(-800.0, 1.0), 0.0);
  EXPECT_TRUE(std::isfinite(log_sigmoid(-800.0)));
}

TEST(PreferenceProb, RejectsNonPositiveBeta) {
  EXPECT_THROW((void)preference_prob(1.0, 0.0), ValidationError);
  EXPECT_THROW((void)preference_prob(1.0, -1.0), ValidationError);
}

TEST(ApplyOperator, RotatesEachBlock) {
  EXPECT_EQ(apply_operator(EmbeddingVector({1.0, 0.0})), EmbeddingVector({0.0, 1.0}));
  EXPECT_EQ(apply_operator(EmbeddingVector({2.0, 5.0})), EmbeddingVector({-5.0, 2.0}));
  EXPECT_EQ(apply_operator(EmbeddingVector({1.0, 2.0, 3.0, 4.0}), ScaleVector({2.0, 0.5})),
            EmbeddingVector({-4.0, 2.0, -2.0, 1.5}));
}

TEST(ApplyOperator, PreservesNormWithUnitScales) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    EmbeddingVector v(tu::gaussian_vector(10, rng));
    EXPECT_NEAR(apply_operator(v).norm(), v.norm(), 1e-12);
  }
}

TEST(Operator, MaterializedFormIsCanonical) {
  for (std::size_t k = 1; k <= 8; ++k) {
    const Matrix r = materialize_operator(k);
    const Matrix rt = r.transpose();
    for (std::size_t i = 0; i < 2 * k; ++i)
      for (std::size_t j = 0; j < 2 * k; ++j) EXPECT_EQ(rt(i, j), -r(i, j));
    Matrix sq = r * r;
    for (std::size_t i = 0; i < 2 * k; ++i) sq(i, i) += 1.0;
    EXPECT_LT(max_abs(sq), 1e-15);
  }
}
