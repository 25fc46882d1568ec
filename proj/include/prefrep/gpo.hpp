#pragma once

/// \file gpo.hpp
/// General Preference Optimization on tabular softmax policies over a finite
/// response set, plus von Neumann winner tools.
///
/// Each iteration fixes the current policy pi_t and an opponent mu (pi_t in
/// self-play), forms empirical scores s_hat(y) = E_{y'~mu} s(y > y'), and
/// moves to
///
///   theta_{t+1} = argmin_theta  sum_y w(y) (log pi_theta(y)/pi_t(y) - s_hat(y)/beta)^2
///
/// where w = pi_t in exact mode and the empirical frequency of K draws from
/// pi_t in sampled mode. The log-partition term is taken as 0 in the
/// objective; its exact value is reported alongside.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prefrep/core.hpp"
#include "prefrep/error.hpp"
#include "prefrep/linalg.hpp"
#include "prefrep/models.hpp"

namespace prefrep {

/// Softmax policy over n responses, parameterized by logits.
class PolicyDistribution {
 public:
  PolicyDistribution() = default;
  explicit PolicyDistribution(std::vector<double> logits) : logits_(std::move(logits)) {
    if (logits_.empty()) throw ValidationError("policy needs at least one response");
    for (double x : logits_)
      if (!std::isfinite(x)) throw ValidationError("policy logits must be finite");
  }

  static PolicyDistribution uniform(std::size_t n) {
    return PolicyDistribution(std::vector<double>(n, 0.0));
  }

  /// Logits log(p); every p must be positive.
  static PolicyDistribution from_probs(std::span<const double> probs) {
    std::vector<double> logits;
    logits.reserve(probs.size());
    for (double p : probs) {
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw ValidationError("policy probabilities must be positive and finite");
      }
      logits.push_back(std::log(p));
    }
    return PolicyDistribution(std::move(logits));
  }

  std::size_t size() const noexcept { return logits_.size(); }
  std::span<const double> logits() const noexcept { return logits_; }

  std::vector<double> log_probs() const {
    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double z = 0.0;
    for (double x : logits_) z += std::exp(x - mx);
    const double lse = mx + std::log(z);
    std::vector<double> out(logits_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits_[i] - lse;
    return out;
  }

  std::vector<double> probs() const {
    std::vector<double> out = log_probs();
    for (double& x : out) x = std::exp(x);
    return out;
  }

 private:
  std::vector<double> logits_;
};

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("distributions differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

enum class EstimateMode { Exact, Sampled };
enum class OpponentMode { SelfPlay, Fixed };

struct GameSpec {
  ScoreMatrix scores;
  double beta = 1.0;
  EstimateMode mode = EstimateMode::Exact;
  std::size_t samples = 8;  // K, sampled mode only
  std::uint64_t seed = 0;
  OpponentMode opponent = OpponentMode::SelfPlay;
  std::optional<PolicyDistribution> fixed_opponent;

  void validate() const {
    if (scores.size() == 0) throw ValidationError("game needs at least one response");
    if (scores.skew_residual() > 1e-10) throw ValidationError("game score matrix is not skew-symmetric");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be positive");
    if (mode == EstimateMode::Sampled && samples == 0) throw ValidationError("sample count K must be positive");
    if (opponent == OpponentMode::Fixed) {
      if (!fixed_opponent) throw ValidationError("fixed-opponent mode needs an opponent policy");
      if (fixed_opponent->size() != scores.size()) throw ValidationError("opponent size mismatch");
    }
  }
};

// ---------------------------------------------------------------------------
// Empirical scores

/// Probability-weighted mean of row i: sum_j w_j M_ij.
inline double empirical_score(const ScoreMatrix& m, std::size_t i, std::span<const double> opponent) {
  if (i >= m.size()) throw ValidationError("response index out of range");
  if (opponent.size() != m.size()) throw ValidationError("opponent distribution size mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) s += opponent[j] * m.values(i, j);
  return s;
}

/// (1/K) sum_k M(i, sample_k).
inline double empirical_score_sampled(const ScoreMatrix& m, std::size_t i,
                                      std::span<const std::size_t> sample) {
  if (sample.empty()) throw ValidationError("empirical score needs a nonempty sample");
  if (i >= m.size()) throw ValidationError("response index out of range");
  double s = 0.0;
  for (std::size_t k : sample) {
    if (k >= m.size()) throw ValidationError("sample index out of range");
    s += m.values(i, k);
  }
  return s / static_cast<double>(sample.size());
}

/// Per-iteration regression target: weights over responses and the score
/// each response is pushed toward.
struct GpoTarget {
  std::vector<double> weights;
  std::vector<double> scores;
};

inline std::vector<std::size_t> sample_indices(std::span<const double> probs, std::size_t k,
                                               std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
  std::vector<std::size_t> out(k);
  for (auto& x : out) x = dist(rng);
  return out;
}

inline GpoTarget make_target(const PolicyDistribution& theta_t, const GameSpec& g, std::mt19937_64& rng) {
  g.validate();
  const std::size_t n = g.scores.size();
  if (theta_t.size() != n) throw ValidationError("policy size does not match the game");
  const std::vector<double> pt = theta_t.probs();
  const std::vector<double> mu =
      g.opponent == OpponentMode::SelfPlay ? pt : g.fixed_opponent->probs();

  GpoTarget t;
  t.scores.resize(n);
  if (g.mode == EstimateMode::Exact) {
    t.weights = pt;
    for (std::size_t i = 0; i < n; ++i) t.scores[i] = empirical_score(g.scores, i, mu);
    return t;
  }
  const auto responses = sample_indices(pt, g.samples, rng);
  const auto opponents =
      g.opponent == OpponentMode::SelfPlay ? responses : sample_indices(mu, g.samples, rng);
  t.weights.assign(n, 0.0);
  for (std::size_t r : responses) t.weights[r] += 1.0 / static_cast<double>(g.samples);
  for (std::size_t i = 0; i < n; ++i) t.scores[i] = empirical_score_sampled(g.scores, i, opponents);
  return t;
}

/// beta * log sum_y pi_t(y) exp(s_hat(y) / beta): the shift that makes the
/// regression target a normalized distribution.
inline double log_partition(const PolicyDistribution& theta_t, const GpoTarget& target, double beta) {
  const auto lp = theta_t.log_probs();
  double mx = -INFINITY;
  for (std::size_t i = 0; i < lp.size(); ++i) mx = std::max(mx, lp[i] + target.scores[i] / beta);
  double z = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) z += std::exp(lp[i] + target.scores[i] / beta - mx);
  return beta * (mx + std::log(z));
}

// ---------------------------------------------------------------------------
// Objective

inline double gpo_loss(const PolicyDistribution& theta, const PolicyDistribution& theta_t,
                       const GpoTarget& target, double beta, double log_z = 0.0) {
  if (theta.size() != theta_t.size() || theta.size() != target.scores.size() ||
      target.weights.size() != target.scores.size()) {
    throw ValidationError("gpo_loss dimension mismatch");
  }
  const auto lp = theta.log_probs();
  const auto lpt = theta_t.log_probs();
  double loss = 0.0;
  for (std::size_t y = 0; y < lp.size(); ++y) {
    if (target.weights[y] == 0.0) continue;
    const double r = lp[y] - lpt[y] - (target.scores[y] - log_z) / beta;
    loss += target.weights[y] * r * r;
  }
  return loss;
}

/// Objective for a game; sampled mode draws with the game's seed.
inline double gpo_loss(const PolicyDistribution& theta, const PolicyDistribution& theta_t,
                       const GameSpec& g) {
  std::mt19937_64 rng(g.seed);
  return gpo_loss(theta, theta_t, make_target(theta_t, g, rng), g.beta);
}

/// d/d theta_k = 2 (w_k r_k - pi_theta(k) sum_y w_y r_y).
inline std::vector<double> gpo_loss_grad(const PolicyDistribution& theta, const PolicyDistribution& theta_t,
                                         const GpoTarget& target, double beta, double log_z = 0.0) {
  const auto lp = theta.log_probs();
  const auto lpt = theta_t.log_probs();
  const std::size_t n = lp.size();
  std::vector<double> wr(n, 0.0);
  double total = 0.0;
  for (std::size_t y = 0; y < n; ++y) {
    if (target.weights[y] == 0.0) continue;
    wr[y] = target.weights[y] * (lp[y] - lpt[y] - (target.scores[y] - log_z) / beta);
    total += wr[y];
  }
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = 2.0 * (wr[k] - std::exp(lp[k]) * total);
  return g;
}

struct InnerConfig {
  double grad_tol = 1e-8;
  std::size_t max_steps = 10000;
  double armijo = 1e-4;
};

struct StepResult {
  PolicyDistribution theta;
  double loss_start = 0.0;
  double loss_end = 0.0;
  double grad_norm = 0.0;
  std::size_t inner_steps = 0;
};

/// Minimizes the objective from theta_t by gradient descent with a
/// backtracking (Armijo) line search. Only decreasing steps are accepted.
inline StepResult gpo_minimize(const PolicyDistribution& theta_t, const GpoTarget& target, double beta,
                               const InnerConfig& cfg = {}) {
  const std::size_t n = theta_t.size();
  std::vector<double> x(theta_t.logits().begin(), theta_t.logits().end());
  auto loss_at = [&](const std::vector<double>& logits) {
    return gpo_loss(PolicyDistribution(logits), theta_t, target, beta);
  };

  StepResult res;
  double f = loss_at(x);
  if (!std::isfinite(f)) throw NumericalError("GPO objective is not finite");
  res.loss_start = f;
  double eta = 1.0;
  std::vector<double> trial(n);
  std::size_t step = 0;
  double gn = 0.0;
  for (; step < cfg.max_steps; ++step) {
    const auto g = gpo_loss_grad(PolicyDistribution(x), theta_t, target, beta);
    gn = norm2(g);
    if (gn < cfg.grad_tol) break;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - eta * g[i];
      const double ft = loss_at(trial);
      if (std::isfinite(ft) && ft <= f - cfg.armijo * eta * gn * gn) {
        x = trial;
        f = ft;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // no representable descent step left
    eta = std::min(eta * 2.0, 1e6);
  }
  // Softmax is shift invariant; keep logits centered.
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  for (double& v : x) v -= mean;
  res.theta = PolicyDistribution(std::move(x));
  res.loss_end = gpo_loss(res.theta, theta_t, target, beta);
  res.grad_norm = gn;
  res.inner_steps = step;
  return res;
}

inline StepResult gpo_step(const PolicyDistribution& theta_t, const GameSpec& g, std::mt19937_64& rng,
                           const InnerConfig& cfg = {}) {
  return gpo_minimize(theta_t, make_target(theta_t, g, rng), g.beta, cfg);
}

inline StepResult gpo_step(const PolicyDistribution& theta_t, const GameSpec& g, const InnerConfig& cfg = {}) {
  std::mt19937_64 rng(g.seed);
  return gpo_step(theta_t, g, rng, cfg);
}

// ---------------------------------------------------------------------------
// von Neumann winner

struct WinnerCheck {
  double min_win_rate = 0.0;
  std::size_t witness = 0;
};

/// min over pure opponents j of sum_i pi_i sigma(M_ij / beta). A linear
/// function on the simplex attains its minimum at a vertex, so this is the
/// minimum over all mixed opponents too.
inline WinnerCheck von_neumann_check(std::span<const double> pi, const ScoreMatrix& m, double beta) {
  if (pi.size() != m.size()) throw ValidationError("policy size does not match the score matrix");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  WinnerCheck out{INFINITY, 0};
  for (std::size_t j = 0; j < m.size(); ++j) {
    double w = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) w += pi[i] * sigmoid(m.values(i, j) / beta);
    if (w < out.min_win_rate) {
      out.min_win_rate = w;
      out.witness = j;
    }
  }
  return out;
}

struct Equilibrium {
  std::vector<double> probs;
  double lower = 0.0;  // min_j P(pi > j)
  double upper = 0.0;  // max_i P(i > pi)
  std::size_t iterations = 0;
  std::string method;  // "regret-matching", "support-polish" or "simplex"
};

namespace detail {

/// Solves the dense square system a x = b by Gaussian elimination with partial
/// pivoting; empty result if a pivot vanishes.
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (std::abs(a(piv, c)) < 1e-14) return {};
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(c, k), a(piv, k));
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * x[k];
    x[r] = s / a(r, r);
  }
  return x;
}

/// Equalizer on the support of `guess`: x_S with a_SS x_S = 0 and sum 1,
/// zero elsewhere. Empty if singular or not a distribution.
inline std::vector<double> support_equalizer(const Matrix& a, std::span<const double> guess, double cut) {
  const std::size_t n = guess.size();
  const double top = *std::max_element(guess.begin(), guess.end());
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i)
    if (guess[i] > cut * top) support.push_back(i);
  const std::size_t m = support.size();
  Matrix kkt(m + 1, m + 1);
  std::vector<double> rhs(m + 1, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) kkt(r, c) = a(support[r], support[c]);
    kkt(r, m) = -1.0;
    kkt(m, r) = 1.0;
  }
  rhs[m] = 1.0;
  const auto sol = solve_dense(std::move(kkt), std::move(rhs));
  if (sol.empty()) return {};
  std::vector<double> x(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (!(sol[r] >= 0.0)) return {};
    x[support[r]] = sol[r];
  }
  return x;
}

/// Optimal strategy of the symmetric zero-sum game with antisymmetric payoff
/// `a` (|a_ij| < 1) by the simplex method with Bland's rule on
///   max 1'y  s.t. (a + 1) y <= 1, y >= 0,
/// normalized. Empty if the pivot cap is hit.
inline std::vector<double> simplex_equilibrium(const Matrix& a, std::size_t max_pivots = 100'000) {
  const std::size_t n = a.rows(), cols = 2 * n;
  constexpr double eps = 1e-12;
  Matrix tab(n, cols);  // [a + 1 | I]
  std::vector<double> rhs(n, 1.0), cost(cols, 0.0);
  std::vector<std::size_t> basis(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) tab(i, j) = a(i, j) + 1.0;
    tab(i, n + i) = 1.0;
    basis[i] = n + i;
  }
  for (std::size_t j = 0; j < n; ++j) cost[j] = 1.0;  // reduced costs of the objective row

  for (std::size_t pivots = 0; pivots < max_pivots; ++pivots) {
    std::size_t enter = cols;
    for (std::size_t j = 0; j < cols; ++j)
      if (cost[j] > eps) {
        enter = j;
        break;
      }
    if (enter == cols) {
      std::vector<double> y(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (basis[i] < n) y[basis[i]] = std::max(0.0, rhs[i]);
      const double total = std::accumulate(y.begin(), y.end(), 0.0);
      if (!(total > 0.0)) return {};
      for (double& v : y) v /= total;
      return y;
    }
    std::size_t leave = n;
    double best = INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      if (tab(i, enter) <= eps) continue;
      const double ratio = rhs[i] / tab(i, enter);
      if (ratio < best - eps || (ratio <= best + eps && leave < n && basis[i] < basis[leave])) {
        best = std::min(best, ratio);
        leave = i;
      }
    }
    if (leave == n) return {};  // unbounded; cannot happen for a positive matrix
    const double piv = tab(leave, enter);
    for (std::size_t j = 0; j < cols; ++j) tab(leave, j) /= piv;
    rhs[leave] /= piv;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == leave || tab(i, enter) == 0.0) continue;
      const double f = tab(i, enter);
      for (std::size_t j = 0; j < cols; ++j) tab(i, j) -= f * tab(leave, j);
      rhs[i] -= f * rhs[leave];
    }
    const double f = cost[enter];
    for (std::size_t j = 0; j < cols; ++j) cost[j] -= f * tab(leave, j);
    basis[leave] = enter;
  }
  return {};
}

}  // namespace detail

/// Symmetric equilibrium of the win-probability game sigma(M / beta) by
/// regret matching+ self-play with linearly weighted averaging. Stops once the
/// averaged strategy guarantees at least 1/2 - tol against every pure reply.
/// Periodically the average is polished to the exact equalizer on its
/// support, which is accepted whenever it passes the same check. Games where
/// regret matching stalls at the cap (near-degenerate equilibrium sets) are
/// solved exactly by the simplex method; `method` records which path won.
inline Equilibrium solve_equilibrium(const ScoreMatrix& m, double beta, double tol = 1e-6,
                                     std::size_t max_iters = 1'000'000) {
  const std::size_t n = m.size();
  if (n == 0) throw ValidationError("empty score matrix");
  if (n > 64) throw ValidationError("solve_equilibrium is limited to 64 responses");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = sigmoid(m.values(i, j) / beta) - 0.5;

  std::vector<double> regret(n, 0.0), avg(n, 0.0), x(n), u(n), normalized_avg(n);
  auto finish = [&](std::size_t iters, const char* method) {
    Equilibrium e;
    e.method = method;
    e.probs = normalized_avg;
    e.lower = von_neumann_check(e.probs, m, beta).min_win_rate;
    e.upper = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      double w = 0.0;
      for (std::size_t j = 0; j < n; ++j) w += sigmoid(m.values(i, j) / beta) * e.probs[j];
      e.upper = std::max(e.upper, w);
    }
    e.iterations = iters;
    return e;
  };

  for (std::size_t t = 1; t <= max_iters; ++t) {
    double pos = 0.0;
    for (double r : regret) pos += r;
    for (std::size_t i = 0; i < n; ++i) x[i] = pos > 0.0 ? regret[i] / pos : 1.0 / static_cast<double>(n);
    double ev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a(i, j) * x[j];
      u[i] = s;
      ev += x[i] * s;
    }
    for (std::size_t i = 0; i < n; ++i) {
      regret[i] = std::max(0.0, regret[i] + u[i] - ev);
      avg[i] += static_cast<double>(t) * x[i];
    }
    if (t % 16 == 0 || t == max_iters) {
      const double total = std::accumulate(avg.begin(), avg.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) normalized_avg[i] = avg[i] / total;
      if (von_neumann_check(normalized_avg, m, beta).min_win_rate >= 0.5 - tol) return finish(t, "regret-matching");
      if (t % 1024 == 0) {
        for (double cut : {1e-1, 1e-2, 1e-3, 1e-4}) {
          auto polished = detail::support_equalizer(a, normalized_avg, cut);
          if (!polished.empty() && von_neumann_check(polished, m, beta).min_win_rate >= 0.5 - tol) {
            normalized_avg = std::move(polished);
            return finish(t, "support-polish");
          }
        }
      }
    }
  }
  auto exact = detail::simplex_equilibrium(a);
  if (!exact.empty() && von_neumann_check(exact, m, beta).min_win_rate >= 0.5 - tol) {
    normalized_avg = std::move(exact);
    return finish(max_iters, "simplex");
  }
  throw NumericalError("solve_equilibrium did not reach tolerance " + std::to_string(tol) + " in " +
                       std::to_string(max_iters) + " iterations, and the simplex fallback failed");
}

// ---------------------------------------------------------------------------
// Iterated GPO

struct GpoReport {
  std::vector<std::vector<double>> snapshots;  // T + 1 policies, snapshots[0] = start
  std::vector<double> loss_start;              // objective at theta_t, per iteration
  std::vector<double> loss_end;                // objective at theta_{t+1}
  std::vector<double> log_z;                   // exact log-partition, per iteration
  std::vector<double> min_win_rates;           // per snapshot
  std::vector<std::size_t> inner_steps;
  std::vector<double> average_policy;          // mean of all snapshots
  double final_min_win_rate = 0.0;
};

inline GpoReport gpo_run(const PolicyDistribution& theta0, const GameSpec& g, std::size_t iterations,
                         const InnerConfig& cfg = {}) {
  if (iterations == 0) throw ValidationError("GPO needs at least one iteration");
  g.validate();
  if (theta0.size() != g.scores.size()) throw ValidationError("start policy size does not match the game");
  std::mt19937_64 rng(g.seed);
  GpoReport rep;
  PolicyDistribution theta = theta0;
  auto record = [&](const PolicyDistribution& p) {
    rep.snapshots.push_back(p.probs());
    rep.min_win_rates.push_back(von_neumann_check(rep.snapshots.back(), g.scores, g.beta).min_win_rate);
  };
  record(theta);
  for (std::size_t t = 0; t < iterations; ++t) {
    const GpoTarget target = make_target(theta, g, rng);
    rep.log_z.push_back(log_partition(theta, target, g.beta));
    StepResult step = gpo_minimize(theta, target, g.beta, cfg);
    if (!std::isfinite(step.loss_end)) throw NumericalError("GPO objective became non-finite");
    rep.loss_start.push_back(step.loss_start);
    rep.loss_end.push_back(step.loss_end);
    rep.inner_steps.push_back(step.inner_steps);
    theta = std::move(step.theta);
    record(theta);
  }
  const std::size_t n = g.scores.size();
  rep.average_policy.assign(n, 0.0);
  for (const auto& s : rep.snapshots)
    for (std::size_t i = 0; i < n; ++i) rep.average_policy[i] += s[i] / static_cast<double>(rep.snapshots.size());
  rep.final_min_win_rate = rep.min_win_rates.back();
  return rep;
}

}  // namespace prefrep
