#pragma once

/// \file training.hpp
/// Cross-entropy and MSE objectives, analytic gradients, and a deterministic
/// minibatch trainer for GPM and BT models.
///
/// With z = s(winner > loser) / beta and p = P_D(winner > loser):
///   CE  = -[p log sigma(z) + (1 - p) log sigma(-z)],   dCE/dz  = sigma(z) - p
///   MSE = (z - logit p)^2,                             dMSE/dz = 2 (z - logit p)
/// Both are averaged over the batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prefrep/core.hpp"
#include "prefrep/error.hpp"
#include "prefrep/models.hpp"
#include "prefrep/preference_data.hpp"

namespace prefrep {

enum class LossKind { CE, MSE };
enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  LossKind loss_kind = LossKind::CE;
  double beta = 0.1;
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double init_scale = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  static TrainConfig for_gpm() { return {}; }
  static TrainConfig for_bt() {
    TrainConfig c;
    c.beta = 1.0;
    return c;
  }

  void validate() const {
    if (!(beta > 0.0)) throw ValidationError("beta must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (!(init_scale > 0.0)) throw ValidationError("init scale must be positive");
  }
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> grad_norm;
  std::vector<double> epoch_accuracy;
  double final_accuracy = 0.0;
};

// ---------------------------------------------------------------------------
// Initialization

/// Gaussian(0, init_scale) raw embeddings and zero raw gates (lambda = ln 2).
inline GpmModel init_gpm(const std::set<ItemRef>& catalog, std::size_t k, bool normalize,
                         double beta, double init_scale, std::uint64_t seed) {
  if (k == 0) throw ValidationError("k must be positive");
  GpmModel m;
  m.k = k;
  m.beta = beta;
  m.normalize = normalize;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, init_scale);
  for (const auto& ref : catalog) {
    m.params.scales.try_emplace(ref.context_id, std::vector<double>(k, 0.0));
    auto& v = m.params.embeddings[ref.context_id][ref.item_id];
    v.resize(2 * k);
    for (double& x : v) x = gauss(rng);
  }
  return m;
}

inline BtModel init_bt(const std::set<ItemRef>& catalog, double beta, double init_scale,
                       std::uint64_t seed) {
  BtModel m;
  m.beta = beta;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, init_scale);
  for (const auto& ref : catalog) m.params.rewards[ref.context_id][ref.item_id] = gauss(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Losses

namespace detail {

inline void require_batch(std::span<const PreferenceExample> batch) {
  if (batch.empty()) throw ValidationError("empty batch");
}

inline double mse_target(const PreferenceExample& ex) {
  if (!(ex.prob > 0.0 && ex.prob < 1.0)) {
    throw ValidationError("MSE loss needs soft labels with prob strictly inside (0, 1); got prob=" +
                          std::to_string(ex.prob) + " for " + ex.winner_id + " > " + ex.loser_id +
                          " (use the CE loss for hard labels)");
  }
  return logit(ex.prob);
}

inline double example_loss(double z, const PreferenceExample& ex, LossKind kind) {
  if (kind == LossKind::CE) return -(ex.prob * log_sigmoid(z) + (1.0 - ex.prob) * log_sigmoid(-z));
  const double r = z - mse_target(ex);
  return r * r;
}

inline double example_dloss_dz(double z, const PreferenceExample& ex, LossKind kind) {
  if (kind == LossKind::CE) return sigmoid(z) - ex.prob;
  return 2.0 * (z - mse_target(ex));
}

}  // namespace detail

template <class Model>
double batch_loss(const Model& model, std::span<const PreferenceExample> batch, LossKind kind) {
  detail::require_batch(batch);
  double total = 0.0;
  for (const auto& ex : batch) {
    const double z = model_score(model, ex.winner(), ex.loser()) / model.beta;
    total += detail::example_loss(z, ex, kind);
  }
  return total / static_cast<double>(batch.size());
}

template <class Model>
double ce_loss(const Model& model, std::span<const PreferenceExample> batch) {
  return batch_loss(model, batch, LossKind::CE);
}

template <class Model>
double mse_loss(const Model& model, std::span<const PreferenceExample> batch) {
  return batch_loss(model, batch, LossKind::MSE);
}

// ---------------------------------------------------------------------------
// Gradients. The returned tables have every parameter of the model, with
// exact zeros for parameters the batch does not touch.

inline GpmParams zeros_like(const GpmParams& p) {
  GpmParams z = p;
  for (auto& [_, raw] : z.scales) std::fill(raw.begin(), raw.end(), 0.0);
  for (auto& [_, items] : z.embeddings)
    for (auto& [__, raw] : items) std::fill(raw.begin(), raw.end(), 0.0);
  return z;
}

inline BtParams zeros_like(const BtParams& p) {
  BtParams z = p;
  for (auto& [_, items] : z.rewards)
    for (auto& [__, r] : items) r = 0.0;
  return z;
}

namespace detail {

// d(u/|u|)/du applied to an upstream gradient g: (g - v (v.g)) / |u|.
inline void backprop_normalize(std::span<const double> raw, std::span<const double> unit,
                               std::span<double> g) {
  const double n = norm2(raw);
  const double vg = dot(unit, g);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g[i] - unit[i] * vg) / n;
}

}  // namespace detail

inline GpmParams loss_grad(const GpmModel& model, std::span<const PreferenceExample> batch,
                           LossKind kind) {
  detail::require_batch(batch);
  GpmParams grad = zeros_like(model.params);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t k = model.k;
  std::vector<double> gw(2 * k), gl(2 * k);

  for (const auto& ex : batch) {
    if (ex.winner_id == ex.loser_id) throw ValidationError("winner equals loser");
    detail::require_same_context(ex.winner(), ex.loser());
    const EmbeddingVector vw = gpm_embed(model, ex.winner());
    const EmbeddingVector vl = gpm_embed(model, ex.loser());
    const ScaleVector lambda = gpm_scales(model, ex.context_id);
    const auto& raw_gate = model.params.scales.at(ex.context_id);

    const double z = skew_score(vw, vl, lambda) / model.beta;
    const double gs = detail::example_dloss_dz(z, ex, kind) * inv_n / model.beta;

    auto& ggate = grad.scales.at(ex.context_id);
    for (std::size_t l = 0; l < k; ++l) {
      const double aw = vw[2 * l], bw = vw[2 * l + 1];
      const double al = vl[2 * l], bl = vl[2 * l + 1];
      gw[2 * l] = -gs * lambda[l] * bl;
      gw[2 * l + 1] = gs * lambda[l] * al;
      gl[2 * l] = gs * lambda[l] * bw;
      gl[2 * l + 1] = -gs * lambda[l] * aw;
      ggate[l] += gs * sigmoid(raw_gate[l]) * (bw * al - aw * bl);
    }
    const auto& uw = detail::lookup_raw_embedding(model, ex.winner());
    const auto& ul = detail::lookup_raw_embedding(model, ex.loser());
    if (model.normalize) {
      detail::backprop_normalize(uw, vw.coords(), gw);
      detail::backprop_normalize(ul, vl.coords(), gl);
    }
    auto& dw = grad.embeddings.at(ex.context_id).at(ex.winner_id);
    auto& dl = grad.embeddings.at(ex.context_id).at(ex.loser_id);
    for (std::size_t i = 0; i < 2 * k; ++i) {
      dw[i] += gw[i];
      dl[i] += gl[i];
    }
  }
  return grad;
}

inline BtParams loss_grad(const BtModel& model, std::span<const PreferenceExample> batch,
                          LossKind kind) {
  detail::require_batch(batch);
  BtParams grad = zeros_like(model.params);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (ex.winner_id == ex.loser_id) throw ValidationError("winner equals loser");
    const double z = bt_score(model, ex.winner(), ex.loser()) / model.beta;
    const double gs = detail::example_dloss_dz(z, ex, kind) * inv_n / model.beta;
    grad.rewards.at(ex.context_id).at(ex.winner_id) += gs;
    grad.rewards.at(ex.context_id).at(ex.loser_id) -= gs;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Flat parameter views, in map iteration order (deterministic).

inline std::vector<double> flatten(const GpmParams& p) {
  std::vector<double> out;
  for (const auto& [_, raw] : p.scales) out.insert(out.end(), raw.begin(), raw.end());
  for (const auto& [_, items] : p.embeddings)
    for (const auto& [__, raw] : items) out.insert(out.end(), raw.begin(), raw.end());
  return out;
}

inline void unflatten(std::span<const double> flat, GpmParams& p) {
  std::size_t i = 0;
  auto take = [&](std::vector<double>& dst) {
    if (i + dst.size() > flat.size()) throw ValidationError("flat parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i), dst.size(), dst.begin());
    i += dst.size();
  };
  for (auto& [_, raw] : p.scales) take(raw);
  for (auto& [_, items] : p.embeddings)
    for (auto& [__, raw] : items) take(raw);
  if (i != flat.size()) throw ValidationError("flat parameter vector too long");
}

inline std::vector<double> flatten(const BtParams& p) {
  std::vector<double> out;
  for (const auto& [_, items] : p.rewards)
    for (const auto& [__, r] : items) out.push_back(r);
  return out;
}

inline void unflatten(std::span<const double> flat, BtParams& p) {
  std::size_t i = 0;
  for (auto& [_, items] : p.rewards)
    for (auto& [__, r] : items) {
      if (i >= flat.size()) throw ValidationError("flat parameter vector too short");
      r = flat[i++];
    }
  if (i != flat.size()) throw ValidationError("flat parameter vector too long");
}

// ---------------------------------------------------------------------------
// Evaluation

/// Fraction of examples whose winner scores above the loser; a zero score
/// earns half credit.
template <class Model>
double eval_accuracy(const Model& model, std::span<const PreferenceExample> examples) {
  if (examples.empty()) throw ValidationError("cannot evaluate accuracy on an empty dataset");
  double credit = 0.0;
  for (const auto& ex : examples) {
    const double s = model_score(model, ex.winner(), ex.loser());
    credit += s > 0.0 ? 1.0 : (s == 0.0 ? 0.5 : 0.0);
  }
  return credit / static_cast<double>(examples.size());
}

template <class Model>
double eval_accuracy(const Model& model, const PreferenceDataset& ds) {
  return eval_accuracy(model, std::span<const PreferenceExample>(ds.examples));
}

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (cfg_.optimizer == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.learning_rate * grad[i];
      return;
    }
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

template <class Model>
struct TrainResult {
  Model model;
  TrainReport report;
};

/// Minibatch training. The model's temperature is set to config.beta. The
/// shuffle sequence depends only on config.seed, so identical inputs give
/// bitwise-identical parameters.
template <class Model>
TrainResult<Model> train(Model model, const PreferenceDataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.examples.empty()) throw ValidationError("cannot train on an empty dataset");
  model.beta = config.beta;
  const std::span<const PreferenceExample> all(dataset.examples);

  std::vector<double> flat = flatten(model.params);
  Optimizer opt(config, flat.size());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PreferenceExample> batch;
  batch.reserve(config.batch_size);

  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(all[order[i]]);
      const auto g = flatten(loss_grad(model, batch, config.loss_kind));
      opt.step(flat, g);
      unflatten(flat, model.params);
    }
    const double loss = batch_loss(model, all, config.loss_kind);
    const auto g = flatten(loss_grad(model, all, config.loss_kind));
    const double gn = norm2(g);
    if (!std::isfinite(loss) || !std::isfinite(gn)) {
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                       ": non-finite loss");
    }
    report.epoch_loss.push_back(loss);
    report.grad_norm.push_back(gn);
    report.epoch_accuracy.push_back(eval_accuracy(model, all));
  }
  report.final_accuracy = report.epoch_accuracy.back();
  return {std::move(model), std::move(report)};
}

}  // namespace prefrep
