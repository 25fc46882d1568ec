#pragma once

/// \file models.hpp
/// Learnable preference models over tabular (context, item) ids.
///
/// GpmModel holds the embedding head as a table of raw 2k-vectors and the
/// eigenvalue scale gate as a table of k raw reals per context; emitted
/// scales are softplus(raw). Emitted embeddings are L2-normalized when
/// `normalize` is set, and normalization happens before D(x) is applied.
/// BtModel holds one scalar reward per item.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prefrep/core.hpp"
#include "prefrep/error.hpp"
#include "prefrep/linalg.hpp"

namespace prefrep {

struct ItemRef {
  std::string context_id;
  std::string item_id;

  friend auto operator<=>(const ItemRef&, const ItemRef&) = default;
};

inline std::string to_string(const ItemRef& ref) {
  return "(" + ref.context_id + ", " + ref.item_id + ")";
}

/// Counts work done by scoring routines. Thread-safe.
struct OpCounter {
  std::atomic<std::uint64_t> embedding_evals{0};
  std::atomic<std::uint64_t> reward_evals{0};
  std::atomic<std::uint64_t> pair_combinations{0};
  std::atomic<std::uint64_t> full_scorings{0};

  void reset() {
    embedding_evals = 0;
    reward_evals = 0;
    pair_combinations = 0;
    full_scorings = 0;
  }
};

using EmbeddingTable = std::map<std::string, std::map<std::string, std::vector<double>>>;
using ScaleTable = std::map<std::string, std::vector<double>>;
using RewardTable = std::map<std::string, std::map<std::string, double>>;

struct GpmParams {
  ScaleTable scales;          // context -> k raw gate values
  EmbeddingTable embeddings;  // context -> item -> raw 2k vector

  friend bool operator==(const GpmParams&, const GpmParams&) = default;
};

struct GpmModel {
  std::size_t k = 1;
  double beta = 0.1;
  bool normalize = true;
  GpmParams params;

  friend bool operator==(const GpmModel&, const GpmModel&) = default;
};

struct BtParams {
  RewardTable rewards;  // context -> item -> r(y; x)

  friend bool operator==(const BtParams&, const BtParams&) = default;
};

struct BtModel {
  double beta = 1.0;
  BtParams params;

  friend bool operator==(const BtModel&, const BtModel&) = default;
};

/// K x K pairwise scores for one context; entry (i, j) is s(items[i] > items[j]).
struct ScoreMatrix {
  std::vector<std::string> items;
  Matrix values;

  std::size_t size() const noexcept { return items.size(); }

  /// Largest |M_ij + M_ji| including the diagonal (|2 M_ii|).
  double skew_residual() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.rows(); ++i)
      for (std::size_t j = i; j < values.cols(); ++j)
        m = std::max(m, std::abs(values(i, j) + values(j, i)));
    return m;
  }

  /// Wraps a bare matrix, naming items y0..y{n-1}. Requires skew-symmetry
  /// within `tol`.
  static ScoreMatrix from_matrix(Matrix m, double tol = 1e-10) {
    if (!m.square() || m.rows() == 0) {
      throw ValidationError("score matrix must be square and nonempty, got " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    ScoreMatrix out;
    for (std::size_t i = 0; i < m.rows(); ++i) out.items.push_back("y" + std::to_string(i));
    out.values = std::move(m);
    for (std::size_t i = 0; i < out.values.rows(); ++i)
      for (std::size_t j = i; j < out.values.cols(); ++j)
        if (std::abs(out.values(i, j) + out.values(j, i)) > tol) {
          throw ValidationError("score matrix is not skew-symmetric at (" + std::to_string(i) +
                                ", " + std::to_string(j) + ")");
        }
    return out;
  }
};

namespace detail {

inline const std::vector<double>& lookup_raw_embedding(const GpmModel& model, const ItemRef& item) {
  auto ctx = model.params.embeddings.find(item.context_id);
  if (ctx == model.params.embeddings.end()) {
    throw ValidationError("unknown context " + item.context_id + " for item " + to_string(item));
  }
  auto it = ctx->second.find(item.item_id);
  if (it == ctx->second.end()) throw ValidationError("unknown item " + to_string(item));
  return it->second;
}

inline double lookup_reward(const BtModel& model, const ItemRef& item) {
  auto ctx = model.params.rewards.find(item.context_id);
  if (ctx == model.params.rewards.end()) {
    throw ValidationError("unknown context " + item.context_id + " for item " + to_string(item));
  }
  auto it = ctx->second.find(item.item_id);
  if (it == ctx->second.end()) throw ValidationError("unknown item " + to_string(item));
  return it->second;
}

inline void require_same_context(const ItemRef& i, const ItemRef& j) {
  if (i.context_id != j.context_id) {
    throw ValidationError("items come from different contexts: " + to_string(i) + " vs " +
                          to_string(j));
  }
}

}  // namespace detail

inline EmbeddingVector gpm_embed(const GpmModel& model, const ItemRef& item,
                                 OpCounter* counter = nullptr) {
  const auto& raw = detail::lookup_raw_embedding(model, item);
  if (raw.size() != 2 * model.k) {
    throw ValidationError("embedding for " + to_string(item) + " has length " +
                          std::to_string(raw.size()) + ", expected " + std::to_string(2 * model.k));
  }
  if (counter) ++counter->embedding_evals;
  EmbeddingVector v(raw);
  if (!model.normalize) return v;
  if (v.norm() == 0.0) {
    throw ValidationError("zero-norm embedding for " + to_string(item) + " under normalize=true");
  }
  return normalized(v);
}

inline ScaleVector gpm_scales(const GpmModel& model, const std::string& context_id) {
  auto it = model.params.scales.find(context_id);
  if (it == model.params.scales.end()) throw ValidationError("unknown context " + context_id);
  if (it->second.size() != model.k) {
    throw ValidationError("scale gate for context " + context_id + " has " +
                          std::to_string(it->second.size()) + " entries, expected " +
                          std::to_string(model.k));
  }
  std::vector<double> lambdas(model.k);
  std::transform(it->second.begin(), it->second.end(), lambdas.begin(),
                 [](double raw) { return softplus(raw); });
  return ScaleVector(std::move(lambdas));
}

inline double gpm_score(const GpmModel& model, const ItemRef& i, const ItemRef& j) {
  detail::require_same_context(i, j);
  return skew_score(gpm_embed(model, i), gpm_embed(model, j), gpm_scales(model, i.context_id));
}

/// All K^2 scores from exactly K embedding evaluations.
inline ScoreMatrix score_matrix(const GpmModel& model, const std::string& context_id,
                                const std::vector<std::string>& items,
                                OpCounter* counter = nullptr) {
  if (items.empty()) throw ValidationError("score_matrix needs at least one item");
  const ScaleVector scales = gpm_scales(model, context_id);
  std::vector<EmbeddingVector> emb;
  emb.reserve(items.size());
  for (const auto& id : items) emb.push_back(gpm_embed(model, {context_id, id}, counter));

  const std::size_t n = items.size();
  ScoreMatrix out{items, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.values(i, j) = skew_score(emb[i], emb[j], scales);
    }
  }
  if (counter) counter->pair_combinations += n * n;
  return out;
}

/// Baseline that scores each unordered pair from scratch, as a pairwise
/// (concatenated-input) preference model must. K(K-1)/2 full scorings.
inline ScoreMatrix pairwise_baseline_matrix(const GpmModel& model, const std::string& context_id,
                                            const std::vector<std::string>& items,
                                            OpCounter* counter = nullptr) {
  if (items.empty()) throw ValidationError("score_matrix needs at least one item");
  const std::size_t n = items.size();
  ScoreMatrix out{items, Matrix(n, n)};
  const ScaleVector scales = gpm_scales(model, context_id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = skew_score(gpm_embed(model, {context_id, items[i]}, counter),
                                  gpm_embed(model, {context_id, items[j]}, counter), scales);
      out.values(i, j) = s;
      out.values(j, i) = -s;
      if (counter) ++counter->full_scorings;
    }
  }
  return out;
}

inline double bt_reward(const BtModel& model, const ItemRef& item, OpCounter* counter = nullptr) {
  const double r = detail::lookup_reward(model, item);
  if (counter) ++counter->reward_evals;
  return r;
}

inline double bt_score(const BtModel& model, const ItemRef& i, const ItemRef& j) {
  detail::require_same_context(i, j);
  return bt_reward(model, i) - bt_reward(model, j);
}

inline ScoreMatrix bt_score_matrix(const BtModel& model, const std::string& context_id,
                                   const std::vector<std::string>& items,
                                   OpCounter* counter = nullptr) {
  if (items.empty()) throw ValidationError("score_matrix needs at least one item");
  std::vector<double> r;
  r.reserve(items.size());
  for (const auto& id : items) r.push_back(bt_reward(model, {context_id, id}, counter));
  const std::size_t n = items.size();
  ScoreMatrix out{items, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.values(i, j) = r[i] - r[j];
  if (counter) counter->pair_combinations += n * n;
  return out;
}

/// The k=1 GPM with v_y = [c, r(y)], unit scale and no normalization, whose
/// score is c * (r_i - r_j). The temperature becomes |c| * beta_bt, so for
/// c > 0 probabilities match the BT model; c < 0 mirrors every preference.
inline GpmModel bt_to_gpm(const BtModel& bt, double c) {
  if (c == 0.0 || !std::isfinite(c)) throw ValidationError("bt_to_gpm needs a finite nonzero c");
  GpmModel g;
  g.k = 1;
  g.normalize = false;
  g.beta = bt.beta * std::abs(c);
  const double unit_gate = std::log(std::expm1(1.0));
  for (const auto& [ctx, items] : bt.params.rewards) {
    g.params.scales[ctx] = {unit_gate};
    auto& table = g.params.embeddings[ctx];
    for (const auto& [id, r] : items) table[id] = {c, r};
  }
  return g;
}

/// Score through either model kind; lets training and evaluation be generic.
inline double model_score(const GpmModel& m, const ItemRef& i, const ItemRef& j) {
  return gpm_score(m, i, j);
}
inline double model_score(const BtModel& m, const ItemRef& i, const ItemRef& j) {
  return bt_score(m, i, j);
}

inline std::vector<std::string> context_items(const GpmModel& m, const std::string& ctx) {
  auto it = m.params.embeddings.find(ctx);
  if (it == m.params.embeddings.end()) throw ValidationError("unknown context " + ctx);
  std::vector<std::string> ids;
  for (const auto& [id, _] : it->second) ids.push_back(id);
  return ids;
}

inline std::vector<std::string> context_items(const BtModel& m, const std::string& ctx) {
  auto it = m.params.rewards.find(ctx);
  if (it == m.params.rewards.end()) throw ValidationError("unknown context " + ctx);
  std::vector<std::string> ids;
  for (const auto& [id, _] : it->second) ids.push_back(id);
  return ids;
}

}  // namespace prefrep
