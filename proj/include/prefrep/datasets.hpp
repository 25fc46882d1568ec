#pragma once

/// \file datasets.hpp
/// Synthetic preference generators (cyclic, Bradley-Terry, random skew) and
/// JSONL persistence.
///
/// JSONL line schema, winner first with prob in [0.5, 1]:
///   {"context":"c0","winner":"y1","loser":"y2","prob":1.0}
/// Items that appear in no example are kept in an optional side-file
/// `<path>.catalog.json` of the form {"c0":["y7", ...]}.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefrep/core.hpp"
#include "prefrep/error.hpp"
#include "prefrep/linalg.hpp"
#include "prefrep/preference_data.hpp"

namespace prefrep {

enum class GroundTruthKind { Cycle, BT, Skew };

struct GroundTruth {
  GroundTruthKind kind = GroundTruthKind::Cycle;
  std::map<std::string, std::vector<std::string>> cycle_order;  // context -> y0 > y1 > ... > y0
  std::map<std::string, std::map<std::string, double>> rewards;  // context -> item -> reward
  std::map<std::string, Matrix> skew;  // context -> P over items y0..y{n-1}
};

struct GeneratedData {
  PreferenceDataset dataset;
  GroundTruth truth;
};

inline std::string item_name(std::size_t i) { return "y" + std::to_string(i); }
inline std::string context_name(std::size_t c) { return "c" + std::to_string(c); }

/// Per context, a random item order y_{p0} > y_{p1} > ... > y_{p(n-1)} > y_{p0}
/// as n hard-labeled examples.
inline GeneratedData gen_cycle(std::size_t n, std::size_t contexts, std::uint64_t seed) {
  if (n < 3) throw ValidationError("a preference cycle needs at least 3 items, got " + std::to_string(n));
  if (contexts == 0) throw ValidationError("contexts must be positive");
  std::mt19937_64 rng(seed);
  GeneratedData out;
  out.truth.kind = GroundTruthKind::Cycle;
  for (std::size_t c = 0; c < contexts; ++c) {
    const std::string ctx = context_name(c);
    std::vector<std::string> order;
    for (std::size_t i = 0; i < n; ++i) order.push_back(item_name(i));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      out.dataset.add({ctx, order[i], order[(i + 1) % n], 1.0});
    }
    out.truth.cycle_order[ctx] = std::move(order);
  }
  return out;
}

/// Gaussian rewards; random distinct pairs. Hard mode labels the higher
/// reward with prob 1; soft mode uses prob = sigma(|r_w - r_l| / beta).
/// Pairs with equal rewards are redrawn.
inline GeneratedData gen_bt(std::size_t n_items, std::size_t contexts, std::size_t pairs_per_context,
                            std::uint64_t seed, bool soft, double beta = 1.0) {
  if (n_items < 2) throw ValidationError("gen_bt needs at least 2 items");
  if (contexts == 0 || pairs_per_context == 0) {
    throw ValidationError("gen_bt needs positive context and pair counts");
  }
  if (soft && !(beta > 0.0)) throw ValidationError("beta must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n_items - 1);
  GeneratedData out;
  out.truth.kind = GroundTruthKind::BT;
  for (std::size_t c = 0; c < contexts; ++c) {
    const std::string ctx = context_name(c);
    auto& rewards = out.truth.rewards[ctx];
    for (std::size_t i = 0; i < n_items; ++i) rewards[item_name(i)] = gauss(rng);
    for (std::size_t p = 0; p < pairs_per_context; ++p) {
      std::size_t a = 0, b = 0;
      double gap = 0.0;
      do {
        a = pick(rng);
        b = pick(rng);
        gap = rewards[item_name(a)] - rewards[item_name(b)];
      } while (a == b || gap == 0.0);
      if (gap < 0.0) {
        std::swap(a, b);
        gap = -gap;
      }
      const double prob = soft ? sigmoid(gap / beta) : 1.0;
      out.dataset.add({ctx, item_name(a), item_name(b), prob});
    }
    for (std::size_t i = 0; i < n_items; ++i) out.dataset.catalog.insert({ctx, item_name(i)});
  }
  return out;
}

/// Random skew matrix P with P_ij = scale * N(0,1) above the diagonal; every
/// unordered pair with P_ij != 0 becomes one example with prob sigma(|P_ij|),
/// winner chosen by sign.
inline GeneratedData gen_skew(std::size_t n_items, std::size_t contexts, std::uint64_t seed,
                              double scale = 1.0) {
  if (n_items < 2) throw ValidationError("gen_skew needs at least 2 items");
  if (contexts == 0) throw ValidationError("contexts must be positive");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ValidationError("scale must be finite and >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GeneratedData out;
  out.truth.kind = GroundTruthKind::Skew;
  for (std::size_t c = 0; c < contexts; ++c) {
    const std::string ctx = context_name(c);
    Matrix p(n_items, n_items);
    for (std::size_t i = 0; i < n_items; ++i)
      for (std::size_t j = i + 1; j < n_items; ++j) {
        p(i, j) = scale * gauss(rng);
        p(j, i) = -p(i, j);
      }
    for (std::size_t i = 0; i < n_items; ++i) {
      out.dataset.catalog.insert({ctx, item_name(i)});
      for (std::size_t j = i + 1; j < n_items; ++j) {
        const double s = p(i, j);
        if (s == 0.0) continue;
        if (s > 0.0) {
          out.dataset.add({ctx, item_name(i), item_name(j), sigmoid(s)});
        } else {
          out.dataset.add({ctx, item_name(j), item_name(i), sigmoid(-s)});
        }
      }
    }
    out.truth.skew.emplace(ctx, std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL persistence

inline std::string catalog_path(const std::string& path) { return path + ".catalog.json"; }

/// Writes the examples as JSONL. If the catalog holds items no example
/// references, also writes the catalog side-file; otherwise removes a stale one.
inline void save_dataset(const PreferenceDataset& ds, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open " + path + " for writing");
    for (const auto& ex : ds.examples) {
      nlohmann::ordered_json j;
      j["context"] = ex.context_id;
      j["winner"] = ex.winner_id;
      j["loser"] = ex.loser_id;
      j["prob"] = ex.prob;
      out << j.dump() << '\n';
    }
    if (!out) throw ValidationError("failed writing " + path);
  }
  std::set<ItemRef> referenced;
  for (const auto& ex : ds.examples) {
    referenced.insert(ex.winner());
    referenced.insert(ex.loser());
  }
  std::map<std::string, std::vector<std::string>> isolated;
  for (const auto& ref : ds.catalog)
    if (!referenced.contains(ref)) isolated[ref.context_id].push_back(ref.item_id);
  const std::string side = catalog_path(path);
  if (isolated.empty()) {
    std::error_code ec;
    std::filesystem::remove(side, ec);
    return;
  }
  std::ofstream out(side, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + side + " for writing");
  out << nlohmann::json(isolated).dump() << '\n';
}

namespace detail {

inline ValidationError line_error(const std::string& path, std::size_t line, const std::string& why) {
  return ValidationError(path + ":" + std::to_string(line) + ": " + why);
}

}  // namespace detail

/// Reads a JSONL dataset, validating every line. An empty file is an empty
/// dataset.
inline PreferenceDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset " + path);
  PreferenceDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw detail::line_error(path, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw detail::line_error(path, lineno, "expected a JSON object");
    PreferenceExample ex;
    for (const char* key : {"context", "winner", "loser"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw detail::line_error(path, lineno, std::string("missing or non-string field '") + key + "'");
      }
    }
    if (!j.contains("prob") || !j["prob"].is_number()) {
      throw detail::line_error(path, lineno, "missing or non-numeric field 'prob'");
    }
    ex.context_id = j["context"].get<std::string>();
    ex.winner_id = j["winner"].get<std::string>();
    ex.loser_id = j["loser"].get<std::string>();
    ex.prob = j["prob"].get<double>();
    if (auto why = check_example(ex); !why.empty()) throw detail::line_error(path, lineno, why);
    ds.add(std::move(ex));
  }

  const std::string side = catalog_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream cin(side, std::ios::binary);
    nlohmann::json j;
    try {
      cin >> j;
      for (const auto& [ctx, items] : j.items())
        for (const auto& id : items) {
          const auto item = id.get<std::string>();
          if (ctx.empty() || item.empty()) throw ValidationError("empty id in catalog " + side);
          ds.catalog.insert({ctx, item});
        }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("catalog file " + side + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace prefrep
