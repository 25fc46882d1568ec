#pragma once

/// \file model_io.hpp
/// JSON persistence for GPM and BT models.
///
///   {"kind":"gpm","k":1,"beta":0.1,"normalize":true,
///    "scales":{"c0":[0.0]},"embeddings":{"c0":{"y0":[0.3,-0.1]}}}
///   {"kind":"bt","beta":1.0,"rewards":{"c0":{"y0":0.5}}}
///
/// Doubles are written in shortest round-trip form, so load(save(m)) == m.

#include <cmath>
#include <fstream>
#include <string>
#include <variant>

#include "json.hpp"
#include "prefrep/error.hpp"
#include "prefrep/models.hpp"

namespace prefrep {

using AnyModel = std::variant<GpmModel, BtModel>;

inline nlohmann::json to_json(const GpmModel& m) {
  nlohmann::json j;
  j["kind"] = "gpm";
  j["k"] = m.k;
  j["beta"] = m.beta;
  j["normalize"] = m.normalize;
  j["scales"] = nlohmann::json::object();
  for (const auto& [ctx, raw] : m.params.scales) j["scales"][ctx] = raw;
  j["embeddings"] = nlohmann::json::object();
  for (const auto& [ctx, items] : m.params.embeddings)
    for (const auto& [id, raw] : items) j["embeddings"][ctx][id] = raw;
  return j;
}

inline nlohmann::json to_json(const BtModel& m) {
  nlohmann::json j;
  j["kind"] = "bt";
  j["beta"] = m.beta;
  j["rewards"] = nlohmann::json::object();
  for (const auto& [ctx, items] : m.params.rewards)
    for (const auto& [id, r] : items) j["rewards"][ctx][id] = r;
  return j;
}

namespace detail {

inline double finite_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError("model file: " + where + " is not a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ValidationError("model file: " + where + " is not finite");
  return x;
}

inline double positive_beta(const nlohmann::json& j) {
  const double beta = finite_number(j.at("beta"), "beta");
  if (!(beta > 0.0)) throw ValidationError("model file: beta must be positive");
  return beta;
}

}  // namespace detail

inline AnyModel model_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gpm") {
      GpmModel m;
      const long long k = j.at("k").get<long long>();
      if (k <= 0) throw ValidationError("model file: k must be positive");
      m.k = static_cast<std::size_t>(k);
      m.beta = detail::positive_beta(j);
      m.normalize = j.at("normalize").get<bool>();
      for (const auto& [ctx, raw] : j.at("scales").items()) {
        auto& dst = m.params.scales[ctx];
        for (const auto& x : raw) dst.push_back(detail::finite_number(x, "scales." + ctx));
        if (dst.size() != m.k) {
          throw ValidationError("model file: scales." + ctx + " must have k entries");
        }
      }
      for (const auto& [ctx, items] : j.at("embeddings").items()) {
        if (!m.params.scales.contains(ctx)) {
          throw ValidationError("model file: context " + ctx + " has embeddings but no scales");
        }
        for (const auto& [id, raw] : items.items()) {
          auto& dst = m.params.embeddings[ctx][id];
          const std::string where = "embeddings." + ctx + "." + id;
          for (const auto& x : raw) dst.push_back(detail::finite_number(x, where));
          if (dst.size() != 2 * m.k) {
            throw ValidationError("model file: " + where + " must have 2k entries");
          }
        }
      }
      return m;
    }
    if (kind == "bt") {
      BtModel m;
      m.beta = detail::positive_beta(j);
      for (const auto& [ctx, items] : j.at("rewards").items())
        for (const auto& [id, r] : items.items())
          m.params.rewards[ctx][id] = detail::finite_number(r, "rewards." + ctx + "." + id);
      return m;
    }
    throw ValidationError("model file: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

inline void save_model(const AnyModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  std::visit([&](const auto& m) { out << to_json(m).dump(2) << '\n'; }, model);
  if (!out) throw ValidationError("failed writing " + path);
}

inline AnyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace prefrep
