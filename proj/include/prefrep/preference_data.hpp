#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "prefrep/error.hpp"
#include "prefrep/models.hpp"

namespace prefrep {

/// One observed comparison, stored winner-first: prob = P(winner > loser) in
/// [0.5, 1], 1.0 for a hard label.
struct PreferenceExample {
  std::string context_id;
  std::string winner_id;
  std::string loser_id;
  double prob = 1.0;

  ItemRef winner() const { return {context_id, winner_id}; }
  ItemRef loser() const { return {context_id, loser_id}; }

  friend bool operator==(const PreferenceExample&, const PreferenceExample&) = default;
};

/// Empty string when valid, otherwise the reason.
inline std::string check_example(const PreferenceExample& ex) {
  if (ex.context_id.empty()) return "empty context id";
  if (ex.winner_id.empty() || ex.loser_id.empty()) return "empty item id";
  if (ex.winner_id == ex.loser_id) return "winner equals loser (" + ex.winner_id + ")";
  if (!std::isfinite(ex.prob) || ex.prob < 0.5 || ex.prob > 1.0) {
    return "prob " + std::to_string(ex.prob) + " outside [0.5, 1] (store the winner first)";
  }
  return {};
}

struct PreferenceDataset {
  std::vector<PreferenceExample> examples;
  std::set<ItemRef> catalog;

  /// Appends an example and registers both of its items in the catalog.
  void add(PreferenceExample ex) {
    if (auto why = check_example(ex); !why.empty()) throw ValidationError(why);
    catalog.insert(ex.winner());
    catalog.insert(ex.loser());
    examples.push_back(std::move(ex));
  }

  std::set<std::string> contexts() const {
    std::set<std::string> out;
    for (const auto& ref : catalog) out.insert(ref.context_id);
    return out;
  }

  std::vector<std::string> items_in(const std::string& context_id) const {
    std::vector<std::string> out;
    for (const auto& ref : catalog)
      if (ref.context_id == context_id) out.push_back(ref.item_id);
    return out;
  }

  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;
};

}  // namespace prefrep
