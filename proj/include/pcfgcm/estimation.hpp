#pragma once

// Training objectives, all in the log domain (higher is better):
//
//   ML     Σ log P(trees of x_i consistent with m_i)
//   CE(m)  Σ log P(consistent trees of x_i) - |X| log P(consistent skeletons of length n)
//   CE(X)  Σ [log P(consistent trees of x_i) - log P(x_i)]
//
// An item with zero consistent mass makes the objective -inf.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/parser.hpp"

namespace pcfgcm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class EstimatorKind { ml, ce_m, ce_x };

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::ml: return "ml";
    case EstimatorKind::ce_m: return "ce-m";
    case EstimatorKind::ce_x: return "ce-x";
  }
  return "?";
}

inline EstimatorKind parse_estimator(std::string_view s) {
  if (s == "ml") return EstimatorKind::ml;
  if (s == "ce-m" || s == "ce_m") return EstimatorKind::ce_m;
  if (s == "ce-x" || s == "ce_x") return EstimatorKind::ce_x;
  throw std::invalid_argument("unknown estimator '" + std::string(s) + "'");
}

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleItem {
  Sequence x;
  ContactMap map;  // empty map: no constraint
};

struct Objective {
  EstimatorKind kind;
  double value;
};

inline double objective_ml(std::span<const SampleItem> sample, const Grammar& g) {
  double total = 0.0;
  for (const auto& item : sample) total += std::log(inside_constrained(item.x, item.map, g));
  return total;
}

inline double objective_ce_m(std::span<const Sequence> sample, const ContactMap& shared_map,
                             const Grammar& g) {
  const int n = shared_map.length();
  for (const auto& x : sample)
    if (static_cast<int>(x.size()) != n)
      throw EstimationError("CE(m) needs every sequence to match the shared map length");
  const double mass = neighborhood_mass(shared_map, n, g);
  if (!(mass > 0.0)) throw EstimationError("grammar cannot realize the shared contact map");
  const double log_mass = std::log(mass);
  double total = 0.0;
  for (const auto& x : sample) total += std::log(inside_constrained(x, shared_map, g)) - log_mass;
  return total;
}

inline double objective_ce_x(std::span<const SampleItem> sample, const Grammar& g) {
  double total = 0.0;
  for (const auto& item : sample) {
    const double all = inside(item.x, g);
    if (!(all > 0.0)) throw EstimationError("sequence has zero probability under the grammar");
    if (item.map.empty()) continue;  // ratio is exactly 1
    total += std::log(inside_constrained(item.x, item.map, g)) - std::log(all);
  }
  return total;
}

/// Sample in the shape every estimator accepts: per-item maps, plus the
/// shared map CE(m) normalizes by.
struct TrainingSample {
  std::vector<SampleItem> items;
  std::optional<ContactMap> shared_map;
};

inline Objective evaluate_objective(EstimatorKind kind, const TrainingSample& sample,
                                    const Grammar& g) {
  switch (kind) {
    case EstimatorKind::ml: return {kind, objective_ml(sample.items, g)};
    case EstimatorKind::ce_x: return {kind, objective_ce_x(sample.items, g)};
    case EstimatorKind::ce_m: {
      if (!sample.shared_map) throw EstimationError("CE(m) requires a shared contact map");
      std::vector<Sequence> xs;
      xs.reserve(sample.items.size());
      for (const auto& item : sample.items) xs.push_back(item.x);
      return {kind, objective_ce_m(xs, *sample.shared_map, g)};
    }
  }
  throw EstimationError("unknown estimator");
}

}  // namespace pcfgcm
