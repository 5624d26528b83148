#pragma once

// Scoring against a unigram null model, recall-precision evaluation,
// contact prediction from parse trees, and the k-fold harness (k-2 folds
// train, one validates checkpoints, one tests).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/dataio.hpp"
#include "pcfgcm/estimation.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/learner.hpp"
#include "pcfgcm/parallel.hpp"
#include "pcfgcm/parser.hpp"
#include "pcfgcm/tree.hpp"

namespace pcfgcm {

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Null model

class NullModel {
 public:
  NullModel() = default;

  /// Frequencies in alphabet order; rescaled to sum to one.
  static NullModel from_frequencies(const Alphabet& alphabet, std::vector<double> freq) {
    if (freq.size() != alphabet.size())
      throw EvaluationError("null model needs one frequency per alphabet symbol");
    double total = 0.0;
    for (std::size_t k = 0; k < freq.size(); ++k) {
      if (!(freq[k] > 0.0) || !std::isfinite(freq[k]))
        throw EvaluationError(std::string("null model frequency of '") + alphabet.symbol(static_cast<int>(k)) +
                              "' must be positive");
      total += freq[k];
    }
    for (double& f : freq) f /= total;
    NullModel m;
    m.alphabet_ = alphabet;
    m.freq_ = std::move(freq);
    return m;
  }

  static NullModel uniform(const Alphabet& alphabet) {
    return from_frequencies(alphabet, std::vector<double>(alphabet.size(), 1.0));
  }

  /// Average amino-acid composition of UniProtKB/Swiss-Prot, in percent.
  static NullModel swissprot() {
    const Alphabet a = Alphabet::protein();  // ACDEFGHIKLMNPQRSTVWY
    return from_frequencies(a, {8.25, 1.38, 5.46, 6.72, 3.86, 7.07, 2.27, 5.91, 5.80, 9.65,
                                2.41, 4.06, 4.74, 3.93, 5.53, 6.64, 5.35, 6.86, 1.10, 2.92});
  }

  /// Swiss-Prot composition for the protein alphabet, uniform otherwise.
  static NullModel default_for(const Alphabet& alphabet) {
    return alphabet == Alphabet::protein() ? swissprot() : uniform(alphabet);
  }

  /// Lines of "symbol frequency"; '#' starts a comment. Every alphabet
  /// symbol must appear exactly once.
  static NullModel read(std::istream& in, const Alphabet& alphabet) {
    std::vector<double> freq(alphabet.size(), -1.0);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
      std::istringstream ls(raw);
      std::string sym;
      if (!(ls >> sym)) continue;
      auto fail = [&](const std::string& what) {
        throw EvaluationError("null model line " + std::to_string(line_no) + ": " + what);
      };
      double f;
      if (!(ls >> f)) fail("expected 'symbol frequency'");
      if (sym.size() != 1) fail("symbol must be one character");
      const auto k = alphabet.index_of(sym[0]);
      if (!k) fail("symbol '" + sym + "' is not in the alphabet");
      if (freq[static_cast<std::size_t>(*k)] >= 0.0) fail("symbol '" + sym + "' listed twice");
      freq[static_cast<std::size_t>(*k)] = f;
    }
    for (std::size_t k = 0; k < freq.size(); ++k)
      if (freq[k] < 0.0)
        throw EvaluationError(std::string("null model lacks symbol '") + alphabet.symbol(static_cast<int>(k)) + "'");
    return from_frequencies(alphabet, std::move(freq));
  }

  static NullModel load(const std::string& path, const Alphabet& alphabet) {
    std::ifstream in(path);
    if (!in) throw EvaluationError("cannot open null model file " + path);
    return read(in, alphabet);
  }

  void write(std::ostream& out) const {
    for (std::size_t k = 0; k < freq_.size(); ++k)
      out << alphabet_.symbol(static_cast<int>(k)) << ' ' << detail::format_double(freq_[k]) << '\n';
  }

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  double frequency(int symbol) const { return freq_.at(static_cast<std::size_t>(symbol)); }

  double log_probability(std::span<const int> x) const {
    double total = 0.0;
    for (int c : x) total += std::log(frequency(c));
    return total;
  }

 private:
  Alphabet alphabet_;
  std::vector<double> freq_;
};

/// Log-odds of x under g (constrained by `map` when given) against the null.
inline double score(std::span<const int> x, const ContactMap* map, const Grammar& g,
                    const NullModel& null) {
  const double p = map ? inside_constrained(x, *map, g) : inside(x, g);
  return std::log(p) - null.log_probability(x);
}

// ---------------------------------------------------------------------------
// Recall-precision

struct ScoredItem {
  std::string id;
  bool positive = false;
  double score = kNegInf;
};

struct RpcPoint {
  double recall;
  double precision;
};

namespace detail {

// Descending score; among equal scores negatives rank first.
inline std::vector<ScoredItem> ranked(std::span<const ScoredItem> items) {
  std::size_t pos = 0;
  for (const auto& it : items) {
    if (std::isnan(it.score)) throw EvaluationError("score of '" + it.id + "' is NaN");
    pos += it.positive ? 1 : 0;
  }
  if (pos == 0 || pos == items.size())
    throw EvaluationError("ranking needs at least one positive and one negative item");
  std::vector<ScoredItem> out(items.begin(), items.end());
  std::stable_sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return !a.positive && b.positive;
  });
  return out;
}

}  // namespace detail

/// Recall and precision after each rank of the pessimistic ordering.
inline std::vector<RpcPoint> rpc_points(std::span<const ScoredItem> items) {
  const auto order = detail::ranked(items);
  const auto positives = static_cast<double>(
      std::count_if(order.begin(), order.end(), [](const ScoredItem& s) { return s.positive; }));
  std::vector<RpcPoint> out;
  double hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    hits += order[k].positive ? 1 : 0;
    out.push_back({hits / positives, hits / static_cast<double>(k + 1)});
  }
  return out;
}

/// Step-wise AP: the mean of the precisions at the ranks of the positives.
inline double average_precision(std::span<const ScoredItem> items) {
  const auto order = detail::ranked(items);
  double hits = 0, sum = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!order[k].positive) continue;
    hits += 1;
    sum += hits / static_cast<double>(k + 1);
  }
  return sum / hits;
}

inline void write_rpc_csv(std::ostream& out, std::span<const RpcPoint> points) {
  out << "recall,precision\n";
  for (const auto& p : points)
    out << detail::format_double(p.recall) << ',' << detail::format_double(p.precision) << '\n';
}

// ---------------------------------------------------------------------------
// Contacts read off trees

/// Leaf pairs at least kMinSeparation apart whose leaf distance is <= delta.
inline std::vector<ContactPair> predict_contacts(const TreeShape& tree, int delta = kDefaultDelta) {
  std::vector<ContactPair> out;
  const int n = tree.leaf_count();
  for (int i = 1; i <= n; ++i)
    for (int j = i + kMinSeparation; j <= n; ++j)
      if (leaf_distance(tree, i, j) <= delta) out.emplace_back(i, j);
  return out;
}

struct DescriptiveMetrics {
  double recall_at_4 = 0.0;
  std::optional<double> precision_at_4;  // unset when every prediction was empty
  std::size_t precision_skipped = 0;     // sequences with no predicted contact
  std::optional<double> ap_over_delta;   // unset when no pair is a non-contact
  std::size_t sequences = 0;
};

struct DescriptiveItem {
  const TreeShape* tree;
  const ContactMap* training_map;
  const ContactMap* full_map;  // reference contacts; need not be compatible
};

inline DescriptiveMetrics descriptive_metrics(std::span<const DescriptiveItem> items) {
  if (items.empty()) throw EvaluationError("descriptive metrics need at least one tree");
  DescriptiveMetrics m;
  double recall_sum = 0, precision_sum = 0;
  std::size_t precision_count = 0;
  std::vector<ScoredItem> pairs;
  for (const auto& it : items) {
    if (it.training_map->empty() || it.full_map->empty())
      throw EvaluationError("descriptive metrics need non-empty contact maps");
    const int n = it.tree->leaf_count();
    if (it.training_map->length() != n || it.full_map->length() != n)
      throw EvaluationError("contact map length differs from tree yield length");
    const auto predicted = predict_contacts(*it.tree, kDefaultDelta);
    std::size_t recalled = 0, correct = 0;
    for (const auto& p : predicted) {
      recalled += it.training_map->contains(p) ? 1 : 0;
      correct += it.full_map->contains(p) ? 1 : 0;
    }
    recall_sum += static_cast<double>(recalled) / static_cast<double>(it.training_map->size());
    if (predicted.empty()) {
      ++m.precision_skipped;
    } else {
      precision_sum += static_cast<double>(correct) / static_cast<double>(predicted.size());
      ++precision_count;
    }
    for (int i = 1; i <= n; ++i)
      for (int j = i + kMinSeparation; j <= n; ++j)
        pairs.push_back({{}, it.full_map->contains({i, j}),
                         -static_cast<double>(leaf_distance(*it.tree, i, j))});
  }
  m.sequences = items.size();
  m.recall_at_4 = recall_sum / static_cast<double>(items.size());
  if (precision_count) m.precision_at_4 = precision_sum / static_cast<double>(precision_count);
  const bool has_pos = std::any_of(pairs.begin(), pairs.end(), [](auto& s) { return s.positive; });
  const bool has_neg = std::any_of(pairs.begin(), pairs.end(), [](auto& s) { return !s.positive; });
  if (has_pos && has_neg) m.ap_over_delta = average_precision(pairs);
  return m;
}

/// All trees measured against the same training and reference maps.
inline DescriptiveMetrics descriptive_metrics(std::span<const ParseTree> trees,
                                              const ContactMap& training_map,
                                              const ContactMap& full_map) {
  std::vector<DescriptiveItem> items;
  for (const auto& t : trees) items.push_back({&t, &training_map, &full_map});
  return descriptive_metrics(items);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldPlan {
  int k = 0;
  std::vector<int> positive_fold;
  std::vector<int> negative_fold;

  int test_fold(int round) const { return round; }
  int validation_fold(int round) const { return (round + 1) % k; }
  bool is_training_fold(int round, int fold) const {
    return fold != test_fold(round) && fold != validation_fold(round);
  }

  static std::vector<std::size_t> members(const std::vector<int>& assignment, int fold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> training_positives(int round) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < positive_fold.size(); ++i)
      if (is_training_fold(round, positive_fold[i])) out.push_back(i);
    return out;
  }
};

/// Seeded shuffle, then round-robin into k folds (sizes differ by at most 1).
inline FoldPlan make_fold_plan(std::size_t positives, std::size_t negatives, int k,
                               std::uint64_t seed) {
  if (k < 3) throw EvaluationError("cross-validation needs k >= 3");
  if (positives < static_cast<std::size_t>(k))
    throw EvaluationError("fold too small: " + std::to_string(positives) + " positives for " +
                          std::to_string(k) + " folds");
  if (negatives < static_cast<std::size_t>(k))
    throw EvaluationError("fold too small: " + std::to_string(negatives) + " negatives for " +
                          std::to_string(k) + " folds");
  auto assign = [&](std::size_t count, std::uint64_t s) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Random rng(s);
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<int> fold(count);
    for (std::size_t r = 0; r < count; ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(k));
    return fold;
  };
  return {k, assign(positives, derive_seed(seed, 0)), assign(negatives, derive_seed(seed, 1))};
}

struct CvOptions {
  int folds = 3;
  bool train_with_maps = true;  // false: every training map is empty
  bool score_with_map = true;   // score with the dataset's shared map
  NullModel null_model;
};

struct CvRound {
  int round = 0;
  int test_fold = 0;
  int validation_fold = 0;
  std::vector<int> train_folds;
  std::vector<std::string> test_ids;
  int selected_generation = 0;
  double validation_ap = 0.0;
  double ap = 0.0;
  std::vector<RpcPoint> rpc;
  std::optional<DescriptiveMetrics> descriptive;
  Grammar grammar;
};

struct CvReport {
  int folds = 0;
  EstimatorKind estimator = EstimatorKind::ml;
  bool train_with_maps = true;
  bool score_with_map = true;
  std::uint64_t seed = 0;
  std::vector<CvRound> rounds;

  double mean_ap() const {
    double s = 0;
    for (const auto& r : rounds) s += r.ap;
    return rounds.empty() ? 0.0 : s / static_cast<double>(rounds.size());
  }
};

namespace detail {

inline std::vector<ScoredItem> score_items(const Dataset& d, const std::vector<std::size_t>& pos,
                                           const std::vector<std::size_t>& neg, const Grammar& g,
                                           const ContactMap* map, const NullModel& null, int threads) {
  std::vector<const SequenceRecord*> recs;
  for (std::size_t i : pos) recs.push_back(&d.positives[i]);
  for (std::size_t i : neg) recs.push_back(&d.negatives[i]);
  std::vector<ScoredItem> out(recs.size());
  parallel_for(recs.size(), threads, [&](std::size_t k) {
    const SequenceRecord& r = *recs[k];
    if (map && static_cast<int>(r.residues.size()) != map->length())
      throw EvaluationError("sequence '" + r.id + "' has length " + std::to_string(r.residues.size()) +
                            " but the scoring map has length " + std::to_string(map->length()));
    out[k] = {r.id, k < pos.size(), score(d.alphabet.encode(r.residues), map, g, null)};
  });
  return out;
}

}  // namespace detail

/// k rounds: train on k-2 folds, pick the checkpoint with the best
/// validation AP, report test AP and contact recovery on the test fold.
/// Negatives are only ever scored, never trained on.
inline CvReport cross_validate(const Dataset& d, const Grammar& base, const LearnerConfig& config,
                               const CvOptions& options) {
  if (options.score_with_map && !d.shared_map)
    throw EvaluationError("map-constrained scoring needs a shared contact map");
  const FoldPlan plan = make_fold_plan(d.positives.size(), d.negatives.size(), options.folds, config.seed);
  const ContactMap* scoring_map = options.score_with_map ? &*d.shared_map : nullptr;

  CvReport report;
  report.folds = options.folds;
  report.estimator = config.estimator;
  report.train_with_maps = options.train_with_maps;
  report.score_with_map = options.score_with_map;
  report.seed = config.seed;

  for (int r = 0; r < options.folds; ++r) {
    CvRound round;
    round.round = r;
    round.test_fold = plan.test_fold(r);
    round.validation_fold = plan.validation_fold(r);
    for (int f = 0; f < options.folds; ++f)
      if (plan.is_training_fold(r, f)) round.train_folds.push_back(f);

    LearnerConfig cfg = config;
    cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r) + 2);
    const TrainingSample sample = training_sample(d, plan.training_positives(r), options.train_with_maps);
    const TrainingResult trained = train(sample, base, cfg);

    const auto val_pos = FoldPlan::members(plan.positive_fold, round.validation_fold);
    const auto val_neg = FoldPlan::members(plan.negative_fold, round.validation_fold);
    const Checkpoint* chosen = nullptr;
    for (const auto& cp : trained.checkpoints) {
      const auto items = detail::score_items(d, val_pos, val_neg, cp.grammar, scoring_map,
                                             options.null_model, config.threads);
      const double ap = average_precision(items);
      if (!chosen || ap > round.validation_ap) {
        chosen = &cp;
        round.validation_ap = ap;
      }
    }
    round.selected_generation = chosen->generation;
    round.grammar = chosen->grammar;

    const auto test_pos = FoldPlan::members(plan.positive_fold, round.test_fold);
    const auto test_neg = FoldPlan::members(plan.negative_fold, round.test_fold);
    const auto items = detail::score_items(d, test_pos, test_neg, round.grammar, scoring_map,
                                           options.null_model, config.threads);
    round.ap = average_precision(items);
    round.rpc = rpc_points(items);
    for (std::size_t i : test_pos) round.test_ids.push_back(d.positives[i].id);

    // Contact recovery from unconstrained Viterbi trees of the test positives.
    std::vector<ParseTree> trees(test_pos.size());
    std::vector<const ContactMap*> maps(test_pos.size(), nullptr);
    parallel_for(test_pos.size(), config.threads, [&](std::size_t k) {
      const SequenceRecord& rec = d.positives[test_pos[k]];
      maps[k] = d.map_for(rec.id);
      const auto v = viterbi(d.alphabet.encode(rec.residues), round.grammar);
      if (v.found()) trees[k] = *v.tree;
    });
    std::vector<DescriptiveItem> desc;
    for (std::size_t k = 0; k < trees.size(); ++k) {
      if (!maps[k] || maps[k]->empty() || trees[k].empty()) continue;
      const ContactMap* full = d.full_map && d.full_map->length() == maps[k]->length() ? &*d.full_map : maps[k];
      desc.push_back({&trees[k], maps[k], full});
    }
    if (!desc.empty()) round.descriptive = descriptive_metrics(desc);
    report.rounds.push_back(std::move(round));
  }
  return report;
}

inline nlohmann::json to_json(const DescriptiveMetrics& m) {
  nlohmann::json j;
  j["recall_at_4"] = m.recall_at_4;
  j["precision_at_4"] = m.precision_at_4 ? nlohmann::json(*m.precision_at_4) : nlohmann::json();
  j["precision_skipped"] = m.precision_skipped;
  j["ap_over_delta"] = m.ap_over_delta ? nlohmann::json(*m.ap_over_delta) : nlohmann::json();
  j["sequences"] = m.sequences;
  return j;
}

inline nlohmann::json to_json(const CvReport& report) {
  nlohmann::json j;
  j["folds"] = report.folds;
  j["estimator"] = std::string(to_string(report.estimator));
  j["train_with_maps"] = report.train_with_maps;
  j["score_with_map"] = report.score_with_map;
  j["seed"] = report.seed;
  nlohmann::json rounds = nlohmann::json::array();
  double recall = 0, precision = 0, apd = 0;
  int n_recall = 0, n_precision = 0, n_apd = 0;
  for (const auto& r : report.rounds) {
    nlohmann::json jr;
    jr["round"] = r.round;
    jr["test_fold"] = r.test_fold;
    jr["validation_fold"] = r.validation_fold;
    jr["train_folds"] = r.train_folds;
    jr["test_ids"] = r.test_ids;
    jr["selected_generation"] = r.selected_generation;
    jr["validation_ap"] = r.validation_ap;
    jr["ap"] = r.ap;
    if (r.descriptive) {
      const auto d = to_json(*r.descriptive);
      for (const char* key : {"recall_at_4", "precision_at_4", "precision_skipped", "ap_over_delta"})
        jr[key] = d[key];
      recall += r.descriptive->recall_at_4;
      ++n_recall;
      if (r.descriptive->precision_at_4) { precision += *r.descriptive->precision_at_4; ++n_precision; }
      if (r.descriptive->ap_over_delta) { apd += *r.descriptive->ap_over_delta; ++n_apd; }
    } else {
      jr["recall_at_4"] = jr["precision_at_4"] = jr["ap_over_delta"] = nullptr;
    }
    rounds.push_back(std::move(jr));
  }
  j["rounds"] = std::move(rounds);
  auto mean = [](double s, int n) { return n ? nlohmann::json(s / n) : nlohmann::json(); };
  j["aggregate"] = {{"ap", report.mean_ap()},
                    {"recall_at_4", mean(recall, n_recall)},
                    {"precision_at_4", mean(precision, n_precision)},
                    {"ap_over_delta", mean(apd, n_apd)}};
  return j;
}

}  // namespace pcfgcm
