// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "pcfgcm/evaluation.hpp"
#include "pcfgcm/oracle.hpp"
#include "pcfgcm/parser.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace pcfgcm;
namespace fs = std::filesystem;
using testing::rel_close;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  const Alphabet ab("ab");
  long checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n_vt = 1 + trial % 2, n_vn = 1 + (trial / 2) % 2;
    const Grammar g = testing::random_grammar(rng, ab, n_vt, n_vn, true, 0.25);
    for (int n = 2; n <= 6; ++n) {
      const ContactMap m = testing::random_map(rng, n);
      for (const auto& x : testing::all_sequences(2, n)) {
        const auto brute = oracle::brute_sums(x, m, g);
        for (auto [fast, slow] : {std::pair{inside(x, g), brute.all},
                                  std::pair{inside_constrained(x, m, g), brute.consistent}}) {
          const double scale = std::max(std::abs(fast), std::abs(slow));
          if (scale > 0) worst = std::max(worst, std::abs(fast - slow) / scale);
          if (!rel_close(fast, slow, 1e-10))
            return {false, "mismatch on grammar " + std::to_string(trial) + ", length " + std::to_string(n)};
        }
        ++checked;
      }
    }
  }
  const double sec = seconds_since(t0);
  return {sec < 120, "200 grammars, " + std::to_string(checked) + " sequences, max rel err " + fmt(worst, 3) +
                         ", " + fmt(sec, 3) + "s"};
}

Outcome neighborhood_identity() {
  std::mt19937_64 rng(77);
  const Alphabet ab("ab");
  double worst = 0.0;
  int maps = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Grammar g = testing::random_grammar(rng, ab, 1 + trial % 2, 1 + (trial / 2) % 2, true, 0.25);
    for (int n = 2; n <= 5; ++n) {
      const ContactMap m = testing::random_map(rng, n);
      double total = 0.0;
      for (const auto& x : testing::all_sequences(2, n)) total += inside_constrained(x, m, g);
      const double mass = neighborhood_mass(m, n, g);
      if (std::abs(mass - total) > 1e-10)
        return {false, "grammar " + std::to_string(trial) + ", n=" + std::to_string(n) + ": " + fmt(mass, 17) +
                           " vs " + fmt(total, 17)};
      worst = std::max(worst, std::abs(mass - total));
      maps += !m.empty();
    }
  }
  return {true, "50 grammars x n=2..5 (" + std::to_string(maps) + " non-empty maps), max abs err " + fmt(worst, 3)};
}

Outcome fixtures() {
  const Grammar g1 = testing::make_g1(), g2 = testing::make_g2();
  const ContactMap m(4, {{1, 4}});
  struct Row {
    const char* name;
    double got, want;
  };
  const Row rows[] = {{"inside(G1,ab)", inside("ab", g1), 0.168},
                      {"inside(G2,abba)", inside("abba", g2), 0.009792},
                      {"inside_constrained(G2,abba)", inside_constrained("abba", m, g2), 0.00864},
                      {"neighborhood_mass(G2,4)", neighborhood_mass(m, 4, g2), 0.15}};
  std::string detail;
  bool ok = true;
  for (const auto& r : rows) {
    ok = ok && std::abs(r.got - r.want) <= 1e-12;
    detail += std::string(detail.empty() ? "" : ", ") + r.name + "=" + fmt(r.got, 12);
  }
  return {ok, detail};
}

Outcome consistency_guarantee() {
  std::mt19937_64 rng(20240601);
  const Alphabet ab("ab");
  long trees = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Grammar g = testing::random_grammar(rng, ab, 1 + trial % 2, 1 + (trial / 2) % 2, true, 0.25);
    for (int n = 2; n <= 6; ++n) {
      const ContactMap m = testing::random_map(rng, n);
      for (const auto& x : testing::all_sequences(2, n)) {
        const auto v = viterbi_constrained(x, m, g);
        if (!v.found()) continue;
        ++trees;
        if (!is_consistent(*v.tree, m, kDefaultDelta))
          return {false, "inconsistent Viterbi tree for grammar " + std::to_string(trial)};
      }
    }
  }
  long zero_checks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Grammar g = testing::random_grammar(rng, ab, 1 + trial % 2, 1 + (trial / 2) % 2, false);
    for (int n = 4; n <= 8; ++n) {
      ContactMap m = testing::random_map(rng, n);
      if (m.empty()) m = ContactMap(n, {{1, n}});
      if (neighborhood_mass(m, n, g) != 0.0) return {false, "branching-only grammar has neighborhood mass"};
      for (const auto& x : testing::all_sequences(2, n)) {
        if (inside_constrained(x, m, g) != 0.0 || viterbi_constrained(x, m, g).found())
          return {false, "branching-only grammar has constrained mass"};
        ++zero_checks;
      }
    }
  }
  return {true, std::to_string(trees) + " constrained Viterbi trees consistent; " + std::to_string(zero_checks) +
                    " branching-only checks with zero mass"};
}

// Mean recall of the training map's contacts in unconstrained Viterbi trees.
double viterbi_recall(const Grammar& g, const std::vector<Sequence>& xs, const ContactMap& map) {
  std::vector<ParseTree> trees(xs.size());
  parallel_for(xs.size(), default_thread_count(), [&](std::size_t k) {
    if (auto v = viterbi(xs[k], g); v.found()) trees[k] = *v.tree;
  });
  std::vector<DescriptiveItem> items;
  for (const auto& t : trees)
    if (!t.empty()) items.push_back({&t, &map, &map});
  if (items.empty()) return 0.0;
  // Sequences without a parse recover nothing.
  return descriptive_metrics(items).recall_at_4 * static_cast<double>(items.size()) /
         static_cast<double>(xs.size());
}

Outcome synthetic_recall() {
  const auto t0 = std::chrono::steady_clock::now();
  const Grammar gen = testing::synthetic_generator();
  const ContactMap map = testing::synthetic_map();
  Random rng(1);
  const auto train_x = testing::sample_consistent(gen, map, 100, rng);
  const auto held_out = testing::sample_consistent(gen, map, 100, rng);
  const Grammar base = build_full_grammar(gen.alphabet(), 2, 2, true);

  auto run = [&](EstimatorKind kind, bool with_maps) {
    TrainingSample s;
    s.shared_map = map;
    for (const auto& x : train_x) s.items.push_back({x, with_maps ? map : ContactMap(map.length(), {})});
    LearnerConfig c;  // population 100, at most 500 generations
    c.estimator = kind;
    c.seed = 1;
    c.threads = default_thread_count();
    return train(s, base, c).grammar;
  };
  const Grammar ml = run(EstimatorKind::ml, true);
  const Grammar ce_x = run(EstimatorKind::ce_x, true);
  const Grammar ml0 = run(EstimatorKind::ml, false);
  const double r_ml = viterbi_recall(ml, held_out, map), r_cex = viterbi_recall(ce_x, held_out, map),
               r_ml0 = viterbi_recall(ml0, held_out, map);
  const double tr_ml = viterbi_recall(ml, train_x, map), tr_cex = viterbi_recall(ce_x, train_x, map),
               tr_ml0 = viterbi_recall(ml0, train_x, map);
  const double sec = seconds_since(t0);
  const bool ok = r_ml >= 0.8 && r_cex >= 0.8 && r_ml > r_ml0 && r_cex > r_ml0 && sec < 1800;
  return {ok, "held-out recall ML " + fmt(r_ml, 3) + ", CE(X) " + fmt(r_cex, 3) + ", ML m=0 " + fmt(r_ml0, 3) +
                  " (training " + fmt(tr_ml, 3) + "/" + fmt(tr_cex, 3) + "/" + fmt(tr_ml0, 3) + "), " +
                  fmt(sec, 4) + "s"};
}

Outcome synthetic_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  int holds = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Dataset d = testing::synthetic_dataset(seed, 100, 300);
    const Grammar base = build_full_grammar(d.alphabet, 2, 2, true);
    double ap[2];
    for (int mode = 0; mode < 2; ++mode) {
      LearnerConfig c;
      c.generations = 300;
      c.checkpoint_interval = 50;
      c.seed = seed;
      c.threads = default_thread_count();
      c.estimator = mode == 0 ? EstimatorKind::ce_m : EstimatorKind::ml;
      CvOptions o;
      o.folds = 3;
      o.train_with_maps = mode == 0;
      o.score_with_map = mode == 0;
      o.null_model = NullModel::uniform(d.alphabet);
      ap[mode] = cross_validate(d, base, c, o).mean_ap();
    }
    holds += ap[0] >= ap[1];
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": CE(m) " +
              fmt(ap[0], 4) + " vs ML m=0 " + fmt(ap[1], 4);
  }
  return {holds == 3, detail + ", " + fmt(seconds_since(t0), 4) + "s"};
}

Outcome ap_correctness() {
  const std::vector<ScoredItem> fixture{{"p1", true, 0.9}, {"n1", false, 0.8}, {"p2", true, 0.7}};
  const double ap = average_precision(fixture);
  if (std::abs(ap - 0.833333) > 1e-6 || std::abs(ap - 5.0 / 6.0) > 1e-9)
    return {false, "fixture AP " + fmt(ap, 12)};
  const std::vector<ScoredItem> perfect{{"a", true, 3}, {"b", true, 2}, {"c", false, 1}, {"d", false, 0}};
  if (average_precision(perfect) != 1.0) return {false, "perfect ranking AP " + fmt(average_precision(perfect))};

  std::mt19937_64 rng(7);
  const std::vector<std::function<double(double)>> transforms{
      [](double s) { return 3.0 * s + 7.0; }, [](double s) { return std::exp(s); },
      [](double s) { return std::atan(s); }, [](double s) { return s * s * s; }};
  for (int set = 0; set < 100; ++set) {
    std::uniform_int_distribution<int> size(2, 60);
    std::uniform_int_distribution<int> level(-20, 20);  // coarse, so ties occur
    std::bernoulli_distribution positive(0.3);
    std::vector<ScoredItem> items;
    const int n = size(rng);
    for (int k = 0; k < n; ++k) items.push_back({"i" + std::to_string(k), positive(rng), level(rng) / 4.0});
    if (std::none_of(items.begin(), items.end(), [](const ScoredItem& s) { return s.positive; }))
      items[0].positive = true;
    const double base = average_precision(items);
    for (const auto& f : transforms) {
      auto moved = items;
      for (auto& s : moved) s.score = f(s.score);
      if (average_precision(moved) != base) return {false, "transform changed AP on set " + std::to_string(set)};
    }
  }
  return {true, "fixture " + fmt(ap, 10) + ", perfect 1, 100 sets x 4 monotone transforms invariant"};
}

Outcome cubic_scaling() {
  std::mt19937_64 rng(3);
  const Alphabet protein = Alphabet::protein();
  const Grammar g = testing::random_grammar(rng, protein, 3, 4, true);
  auto random_seq = [&](int n) {
    std::uniform_int_distribution<int> sym(0, static_cast<int>(protein.size()) - 1);
    Sequence x(static_cast<std::size_t>(n));
    for (auto& s : x) s = sym(rng);
    return x;
  };
  auto median_time = [&](const Sequence& x) {
    volatile double sink = inside(x, g);  // warm-up
    std::vector<double> t;
    for (int k = 0; k < 10; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      sink = inside(x, g);
      t.push_back(seconds_since(t0));
    }
    (void)sink;
    std::sort(t.begin(), t.end());
    return 0.5 * (t[4] + t[5]);
  };
  const double t32 = median_time(random_seq(32)), t64 = median_time(random_seq(64));
  const double ratio = t64 / t32;
  return {ratio >= 5.5 && ratio <= 10.5, "median n=32 " + fmt(t32 * 1e3, 4) + "ms, n=64 " + fmt(t64 * 1e3, 4) +
                                             "ms, ratio " + fmt(ratio, 4)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome train_determinism() {
  const fs::path dir = fs::temp_directory_path() / "pcfgcm_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = std::string("'") + PCFGCM_CLI + "'";
  const std::string manifest = std::string("'") + PCFGCM_TEST_DATA + "/synthetic/manifest.txt'";
  auto sh = [](const std::string& cmd) {
    const int st = std::system((cmd + " 2>/dev/null").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  if (sh(cli + " init-grammar --alphabet abcd --vt 2 --vn 2 --out '" + (dir / "base.txt").string() + "'") != 0)
    return {false, "init-grammar failed"};
  const std::string train = cli + " train --manifest " + manifest + " --grammar '" + (dir / "base.txt").string() +
                            "' --estimator ml --population 40 --generations 40 --seed 17 --out ";
  for (const char* run : {"run1", "run2"})
    if (sh(train + "'" + (dir / run).string() + "'") != 0) return {false, std::string("train ") + run + " failed"};
  bool same = true;
  std::string sizes;
  for (const char* f : {"grammar.txt", "trace.csv"}) {
    const auto a = slurp(dir / "run1" / f), b = slurp(dir / "run2" / f);
    same = same && !a.empty() && a == b;
    sizes += std::string(sizes.empty() ? "" : ", ") + f + " " + std::to_string(a.size()) + " bytes";
  }
  return {same, std::string(same ? "byte-identical: " : "outputs differ: ") + sizes};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"oracle equivalence of inside and inside_constrained", oracle_equivalence},
      {"neighborhood mass equals sum of constrained inside", neighborhood_identity},
      {"fixture values", fixtures},
      {"constrained Viterbi consistency; branching-only grammars have zero constrained mass",
       consistency_guarantee},
      {"synthetic contact recall of constrained training", synthetic_recall},
      {"synthetic AP ordering CE(m) with map vs unconstrained ML", synthetic_ordering},
      {"average precision correctness", ap_correctness},
      {"cubic scaling of inside", cubic_scaling},
      {"train determinism", train_determinism}};
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::atoi(argv[k]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << criteria[k].first << " ("
              << o.detail << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
