#pragma once

// Pittsburgh-style genetic algorithm over rule probabilities. Each
// individual is a whole grammar, encoded as one non-negative raw weight per
// rule and decoded by per-left-hand-side normalization.
//
// Operators: elitism, tournament selection of size 2, uniform crossover,
// per-gene Gaussian mutation clipped at zero. All random draws happen on one
// seeded stream before a generation is evaluated, so the thread count used
// for fitness evaluation never changes the outcome.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcfgcm/estimation.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/parallel.hpp"

namespace pcfgcm {

/// mt19937_64 with hand-rolled distributions; the standard library's
/// distributions are implementation-defined, which would break cross-platform
/// reproducibility of training runs.
class Random {
 public:
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // (0, 1]
  double uniform_positive() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() {
    // Box-Muller, one variate per call.
    const double u1 = uniform_positive();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent seed for sub-task `index` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x5851F42D4C957F2Dull));
}

struct LearnerConfig {
  int population_size = 100;
  int generations = 500;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;   // per gene
  double mutation_sigma = 0.1;   // raw-weight space
  int elitism = 2;
  std::uint64_t seed = 1;
  EstimatorKind estimator = EstimatorKind::ml;
  int early_stop_patience = 100;  // 0 disables early stopping
  int checkpoint_interval = 0;    // 0: no intermediate checkpoints
  int threads = 1;

  void validate() const {
    if (population_size < 2) throw std::invalid_argument("population_size must be >= 2");
    if (generations < 0) throw std::invalid_argument("generations must be >= 0");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0))
      throw std::invalid_argument("crossover_rate must be in [0,1]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
      throw std::invalid_argument("mutation_rate must be in [0,1]");
    if (!(mutation_sigma >= 0.0)) throw std::invalid_argument("mutation_sigma must be >= 0");
    if (elitism < 0 || elitism >= population_size)
      throw std::invalid_argument("elitism must be in [0, population_size)");
    if (early_stop_patience < 0) throw std::invalid_argument("early_stop_patience must be >= 0");
    if (checkpoint_interval < 0) throw std::invalid_argument("checkpoint_interval must be >= 0");
  }
};

/// Overrides `base` with "key = value" lines; '#' starts a comment.
/// Keys are the LearnerConfig field names.
inline LearnerConfig read_learner_config(std::istream& in, LearnerConfig base = {}) {
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    const auto eq = raw.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(raw).empty()) continue;
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + what);
    };
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(raw.substr(0, eq));
    const std::string value = trim(raw.substr(eq + 1));
    auto as_int = [&] {
      std::size_t used = 0;
      int v = 0;
      try { v = std::stoi(value, &used); } catch (const std::exception&) { used = 0; }
      if (used != value.size() || value.empty()) fail("'" + key + "' needs an integer");
      return v;
    };
    auto as_double = [&] {
      std::size_t used = 0;
      double v = 0;
      try { v = std::stod(value, &used); } catch (const std::exception&) { used = 0; }
      if (used != value.size() || value.empty()) fail("'" + key + "' needs a number");
      return v;
    };
    if (key == "population_size") base.population_size = as_int();
    else if (key == "generations") base.generations = as_int();
    else if (key == "crossover_rate") base.crossover_rate = as_double();
    else if (key == "mutation_rate") base.mutation_rate = as_double();
    else if (key == "mutation_sigma") base.mutation_sigma = as_double();
    else if (key == "elitism") base.elitism = as_int();
    else if (key == "seed") {
      std::size_t used = 0;
      try { base.seed = std::stoull(value, &used); } catch (const std::exception&) { used = 0; }
      if (used != value.size() || value.empty() || value[0] == '-') fail("'seed' needs a non-negative integer");
    } else if (key == "estimator") {
      try { base.estimator = parse_estimator(value); } catch (const std::exception& e) { fail(e.what()); }
    } else if (key == "early_stop_patience") base.early_stop_patience = as_int();
    else if (key == "checkpoint_interval") base.checkpoint_interval = as_int();
    else if (key == "threads") base.threads = as_int();
    else fail("unknown key '" + key + "'");
  }
  return base;
}

struct Individual {
  std::vector<double> raw_weights;
  double fitness = kNegInf;
  bool evaluated = false;
};

using Population = std::vector<Individual>;
using FitnessFunction = std::function<double(const Grammar&)>;

struct TraceRow {
  int generation;
  double best;
  double mean;    // over individuals with finite fitness
  double median;  // likewise
};

struct Checkpoint {
  int generation;
  Grammar grammar;
  double fitness;
};

struct TrainingResult {
  Grammar grammar;
  double fitness = kNegInf;
  std::vector<TraceRow> trace;
  std::vector<Checkpoint> checkpoints;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Rule indices grouped by left-hand side.
inline std::vector<std::vector<int>> lhs_groups(const Grammar& g) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(g.num_nonterminals()));
  for (std::size_t k = 0; k < g.rules().size(); ++k)
    groups[static_cast<std::size_t>(g.rules()[k].lhs)].push_back(static_cast<int>(k));
  return groups;
}

inline bool better(const Individual& a, const Individual& b) { return a.fitness > b.fitness; }

inline double sanitize(double f) { return std::isnan(f) ? kNegInf : f; }

}  // namespace detail

/// Fitness of every unevaluated individual, computed in parallel.
inline void evaluate_population(Population& pop, const Grammar& base, const FitnessFunction& fitness,
                                int threads) {
  parallel_for(pop.size(), threads, [&](std::size_t i) {
    Individual& ind = pop[i];
    if (ind.evaluated) return;
    try {
      ind.fitness = detail::sanitize(fitness(normalize(ind.raw_weights, base)));
    } catch (const EstimationError&) {
      ind.fitness = kNegInf;
    }
    ind.evaluated = true;
  });
}

inline Population random_population(const Grammar& base, int size, Random& rng) {
  Population pop(static_cast<std::size_t>(size));
  for (auto& ind : pop) {
    ind.raw_weights.resize(base.rules().size());
    for (auto& w : ind.raw_weights) w = rng.uniform_positive();
  }
  return pop;
}

/// One generation: the `elitism` best individuals are copied unchanged; the
/// rest are bred by tournament-2 selection, uniform crossover and clipped
/// Gaussian mutation. Offspring come back unevaluated.
inline Population evolve_step(const Population& pop, const LearnerConfig& config, const Grammar& base,
                              Random& rng) {
  const auto groups = detail::lhs_groups(base);
  const std::size_t n = pop.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detail::better(pop[a], pop[b]); });

  Population next;
  next.reserve(n);
  for (int e = 0; e < config.elitism && static_cast<std::size_t>(e) < n; ++e)
    next.push_back(pop[order[static_cast<std::size_t>(e)]]);

  auto tournament = [&]() -> const Individual& {
    const Individual& a = pop[rng.below(n)];
    const Individual& b = pop[rng.below(n)];
    return detail::better(b, a) ? b : a;
  };

  while (next.size() < n) {
    const Individual& mother = tournament();
    const Individual& father = tournament();
    Individual child;
    child.raw_weights = mother.raw_weights;
    if (rng.bernoulli(config.crossover_rate))
      for (std::size_t k = 0; k < child.raw_weights.size(); ++k)
        if (rng.bernoulli(0.5)) child.raw_weights[k] = father.raw_weights[k];

    const std::vector<double> before = child.raw_weights;
    auto mutate = [&](int k) {
      auto& w = child.raw_weights[static_cast<std::size_t>(k)];
      if (rng.bernoulli(config.mutation_rate))
        w = std::max(0.0, w + config.mutation_sigma * rng.normal());
    };
    for (std::size_t k = 0; k < child.raw_weights.size(); ++k) mutate(static_cast<int>(k));

    for (const auto& group : groups) {
      auto total = [&] {
        double s = 0.0;
        for (int k : group) s += child.raw_weights[static_cast<std::size_t>(k)];
        return s;
      };
      // A group clipped to all zeros is mutated again from its pre-mutation
      // values; after a few failures it falls back to the mother's genes.
      for (int attempt = 0; attempt < 8 && !group.empty() && total() <= 0.0; ++attempt) {
        for (int k : group) child.raw_weights[static_cast<std::size_t>(k)] = before[static_cast<std::size_t>(k)];
        for (int k : group) mutate(k);
      }
      if (!group.empty() && total() <= 0.0)
        for (int k : group)
          child.raw_weights[static_cast<std::size_t>(k)] = mother.raw_weights[static_cast<std::size_t>(k)];
    }
    next.push_back(std::move(child));
  }
  return next;
}

inline TraceRow summarize(int generation, const Population& pop) {
  std::vector<double> finite;
  double best = kNegInf;
  for (const auto& ind : pop) {
    best = std::max(best, ind.fitness);
    if (std::isfinite(ind.fitness)) finite.push_back(ind.fitness);
  }
  TraceRow row{generation, best, kNegInf, kNegInf};
  if (!finite.empty()) {
    double sum = 0.0;
    for (double f : finite) sum += f;
    row.mean = sum / static_cast<double>(finite.size());
    std::sort(finite.begin(), finite.end());
    const std::size_t m = finite.size();
    row.median = m % 2 ? finite[m / 2] : 0.5 * (finite[m / 2 - 1] + finite[m / 2]);
  }
  return row;
}

/// Runs the GA from a random initial population and returns the best grammar
/// seen. Deterministic for a fixed (base, fitness, config).
inline TrainingResult train(const Grammar& base, const FitnessFunction& fitness,
                            const LearnerConfig& config) {
  config.validate();
  Random rng(config.seed);
  Population pop = random_population(base, config.population_size, rng);
  evaluate_population(pop, base, fitness, config.threads);

  TrainingResult result;
  auto best_of = [](const Population& p) {
    return std::max_element(p.begin(), p.end(), [](const Individual& a, const Individual& b) {
      return detail::better(b, a);
    });
  };
  auto top = best_of(pop);
  if (!std::isfinite(top->fitness)) {
    std::ostringstream msg;
    msg << "infeasible start: all " << pop.size()
        << " initial individuals have zero probability under the "
        << to_string(config.estimator) << " objective (does the grammar have contact rules"
        << " and are all sequences over its alphabet?)";
    throw TrainingError(msg.str());
  }
  std::vector<double> best_weights = top->raw_weights;
  result.fitness = top->fitness;
  result.trace.push_back(summarize(0, pop));
  int last_improvement = 0;

  for (int gen = 1; gen <= config.generations; ++gen) {
    pop = evolve_step(pop, config, base, rng);
    evaluate_population(pop, base, fitness, config.threads);
    result.trace.push_back(summarize(gen, pop));
    top = best_of(pop);
    if (top->fitness > result.fitness) {
      result.fitness = top->fitness;
      best_weights = top->raw_weights;
      last_improvement = gen;
    }
    if (config.checkpoint_interval > 0 && gen % config.checkpoint_interval == 0)
      result.checkpoints.push_back({gen, normalize(best_weights, base), result.fitness});
    if (config.early_stop_patience > 0 && gen - last_improvement >= config.early_stop_patience)
      break;
  }
  result.grammar = normalize(best_weights, base);
  const int last_gen = result.trace.back().generation;
  if (result.checkpoints.empty() || result.checkpoints.back().generation != last_gen)
    result.checkpoints.push_back({last_gen, result.grammar, result.fitness});
  return result;
}

/// GA on one of the built-in objectives.
inline TrainingResult train(const TrainingSample& sample, const Grammar& base,
                            const LearnerConfig& config) {
  if (sample.items.empty()) throw TrainingError("training sample has no positive sequences");
  if (config.estimator == EstimatorKind::ce_m && !sample.shared_map)
    throw TrainingError("CE(m) training requires a shared contact map");
  return train(
      base,
      [&](const Grammar& g) { return evaluate_objective(config.estimator, sample, g).value; },
      config);
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "generation,best,mean,median\n";
  for (const auto& row : trace)
    out << row.generation << ',' << detail::format_double(row.best) << ','
        << detail::format_double(row.mean) << ',' << detail::format_double(row.median) << '\n';
}

}  // namespace pcfgcm
