// pcfgcm: train, score, parse and evaluate contact-constrained PCFGs.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/dataio.hpp"
#include "pcfgcm/estimation.hpp"
#include "pcfgcm/evaluation.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/learner.hpp"
#include "pcfgcm/parallel.hpp"
#include "pcfgcm/parser.hpp"

namespace fs = std::filesystem;
using namespace pcfgcm;

namespace {

constexpr const char* kNullModelEnv = "PCFGCM_NULL_MODEL";

// Bad combinations of otherwise well-formed flags; exits 2 like a parse error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to a file, or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path == "-") return;
    if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    file_.open(path);
    if (!file_) throw std::runtime_error("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

struct LearnerFlags {
  std::string config;
  std::string estimator;
  std::optional<std::uint64_t> seed;
  std::optional<int> population, generations, elitism, patience, checkpoint_every;
  std::optional<double> crossover, mutation, sigma;

  void add(CLI::App* app) {
    app->add_option("--estimator", estimator, "Objective: ml, ce-m or ce-x")
        ->check(CLI::IsMember({"ml", "ce-m", "ce-x"}));
    app->add_option("--config", config, "Learner config file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--population", population, "Population size");
    app->add_option("--generations", generations, "Maximum generations");
    app->add_option("--crossover-rate", crossover, "Crossover probability");
    app->add_option("--mutation-rate", mutation, "Per-gene mutation probability");
    app->add_option("--mutation-sigma", sigma, "Mutation standard deviation");
    app->add_option("--elitism", elitism, "Individuals copied unchanged each generation");
    app->add_option("--patience", patience, "Stop after this many generations without improvement (0: never)");
    app->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in generations (0: final only)");
  }

  // Defaults, then the config file, then explicit flags.
  LearnerConfig resolve(int threads) const {
    LearnerConfig c;
    if (!config.empty()) {
      std::ifstream in(config);
      try {
        c = read_learner_config(in, c);
      } catch (const std::invalid_argument& e) {
        throw UsageError(config + ": " + e.what());
      }
    }
    if (!estimator.empty()) c.estimator = parse_estimator(estimator);
    if (seed) c.seed = *seed;
    if (population) c.population_size = *population;
    if (generations) c.generations = *generations;
    if (crossover) c.crossover_rate = *crossover;
    if (mutation) c.mutation_rate = *mutation;
    if (sigma) c.mutation_sigma = *sigma;
    if (elitism) c.elitism = *elitism;
    if (patience) c.early_stop_patience = *patience;
    if (checkpoint_every) c.checkpoint_interval = *checkpoint_every;
    c.threads = threads;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

NullModel null_model_for(const std::string& flag, const Alphabet& alphabet) {
  if (!flag.empty()) return NullModel::load(flag, alphabet);
  if (const char* env = std::getenv(kNullModelEnv); env && *env) return NullModel::load(env, alphabet);
  return NullModel::default_for(alphabet);
}

std::optional<ContactMap> optional_map(const std::string& path) {
  if (path.empty()) return std::nullopt;
  ContactMap m = load_contacts(path);
  require_valid(m);
  return m;
}

void check_length(const SequenceRecord& r, const ContactMap& map) {
  if (static_cast<int>(r.residues.size()) != map.length())
    throw std::runtime_error("sequence '" + r.id + "' has length " + std::to_string(r.residues.size()) +
                             " but the contact map has length " + std::to_string(map.length()));
}

void write_file(const fs::path& path, const std::string& text) {
  Output out(path.string());
  out.stream() << text;
}

// ---------------------------------------------------------------------------

struct InitGrammarCmd {
  std::string alphabet = "protein";
  int vt = 3, vn = 4;
  bool no_contact = false;
  std::string out = "-";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("init-grammar", "Write the full base grammar for given non-terminal counts");
    c->add_option("--alphabet", alphabet, "'protein' or the literal symbols, e.g. 'ab'");
    c->add_option("--vt", vt, "Number of lexical non-terminals")->check(CLI::PositiveNumber);
    c->add_option("--vn", vn, "Number of structural non-terminals")->check(CLI::PositiveNumber);
    c->add_flag("--no-contact", no_contact, "Omit contact rules");
    c->add_option("--out", out, "Output grammar file ('-' for stdout)");
    c->callback([this] { run(); });
  }

  void run() const {
    Output o(out);
    write_grammar(o.stream(), build_full_grammar(alphabet_from_name(alphabet), vt, vn, !no_contact));
  }
};

struct TrainCmd {
  std::string manifest, grammar, out;
  bool no_maps = false;
  LearnerFlags learner;
  int& threads;

  explicit TrainCmd(int& t) : threads(t) {}

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Estimate rule probabilities with the genetic algorithm");
    c->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    c->add_option("--grammar", grammar, "Base grammar (rule set to estimate)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output directory")->required();
    c->add_flag("--no-maps", no_maps, "Train with empty contact maps");
    learner.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const LearnerConfig cfg = learner.resolve(threads);
    const Dataset d = load_dataset(manifest);
    const Grammar base = load_grammar(grammar);
    if (base.alphabet() != d.alphabet)
      throw std::runtime_error("grammar alphabet '" + base.alphabet().symbols() +
                               "' differs from dataset alphabet '" + d.alphabet.symbols() + "'");
    if (cfg.estimator == EstimatorKind::ce_m && (!d.shared_map || no_maps))
      throw UsageError("estimator ce-m needs a shared contact map (manifest 'contacts' entry, without --no-maps)");
    const TrainingResult r = train(training_sample(d, !no_maps), base, cfg);

    const fs::path dir(out);
    fs::create_directories(dir);
    write_file(dir / "grammar.txt", to_text(r.grammar));
    std::ostringstream trace;
    write_trace_csv(trace, r.trace);
    write_file(dir / "trace.csv", trace.str());
    if (cfg.checkpoint_interval > 0) {
      fs::create_directories(dir / "checkpoints");
      for (const auto& cp : r.checkpoints) {
        std::ostringstream name;
        name << "gen-" << std::setw(6) << std::setfill('0') << cp.generation << ".txt";
        write_file(dir / "checkpoints" / name.str(), to_text(cp.grammar));
      }
    }
    std::cerr << "best objective " << detail::format_double(r.fitness) << " after "
              << r.trace.back().generation << " generations\n";
  }
};

struct ScoreCmd {
  std::string grammar, fasta, contacts, null, out = "-";
  int& threads;

  explicit ScoreCmd(int& t) : threads(t) {}

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("score", "Log-odds of each sequence against the null model");
    c->add_option("--grammar", grammar, "Trained grammar")->required()->check(CLI::ExistingFile);
    c->add_option("--fasta", fasta, "Sequences to score")->required()->check(CLI::ExistingFile);
    c->add_option("--contacts", contacts, "Contact map constraining every parse")->check(CLI::ExistingFile);
    c->add_option("--null", null, std::string("Null model file (default: $") + kNullModelEnv +
                                      ", else built-in composition)");
    c->add_option("--out", out, "Output CSV ('-' for stdout)");
    c->callback([this] { run(); });
  }

  void run() const {
    const Grammar g = load_grammar(grammar);
    const auto recs = read_fasta(fasta, g.alphabet());
    const auto map = optional_map(contacts);
    const NullModel nm = null_model_for(null, g.alphabet());
    if (map)
      for (const auto& r : recs) check_length(r, *map);
    std::vector<double> scores(recs.size());
    parallel_for(recs.size(), threads, [&](std::size_t k) {
      scores[k] = score(g.alphabet().encode(recs[k].residues), map ? &*map : nullptr, g, nm);
    });
    Output o(out);
    o.stream() << "id,log_odds\n";
    for (std::size_t k = 0; k < recs.size(); ++k)
      o.stream() << recs[k].id << ',' << detail::format_double(scores[k]) << '\n';
  }
};

std::vector<ViterbiResult> viterbi_all(const Grammar& g, const std::vector<SequenceRecord>& recs,
                                       const std::optional<ContactMap>& map, int threads) {
  if (map)
    for (const auto& r : recs) check_length(r, *map);
  std::vector<ViterbiResult> out(recs.size());
  parallel_for(recs.size(), threads, [&](std::size_t k) {
    const Sequence x = g.alphabet().encode(recs[k].residues);
    out[k] = map ? viterbi_constrained(x, *map, g) : viterbi(x, g);
  });
  return out;
}

struct ParseCmd {
  std::string grammar, fasta, contacts, out = "-";
  int& threads;

  explicit ParseCmd(int& t) : threads(t) {}

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("parse", "Viterbi parse trees in bracketed form");
    c->add_option("--grammar", grammar, "Trained grammar")->required()->check(CLI::ExistingFile);
    c->add_option("--fasta", fasta, "Sequences to parse")->required()->check(CLI::ExistingFile);
    c->add_option("--contacts", contacts, "Contact map the trees must be consistent with")
        ->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output file ('-' for stdout)");
    c->callback([this] { run(); });
  }

  // Each record yields "# <id> log_probability=<v>" and a tree line; "()"
  // stands for no parse.
  void run() const {
    const Grammar g = load_grammar(grammar);
    const auto recs = read_fasta(fasta, g.alphabet());
    const auto results = viterbi_all(g, recs, optional_map(contacts), threads);
    Output o(out);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const auto& v = results[k];
      o.stream() << "# " << recs[k].id << " log_probability="
                 << detail::format_double(v.found() ? v.log_probability() : kNegInf) << '\n'
                 << (v.found() ? to_bracketed(*v.tree, g) : "()") << '\n';
    }
  }
};

// Reads the output of `parse` back: (id, tree) pairs, nullopt for "()".
std::vector<std::pair<std::string, std::optional<ParseTree>>> read_parse_output(const std::string& path,
                                                                                const Grammar& g) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::pair<std::string, std::optional<ParseTree>>> out;
  std::string line, id;
  int line_no = 0, unnamed = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      ls >> id;
      continue;
    }
    const std::string name = id.empty() ? "tree" + std::to_string(++unnamed) : id;
    id.clear();
    if (line == "()") {
      out.emplace_back(name, std::nullopt);
      continue;
    }
    try {
      out.emplace_back(name, parse_bracketed(line, g));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

struct PredictContactsCmd {
  std::string grammar, fasta, trees, contacts, out = "-";
  int delta = kDefaultDelta;
  int& threads;

  explicit PredictContactsCmd(int& t) : threads(t) {}

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("predict-contacts", "Contacts read off Viterbi trees by leaf distance");
    c->add_option("--grammar", grammar, "Trained grammar")->required()->check(CLI::ExistingFile);
    auto* f = c->add_option("--fasta", fasta, "Sequences to parse")->check(CLI::ExistingFile);
    auto* t = c->add_option("--trees", trees, "Trees written by 'parse' instead of sequences")
                  ->check(CLI::ExistingFile);
    f->excludes(t);
    c->add_option("--contacts", contacts, "Contact map constraining the parse (with --fasta)")
        ->check(CLI::ExistingFile)
        ->needs(f);
    c->add_option("--delta", delta, "Maximum leaf distance")->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Output CSV ('-' for stdout)");
    c->callback([this] { run(); });
  }

  void run() const {
    if (fasta.empty() && trees.empty()) throw UsageError("predict-contacts needs --fasta or --trees");
    const Grammar g = load_grammar(grammar);
    std::vector<std::pair<std::string, std::optional<ParseTree>>> parsed;
    if (!trees.empty()) {
      parsed = read_parse_output(trees, g);
    } else {
      const auto recs = read_fasta(fasta, g.alphabet());
      auto results = viterbi_all(g, recs, optional_map(contacts), threads);
      for (std::size_t k = 0; k < recs.size(); ++k) parsed.emplace_back(recs[k].id, std::move(results[k].tree));
    }
    Output o(out);
    o.stream() << "id,i,j,distance\n";
    for (const auto& [id, tree] : parsed) {
      if (!tree) continue;
      for (const auto& [i, j] : predict_contacts(*tree, delta))
        o.stream() << id << ',' << i << ',' << j << ',' << leaf_distance(*tree, i, j) << '\n';
    }
  }
};

struct EvaluateCmd {
  std::string manifest, grammar, null, out = "-", rpc, rpc_dir;
  int cv = 0;
  bool no_map = false, no_train_maps = false;
  LearnerFlags learner;
  int& threads;

  explicit EvaluateCmd(int& t) : threads(t) {}

  void add(CLI::App& app) {
    auto* c = app.add_subcommand(
        "evaluate", "Average precision and contact recovery; with --cv, k-fold training and evaluation");
    c->add_option("--manifest", manifest, "Dataset manifest with positives and negatives")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--grammar", grammar, "Trained grammar, or the base grammar with --cv")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--null", null, std::string("Null model file (default: $") + kNullModelEnv +
                                      ", else built-in composition)");
    c->add_flag("--no-map", no_map, "Score without the shared contact map");
    c->add_option("--out", out, "JSON report ('-' for stdout)");
    auto* r = c->add_option("--rpc", rpc, "Recall-precision CSV");
    auto* cvo = c->add_option("--cv", cv, "Number of folds for cross-validation")->check(CLI::Range(3, 1000));
    auto* rd = c->add_option("--rpc-dir", rpc_dir, "Directory for per-round recall-precision CSVs")->needs(cvo);
    auto* ntm = c->add_flag("--no-train-maps", no_train_maps, "Train with empty contact maps")->needs(cvo);
    r->excludes(cvo);
    (void)rd;
    (void)ntm;
    learner.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const Dataset d = load_dataset(manifest);
    const Grammar g = load_grammar(grammar);
    if (g.alphabet() != d.alphabet)
      throw std::runtime_error("grammar alphabet '" + g.alphabet().symbols() +
                               "' differs from dataset alphabet '" + d.alphabet.symbols() + "'");
    if (d.negatives.empty()) throw std::runtime_error("evaluation needs negatives in the manifest");
    if (!no_map && !d.shared_map)
      throw UsageError("map-constrained scoring needs a shared contact map; pass --no-map to score without");
    const NullModel nm = null_model_for(null, d.alphabet);
    if (cv > 0)
      run_cv(d, g, nm);
    else
      run_single(d, g, nm);
  }

  void run_cv(const Dataset& d, const Grammar& base, const NullModel& nm) const {
    const LearnerConfig cfg = learner.resolve(threads);
    if (cfg.estimator == EstimatorKind::ce_m && (!d.shared_map || no_train_maps))
      throw UsageError("estimator ce-m needs a shared contact map (without --no-train-maps)");
    CvOptions opt;
    opt.folds = cv;
    opt.train_with_maps = !no_train_maps;
    opt.score_with_map = !no_map;
    opt.null_model = nm;
    const CvReport report = cross_validate(d, base, cfg, opt);
    if (!rpc_dir.empty()) {
      fs::create_directories(rpc_dir);
      for (const auto& round : report.rounds) {
        std::ostringstream s;
        write_rpc_csv(s, round.rpc);
        write_file(fs::path(rpc_dir) / ("round-" + std::to_string(round.round) + ".csv"), s.str());
      }
    }
    Output o(out);
    o.stream() << to_json(report).dump(2) << '\n';
  }

  void run_single(const Dataset& d, const Grammar& g, const NullModel& nm) const {
    const ContactMap* map = no_map ? nullptr : &*d.shared_map;
    std::vector<std::size_t> pos(d.positives.size()), neg(d.negatives.size());
    for (std::size_t k = 0; k < pos.size(); ++k) pos[k] = k;
    for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = k;
    const auto items = detail::score_items(d, pos, neg, g, map, nm, threads);

    std::vector<ParseTree> trees(pos.size());
    parallel_for(pos.size(), threads, [&](std::size_t k) {
      const auto v = viterbi(d.alphabet.encode(d.positives[k].residues), g);
      if (v.found()) trees[k] = *v.tree;
    });
    std::vector<DescriptiveItem> desc;
    for (std::size_t k = 0; k < trees.size(); ++k) {
      const ContactMap* m = d.map_for(d.positives[k].id);
      if (!m || m->empty() || trees[k].empty()) continue;
      const ContactMap* full = d.full_map && d.full_map->length() == m->length() ? &*d.full_map : m;
      desc.push_back({&trees[k], m, full});
    }

    nlohmann::json j;
    j["ap"] = average_precision(items);
    j["positives"] = pos.size();
    j["negatives"] = neg.size();
    j["score_with_map"] = !no_map;
    j["descriptive"] = desc.empty() ? nlohmann::json() : to_json(descriptive_metrics(desc));
    if (!rpc.empty()) {
      std::ostringstream s;
      write_rpc_csv(s, rpc_points(items));
      write_file(rpc, s.str());
    }
    Output o(out);
    o.stream() << j.dump(2) << '\n';
  }
};

struct GenNegativesCmd {
  std::string fasta, alphabet = "protein", out = "-";
  int window = 0, stride = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gen-negatives", "Cut negative windows from long sequences");
    c->add_option("--fasta", fasta, "Long source sequences")->required()->check(CLI::ExistingFile);
    c->add_option("--window", window, "Window length (the motif length)")->required()->check(CLI::PositiveNumber);
    c->add_option("--stride", stride, "Step between windows (default: window, no overlap)")
        ->check(CLI::PositiveNumber);
    c->add_option("--alphabet", alphabet, "'protein' or the literal symbols");
    c->add_option("--out", out, "Output FASTA ('-' for stdout)");
    c->callback([this] { run(); });
  }

  void run() const {
    const auto recs = read_fasta(fasta, alphabet_from_name(alphabet));
    const auto windows = cut_negatives(recs, window, stride > 0 ? stride : window);
    Output o(out);
    write_fasta(o.stream(), windows);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-constrained probabilistic context-free grammars for sequence motifs"};
  app.require_subcommand(1);
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  InitGrammarCmd init_grammar;
  TrainCmd train_cmd(threads);
  ScoreCmd score_cmd(threads);
  ParseCmd parse_cmd(threads);
  PredictContactsCmd predict_cmd(threads);
  EvaluateCmd evaluate_cmd(threads);
  GenNegativesCmd negatives_cmd;
  init_grammar.add(app);
  train_cmd.add(app);
  score_cmd.add(app);
  parse_cmd.add(app);
  predict_cmd.add(app);
  evaluate_cmd.add(app);
  negatives_cmd.add(app);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto parsed = app.get_subcommands();
    std::cerr << '\n' << (parsed.empty() ? app.help() : parsed.front()->help());
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "pcfgcm: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pcfgcm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
