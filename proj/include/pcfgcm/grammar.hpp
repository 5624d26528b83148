#pragma once

// Grammar instance with three rule kinds over a partitioned non-terminal set:
//
//   lexical    T -> a        T in V_T, a in the alphabet
//   branching  N -> X Y      N in V_N, X, Y in V_T u V_N
//   contact    N -> T M U    N, M in V_N, T, U in V_T
//
// Non-terminals share one id space: V_T occupies [0, |V_T|), V_N follows.
// Probabilities are stored in linear space.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace pcfgcm {

inline constexpr double kPropernessTolerance = 1e-9;

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GrammarParseError : public GrammarError {
 public:
  GrammarParseError(int line, const std::string& what)
      : GrammarError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class SymbolError : public std::runtime_error {
 public:
  SymbolError(std::size_t position, char symbol)
      : std::runtime_error("symbol '" + std::string(1, symbol) + "' at position " +
                           std::to_string(position + 1) + " is not in the alphabet"),
        position_(position) {}
  // 0-based offset of the offending symbol.
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

using Sequence = std::vector<int>;

class Alphabet {
 public:
  Alphabet() { index_.fill(-1); }

  explicit Alphabet(std::string symbols) : symbols_(std::move(symbols)) {
    index_.fill(-1);
    if (symbols_.empty()) throw GrammarError("alphabet must not be empty");
    for (std::size_t k = 0; k < symbols_.size(); ++k) {
      const auto c = static_cast<unsigned char>(symbols_[k]);
      if (std::isspace(c) || c == '#') throw GrammarError("invalid alphabet symbol");
      if (index_[c] != -1)
        throw GrammarError("duplicate alphabet symbol '" + std::string(1, symbols_[k]) + "'");
      index_[c] = static_cast<int>(k);
    }
  }

  static Alphabet protein() { return Alphabet("ACDEFGHIKLMNPQRSTVWY"); }

  std::size_t size() const noexcept { return symbols_.size(); }
  bool empty() const noexcept { return symbols_.empty(); }
  char symbol(int index) const { return symbols_.at(static_cast<std::size_t>(index)); }
  const std::string& symbols() const noexcept { return symbols_; }

  std::optional<int> index_of(char c) const noexcept {
    const int k = index_[static_cast<unsigned char>(c)];
    if (k < 0) return std::nullopt;
    return k;
  }

  Sequence encode(std::string_view text) const {
    Sequence out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto k = index_of(text[i]);
      if (!k) throw SymbolError(i, text[i]);
      out.push_back(*k);
    }
    return out;
  }

  std::string decode(std::span<const int> seq) const {
    std::string out;
    out.reserve(seq.size());
    for (int k : seq) out.push_back(symbol(k));
    return out;
  }

  friend bool operator==(const Alphabet& a, const Alphabet& b) { return a.symbols_ == b.symbols_; }

 private:
  std::string symbols_;
  std::array<int, 256> index_{};
};

enum class RuleKind : std::uint8_t { lexical, branching, contact };

inline std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::lexical: return "lexical";
    case RuleKind::branching: return "branching";
    case RuleKind::contact: return "contact";
  }
  return "?";
}

inline int arity(RuleKind kind) {
  switch (kind) {
    case RuleKind::lexical: return 1;
    case RuleKind::branching: return 2;
    case RuleKind::contact: return 3;
  }
  return 0;
}

struct Rule {
  RuleKind kind = RuleKind::lexical;
  int lhs = 0;
  // Lexical: rhs[0] is an alphabet index. Otherwise non-terminal ids.
  // Unused slots hold -1.
  std::array<int, 3> rhs{-1, -1, -1};
  double prob = 0.0;

  int arity() const { return pcfgcm::arity(kind); }

  friend bool operator==(const Rule&, const Rule&) = default;
};

class Grammar {
 public:
  Grammar() = default;

  Grammar(Alphabet alphabet, std::vector<std::string> vt, std::vector<std::string> vn, int start,
          std::vector<Rule> rules)
      : alphabet_(std::move(alphabet)),
        vt_(std::move(vt)),
        vn_(std::move(vn)),
        start_(start),
        rules_(std::move(rules)) {
    validate_structure();
    index_rules();
  }

  const Alphabet& alphabet() const noexcept { return alphabet_; }
  const std::vector<std::string>& vt() const noexcept { return vt_; }
  const std::vector<std::string>& vn() const noexcept { return vn_; }
  int start() const noexcept { return start_; }
  const std::vector<Rule>& rules() const noexcept { return rules_; }
  const Rule& rule(int index) const { return rules_.at(static_cast<std::size_t>(index)); }

  int num_lexical_nonterminals() const noexcept { return static_cast<int>(vt_.size()); }
  int num_nonterminals() const noexcept { return static_cast<int>(vt_.size() + vn_.size()); }
  bool is_lexical_nonterminal(int id) const noexcept {
    return id >= 0 && id < num_lexical_nonterminals();
  }
  bool is_structural_nonterminal(int id) const noexcept {
    return id >= num_lexical_nonterminals() && id < num_nonterminals();
  }

  const std::string& name_of(int id) const {
    if (is_lexical_nonterminal(id)) return vt_[static_cast<std::size_t>(id)];
    if (is_structural_nonterminal(id))
      return vn_[static_cast<std::size_t>(id - num_lexical_nonterminals())];
    throw GrammarError("non-terminal id out of range: " + std::to_string(id));
  }

  std::optional<int> id_of(std::string_view name) const {
    for (int id = 0; id < num_nonterminals(); ++id)
      if (name_of(id) == name) return id;
    return std::nullopt;
  }

  // Rule indices grouped by kind, in declaration order.
  const std::vector<int>& rules_of(RuleKind kind) const {
    return by_kind_[static_cast<std::size_t>(kind)];
  }
  bool has_contact_rules() const noexcept { return !rules_of(RuleKind::contact).empty(); }

  std::optional<int> find_rule(RuleKind kind, int lhs, std::array<int, 3> rhs) const {
    for (int idx : rules_of(kind)) {
      const Rule& r = rules_[static_cast<std::size_t>(idx)];
      if (r.lhs == lhs && r.rhs == rhs) return idx;
    }
    return std::nullopt;
  }

  std::vector<double> probabilities() const {
    std::vector<double> out(rules_.size());
    std::transform(rules_.begin(), rules_.end(), out.begin(), [](const Rule& r) { return r.prob; });
    return out;
  }

  Grammar with_probabilities(std::span<const double> probs) const {
    if (probs.size() != rules_.size()) throw GrammarError("probability vector size mismatch");
    Grammar g = *this;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (!(probs[k] >= 0.0 && probs[k] <= 1.0))
        throw GrammarError("rule probability outside [0,1]");
      g.rules_[k].prob = probs[k];
    }
    return g;
  }

  // Sum of rule probabilities per non-terminal.
  std::vector<double> lhs_sums() const {
    std::vector<double> sums(static_cast<std::size_t>(num_nonterminals()), 0.0);
    for (const Rule& r : rules_) sums[static_cast<std::size_t>(r.lhs)] += r.prob;
    return sums;
  }

  double properness_error() const {
    double worst = 0.0;
    for (double s : lhs_sums()) worst = std::max(worst, std::abs(s - 1.0));
    return worst;
  }

  bool is_proper(double tolerance = kPropernessTolerance) const {
    return properness_error() <= tolerance;
  }

  void require_proper(double tolerance = kPropernessTolerance) const {
    const auto sums = lhs_sums();
    for (int id = 0; id < num_nonterminals(); ++id) {
      const double s = sums[static_cast<std::size_t>(id)];
      if (std::abs(s - 1.0) > tolerance) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "improper grammar: rules of " << name_of(id) << " sum to " << s;
        throw GrammarError(msg.str());
      }
    }
  }

  friend bool operator==(const Grammar& a, const Grammar& b) {
    return a.alphabet_ == b.alphabet_ && a.vt_ == b.vt_ && a.vn_ == b.vn_ &&
           a.start_ == b.start_ && a.rules_ == b.rules_;
  }

 private:
  void validate_structure() const {
    if (alphabet_.empty()) throw GrammarError("grammar needs a non-empty alphabet");
    if (vt_.empty()) throw GrammarError("grammar needs at least one lexical non-terminal");
    if (vn_.empty()) throw GrammarError("grammar needs at least one non-lexical non-terminal");
    {
      std::vector<std::string> names(vt_);
      names.insert(names.end(), vn_.begin(), vn_.end());
      std::sort(names.begin(), names.end());
      if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw GrammarError("duplicate non-terminal name");
      for (const auto& n : names)
        if (n.empty() || n.find_first_of(" \t\r\n#:") != std::string::npos || n == "->")
          throw GrammarError("invalid non-terminal name '" + n + "'");
    }
    if (!is_structural_nonterminal(start_))
      throw GrammarError("start symbol must be a non-lexical non-terminal");

    const int n_sym = static_cast<int>(alphabet_.size());
    for (const Rule& r : rules_) {
      if (!(r.prob >= 0.0 && r.prob <= 1.0))
        throw GrammarError("rule probability outside [0,1]");
      switch (r.kind) {
        case RuleKind::lexical:
          if (!is_lexical_nonterminal(r.lhs) || r.rhs[0] < 0 || r.rhs[0] >= n_sym ||
              r.rhs[1] != -1 || r.rhs[2] != -1)
            throw GrammarError("malformed lexical rule");
          break;
        case RuleKind::branching:
          if (!is_structural_nonterminal(r.lhs) || r.rhs[0] < 0 ||
              r.rhs[0] >= num_nonterminals() || r.rhs[1] < 0 ||
              r.rhs[1] >= num_nonterminals() || r.rhs[2] != -1)
            throw GrammarError("malformed branching rule");
          break;
        case RuleKind::contact:
          if (!is_structural_nonterminal(r.lhs) || !is_lexical_nonterminal(r.rhs[0]) ||
              !is_structural_nonterminal(r.rhs[1]) || !is_lexical_nonterminal(r.rhs[2]))
            throw GrammarError("malformed contact rule");
          break;
      }
    }
    std::vector<std::tuple<RuleKind, int, std::array<int, 3>>> keys;
    keys.reserve(rules_.size());
    for (const Rule& r : rules_) keys.emplace_back(r.kind, r.lhs, r.rhs);
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
      throw GrammarError("duplicate rule");
  }

  void index_rules() {
    for (auto& v : by_kind_) v.clear();
    for (std::size_t k = 0; k < rules_.size(); ++k)
      by_kind_[static_cast<std::size_t>(rules_[k].kind)].push_back(static_cast<int>(k));
  }

  Alphabet alphabet_;
  std::vector<std::string> vt_;
  std::vector<std::string> vn_;
  int start_ = 0;
  std::vector<Rule> rules_;
  std::array<std::vector<int>, 3> by_kind_;
};

/// Every rule permitted by the kind constraints, uniform probabilities per
/// left-hand side. Lexical non-terminals are named l1.., the others v0..
/// with v0 as start symbol.
inline Grammar build_full_grammar(const Alphabet& alphabet, int n_vt, int n_vn,
                                  bool with_contact_rules) {
  if (n_vt < 1 || n_vn < 1) throw GrammarError("non-terminal counts must be positive");
  std::vector<std::string> vt, vn;
  for (int k = 0; k < n_vt; ++k) vt.push_back("l" + std::to_string(k + 1));
  for (int k = 0; k < n_vn; ++k) vn.push_back("v" + std::to_string(k));
  const int n_all = n_vt + n_vn;
  const int n_sym = static_cast<int>(alphabet.size());

  std::vector<Rule> rules;
  for (int t = 0; t < n_vt; ++t)
    for (int a = 0; a < n_sym; ++a)
      rules.push_back({RuleKind::lexical, t, {a, -1, -1}, 1.0 / n_sym});

  const double per_lhs = static_cast<double>(n_all) * n_all +
                         (with_contact_rules ? static_cast<double>(n_vt) * n_vt * n_vn : 0.0);
  for (int v = n_vt; v < n_all; ++v) {
    for (int x = 0; x < n_all; ++x)
      for (int y = 0; y < n_all; ++y)
        rules.push_back({RuleKind::branching, v, {x, y, -1}, 1.0 / per_lhs});
    if (with_contact_rules)
      for (int t = 0; t < n_vt; ++t)
        for (int m = n_vt; m < n_all; ++m)
          for (int u = 0; u < n_vt; ++u)
            rules.push_back({RuleKind::contact, v, {t, m, u}, 1.0 / per_lhs});
  }
  return Grammar(alphabet, std::move(vt), std::move(vn), n_vt, std::move(rules));
}

/// Grammar with probabilities proportional to `raw_weights`, normalized within
/// each left-hand side group.
inline Grammar normalize(std::span<const double> raw_weights, const Grammar& grammar) {
  const auto& rules = grammar.rules();
  if (raw_weights.size() != rules.size()) throw GrammarError("weight vector size mismatch");
  std::vector<double> totals(static_cast<std::size_t>(grammar.num_nonterminals()), 0.0);
  for (std::size_t k = 0; k < rules.size(); ++k) {
    if (!(raw_weights[k] >= 0.0) || !std::isfinite(raw_weights[k]))
      throw GrammarError("raw weights must be finite and non-negative");
    totals[static_cast<std::size_t>(rules[k].lhs)] += raw_weights[k];
  }
  std::vector<double> probs(rules.size());
  for (std::size_t k = 0; k < rules.size(); ++k) {
    const double total = totals[static_cast<std::size_t>(rules[k].lhs)];
    if (total <= 0.0)
      throw GrammarError("all raw weights are zero for " + grammar.name_of(rules[k].lhs));
    probs[k] = raw_weights[k] / total;
  }
  return grammar.with_probabilities(probs);
}

// ---------------------------------------------------------------------------
// Text format
//
//   alphabet: A C D ...
//   vt: l1 l2
//   vn: v0 v1
//   start: v0
//   lexical l1 -> A : 0.25
//   branching v0 -> v1 l2 : 0.1
//   contact v0 -> l1 v1 l2 : 0.05

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  if (hash != std::string_view::npos) line = line.substr(0, hash);
  return line;
}

}  // namespace detail

inline void write_grammar(std::ostream& out, const Grammar& g) {
  out << "alphabet:";
  for (char c : g.alphabet().symbols()) out << ' ' << c;
  out << "\nvt:";
  for (const auto& n : g.vt()) out << ' ' << n;
  out << "\nvn:";
  for (const auto& n : g.vn()) out << ' ' << n;
  out << "\nstart: " << g.name_of(g.start()) << '\n';
  for (const Rule& r : g.rules()) {
    out << to_string(r.kind) << ' ' << g.name_of(r.lhs) << " ->";
    if (r.kind == RuleKind::lexical) {
      out << ' ' << g.alphabet().symbol(r.rhs[0]);
    } else {
      for (int k = 0; k < r.arity(); ++k) out << ' ' << g.name_of(r.rhs[static_cast<std::size_t>(k)]);
    }
    out << " : " << detail::format_double(r.prob) << '\n';
  }
}

inline std::string to_text(const Grammar& g) {
  std::ostringstream out;
  write_grammar(out, g);
  return out.str();
}

inline Grammar read_grammar(std::istream& in, double tolerance = kPropernessTolerance) {
  std::optional<Alphabet> alphabet;
  std::optional<std::vector<std::string>> vt, vn;
  std::optional<std::string> start_name;
  struct PendingRule {
    int line;
    RuleKind kind;
    std::vector<std::string> tokens;  // lhs, rhs...
    double prob;
  };
  std::vector<PendingRule> pending;

  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::strip_comment(raw);
    auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    const std::string& head = tokens.front();
    if (head.back() == ':') {
      const std::string key = head.substr(0, head.size() - 1);
      std::vector<std::string> values(tokens.begin() + 1, tokens.end());
      if (key == "alphabet") {
        std::string symbols;
        for (const auto& v : values) {
          if (v.size() != 1) throw GrammarParseError(line_no, "alphabet symbols must be single characters");
          symbols += v;
        }
        try {
          alphabet = Alphabet(symbols);
        } catch (const GrammarError& e) {
          throw GrammarParseError(line_no, e.what());
        }
      } else if (key == "vt") {
        vt = values;
      } else if (key == "vn") {
        vn = values;
      } else if (key == "start") {
        if (values.size() != 1) throw GrammarParseError(line_no, "start expects one name");
        start_name = values.front();
      } else {
        throw GrammarParseError(line_no, "unknown header '" + key + "'");
      }
      continue;
    }

    RuleKind kind;
    if (head == "lexical") kind = RuleKind::lexical;
    else if (head == "branching") kind = RuleKind::branching;
    else if (head == "contact") kind = RuleKind::contact;
    else throw GrammarParseError(line_no, "unknown rule kind '" + head + "'");

    // kind lhs -> rhs... : prob
    const std::size_t n_rhs = static_cast<std::size_t>(arity(kind));
    if (tokens.size() != 3 + n_rhs + 2 || tokens[2] != "->" || tokens[3 + n_rhs] != ":")
      throw GrammarParseError(line_no, "expected '" + head + " LHS -> " +
                                           std::to_string(n_rhs) + " symbol(s) : PROB'");
    double prob = 0.0;
    const std::string& p = tokens.back();
    auto res = std::from_chars(p.data(), p.data() + p.size(), prob);
    if (res.ec != std::errc() || res.ptr != p.data() + p.size())
      throw GrammarParseError(line_no, "bad probability '" + p + "'");
    std::vector<std::string> syms{tokens[1]};
    syms.insert(syms.end(), tokens.begin() + 3, tokens.begin() + 3 + static_cast<long>(n_rhs));
    pending.push_back({line_no, kind, std::move(syms), prob});
  }

  if (!alphabet) throw GrammarParseError(line_no, "missing 'alphabet:' header");
  if (!vt) throw GrammarParseError(line_no, "missing 'vt:' header");
  if (!vn) throw GrammarParseError(line_no, "missing 'vn:' header");
  if (!start_name) throw GrammarParseError(line_no, "missing 'start:' header");

  std::unordered_map<std::string, int> ids;
  for (std::size_t k = 0; k < vt->size(); ++k) ids.emplace((*vt)[k], static_cast<int>(k));
  for (std::size_t k = 0; k < vn->size(); ++k)
    ids.emplace((*vn)[k], static_cast<int>(vt->size() + k));
  auto lookup = [&](const std::string& name, int line) {
    auto it = ids.find(name);
    if (it == ids.end()) throw GrammarParseError(line, "undeclared non-terminal '" + name + "'");
    return it->second;
  };

  std::vector<Rule> rules;
  rules.reserve(pending.size());
  for (const auto& pr : pending) {
    Rule r;
    r.kind = pr.kind;
    r.prob = pr.prob;
    r.lhs = lookup(pr.tokens[0], pr.line);
    if (pr.kind == RuleKind::lexical) {
      const auto& s = pr.tokens[1];
      std::optional<int> k;
      if (s.size() == 1) k = alphabet->index_of(s[0]);
      if (!k) throw GrammarParseError(pr.line, "terminal '" + s + "' not in alphabet");
      r.rhs[0] = *k;
    } else {
      for (std::size_t k = 1; k < pr.tokens.size(); ++k) r.rhs[k - 1] = lookup(pr.tokens[k], pr.line);
    }
    rules.push_back(r);
  }
  const int start = lookup(*start_name, line_no);

  Grammar g;
  try {
    g = Grammar(*alphabet, *vt, *vn, start, std::move(rules));
  } catch (const GrammarParseError&) {
    throw;
  } catch (const GrammarError& e) {
    throw GrammarParseError(line_no, e.what());
  }
  g.require_proper(tolerance);
  return g;
}

inline Grammar from_text(std::string_view text, double tolerance = kPropernessTolerance) {
  std::istringstream in{std::string(text)};
  return read_grammar(in, tolerance);
}

inline Grammar load_grammar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grammar file " + path);
  return read_grammar(in);
}

inline void save_grammar(const std::string& path, const Grammar& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write grammar file " + path);
  write_grammar(out, g);
}

}  // namespace pcfgcm
