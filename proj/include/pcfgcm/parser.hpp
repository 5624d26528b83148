#pragma once

// Bottom-up chart parser for the lexical/branching/contact grammar form.
//
// Table P holds P(len, start, v), the probability that non-terminal v derives
// x[start, start + len). Under a contact map, the lexical mass at every
// contact position is moved out of P(1, ., .) into a per-pair table C, which
// only a contact rule spanning exactly that pair can consume. Both lexical
// children of a contact rule come from the same C_p or both from P(1, ., .).
//
// The same fill runs in the sum-product semiring (inside probabilities) and
// the max-product semiring (Viterbi, with backpointers).

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
#include "pcfgcm/tree.hpp"

namespace pcfgcm {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-position weights of the lexical non-terminals, plus the lexical rule
/// that produced each weight (-1 when none).
class LexicalWeights {
 public:
  LexicalWeights(int length, int n_vt)
      : length_(length), n_vt_(n_vt),
        w_(static_cast<std::size_t>(length) * static_cast<std::size_t>(n_vt), 0.0),
        rule_(w_.size(), -1) {}

  int length() const noexcept { return length_; }
  int lexical_count() const noexcept { return n_vt_; }
  double& weight(int pos, int t) { return w_[index(pos, t)]; }
  double weight(int pos, int t) const { return w_[index(pos, t)]; }
  int& rule(int pos, int t) { return rule_[index(pos, t)]; }
  int rule(int pos, int t) const { return rule_[index(pos, t)]; }

  /// θ(t -> x_i) at every position.
  static LexicalWeights for_sequence(std::span<const int> x, const Grammar& g) {
    LexicalWeights lw(static_cast<int>(x.size()), g.num_lexical_nonterminals());
    const int n_sym = static_cast<int>(g.alphabet().size());
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < 0 || x[i] >= n_sym)
        throw ParseError("symbol index out of alphabet at position " + std::to_string(i + 1));
    for (int idx : g.rules_of(RuleKind::lexical)) {
      const Rule& r = g.rule(idx);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == r.rhs[0]) {
          lw.weight(static_cast<int>(i), r.lhs) = r.prob;
          lw.rule(static_cast<int>(i), r.lhs) = idx;
        }
      }
    }
    return lw;
  }

  /// Σ_a θ(t -> a) at every position: the lexical mass summed over all
  /// sequences of the given length. Equals 1 for proper grammars.
  static LexicalWeights marginal(int length, const Grammar& g) {
    LexicalWeights lw(length, g.num_lexical_nonterminals());
    for (int idx : g.rules_of(RuleKind::lexical)) {
      const Rule& r = g.rule(idx);
      for (int i = 0; i < length; ++i) lw.weight(i, r.lhs) += r.prob;
    }
    return lw;
  }

 private:
  std::size_t index(int pos, int t) const {
    return static_cast<std::size_t>(pos) * static_cast<std::size_t>(n_vt_) +
           static_cast<std::size_t>(t);
  }
  int length_;
  int n_vt_;
  std::vector<double> w_;
  std::vector<int> rule_;
};

class ParseChart {
 public:
  ParseChart(int length, int n_symbols, int n_vt, int n_contacts)
      : n_(length), v_(n_symbols), t_(n_vt), contacts_(n_contacts),
        p_(static_cast<std::size_t>(length) * length * n_symbols, 0.0),
        c_(static_cast<std::size_t>(n_contacts) * length * n_vt, 0.0) {}

  int length() const noexcept { return n_; }
  int symbol_count() const noexcept { return v_; }
  int contact_count() const noexcept { return contacts_; }

  // len in [1, n], start 0-based
  double& p(int len, int start, int sym) { return p_[p_index(len, start, sym)]; }
  double p(int len, int start, int sym) const { return p_[p_index(len, start, sym)]; }
  double& c(int contact, int pos, int t) { return c_[c_index(contact, pos, t)]; }
  double c(int contact, int pos, int t) const { return c_[c_index(contact, pos, t)]; }

  std::size_t p_index(int len, int start, int sym) const {
    return (static_cast<std::size_t>(len - 1) * n_ + static_cast<std::size_t>(start)) * v_ +
           static_cast<std::size_t>(sym);
  }

 private:
  std::size_t c_index(int contact, int pos, int t) const {
    return (static_cast<std::size_t>(contact) * n_ + static_cast<std::size_t>(pos)) * t_ +
           static_cast<std::size_t>(t);
  }
  int n_, v_, t_, contacts_;
  std::vector<double> p_;
  std::vector<double> c_;
};

struct Backpointer {
  int rule = -1;
  int split = 0;     // left child length, branching rules
  int contact = -1;  // contact pair feeding both lexical children, or -1 for P(1, ., .)
};

enum class Semiring { sum_product, max_product };

namespace detail {

struct BranchingRule {
  int lhs, left, right, index;
  double prob;
};
struct ContactRule {
  int lhs, open, inner, close, index;
  double prob;
};

template <Semiring S>
ParseChart fill_chart(const LexicalWeights& lex, const ContactMap& map, const Grammar& g,
                      std::vector<Backpointer>* backpointers) {
  const int n = lex.length();
  const int n_vt = g.num_lexical_nonterminals();
  const int n_contacts = static_cast<int>(map.size());
  ParseChart chart(n, g.num_nonterminals(), n_vt, n_contacts);
  if constexpr (S == Semiring::max_product)
    backpointers->assign(static_cast<std::size_t>(n) * n * g.num_nonterminals(), Backpointer{});

  std::vector<BranchingRule> branching;
  for (int idx : g.rules_of(RuleKind::branching)) {
    const Rule& r = g.rule(idx);
    if (r.prob > 0.0) branching.push_back({r.lhs, r.rhs[0], r.rhs[1], idx, r.prob});
  }
  std::vector<ContactRule> contact;
  for (int idx : g.rules_of(RuleKind::contact)) {
    const Rule& r = g.rule(idx);
    if (r.prob > 0.0) contact.push_back({r.lhs, r.rhs[0], r.rhs[1], r.rhs[2], idx, r.prob});
  }

  auto accumulate = [&](int len, int start, int sym, double value, const Backpointer& bp) {
    const std::size_t cell = chart.p_index(len, start, sym);
    double& slot = chart.p(len, start, sym);
    if constexpr (S == Semiring::sum_product) {
      slot += value;
      (void)cell;
      (void)bp;
    } else {
      if (value > slot) {
        slot = value;
        (*backpointers)[cell] = bp;
      }
    }
  };

  for (int i = 0; i < n; ++i)
    for (int t = 0; t < n_vt; ++t) chart.p(1, i, t) = lex.weight(i, t);

  // Lexical mass at contact positions is reserved for the pair's contact rule.
  for (int p = 0; p < n_contacts; ++p) {
    const int a = map.pairs()[static_cast<std::size_t>(p)].first - 1;
    const int b = map.pairs()[static_cast<std::size_t>(p)].second - 1;
    for (int t = 0; t < n_vt; ++t) {
      chart.c(p, a, t) = chart.p(1, a, t);
      chart.c(p, b, t) = chart.p(1, b, t);
    }
    for (int t = 0; t < n_vt; ++t) {
      chart.p(1, a, t) = 0.0;
      chart.p(1, b, t) = 0.0;
    }
  }

  for (int len = 2; len <= n; ++len) {
    for (int i = 0; i + len <= n; ++i) {
      for (int k = 1; k < len; ++k) {
        for (const auto& r : branching) {
          const double left = chart.p(k, i, r.left);
          if (left == 0.0) continue;
          const double right = chart.p(len - k, i + k, r.right);
          if (right == 0.0) continue;
          accumulate(len, i, r.lhs, r.prob * left * right, {r.index, k, -1});
        }
      }
      if (len < 3) continue;
      const int last = i + len - 1;
      for (const auto& r : contact) {
        const double inner = chart.p(len - 2, i + 1, r.inner);
        if (inner == 0.0) continue;
        const double v = r.prob * chart.p(1, i, r.open) * inner * chart.p(1, last, r.close);
        if (v != 0.0) accumulate(len, i, r.lhs, v, {r.index, 0, -1});
      }
      // C_p is zero away from the two endpoints of pair p, so only the pair
      // spanning exactly [i, last] contributes here.
      for (int p = 0; p < n_contacts; ++p) {
        for (const auto& r : contact) {
          const double v = r.prob * chart.c(p, i, r.open) * chart.p(len - 2, i + 1, r.inner) *
                           chart.c(p, last, r.close);
          if (v != 0.0) accumulate(len, i, r.lhs, v, {r.index, 0, p});
        }
      }
    }
  }
  return chart;
}

inline void check_input(std::span<const int> x, const Grammar& g) {
  if (x.size() < 2) throw ParseError("sequence must have length >= 2");
  const int n_sym = static_cast<int>(g.alphabet().size());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < 0 || x[i] >= n_sym)
      throw ParseError("symbol index out of alphabet at position " + std::to_string(i + 1));
}

inline void check_map(int n, const ContactMap& map) {
  if (map.length() != n)
    throw ParseError("contact map length " + std::to_string(map.length()) +
                     " differs from sequence length " + std::to_string(n));
  require_valid(map);
}

}  // namespace detail

/// Sum over all parse trees of x. Contact rules apply to any span >= 3.
inline double inside(std::span<const int> x, const Grammar& g) {
  detail::check_input(x, g);
  const int n = static_cast<int>(x.size());
  const auto chart = detail::fill_chart<Semiring::sum_product>(
      LexicalWeights::for_sequence(x, g), ContactMap(n, {}), g, nullptr);
  return chart.p(n, 0, g.start());
}

inline double inside(std::string_view x, const Grammar& g) {
  return inside(g.alphabet().encode(x), g);
}

/// Sum over the parse trees of x consistent with `map` at delta = 4.
inline double inside_constrained(std::span<const int> x, const ContactMap& map, const Grammar& g) {
  detail::check_input(x, g);
  const int n = static_cast<int>(x.size());
  detail::check_map(n, map);
  if (!map.empty() && !g.has_contact_rules()) return 0.0;
  const auto chart = detail::fill_chart<Semiring::sum_product>(LexicalWeights::for_sequence(x, g),
                                                               map, g, nullptr);
  return chart.p(n, 0, g.start());
}

inline double inside_constrained(std::string_view x, const ContactMap& map, const Grammar& g) {
  return inside_constrained(g.alphabet().encode(x), map, g);
}

/// Full chart for x (contact-constrained when `map` is non-empty).
inline ParseChart inside_chart(std::span<const int> x, const ContactMap& map, const Grammar& g) {
  detail::check_input(x, g);
  detail::check_map(static_cast<int>(x.size()), map);
  return detail::fill_chart<Semiring::sum_product>(LexicalWeights::for_sequence(x, g), map, g,
                                                   nullptr);
}

/// Total probability of map-consistent skeletons of length n: the constrained
/// chart with every lexical non-terminal weighted by its summed emission mass.
inline ParseChart neighborhood_chart(const ContactMap& map, int n, const Grammar& g) {
  if (n < 2) throw ParseError("length must be >= 2");
  detail::check_map(n, map);
  return detail::fill_chart<Semiring::sum_product>(LexicalWeights::marginal(n, g), map, g,
                                                   nullptr);
}

inline double neighborhood_mass(const ContactMap& map, int n, const Grammar& g) {
  if (!map.empty() && !g.has_contact_rules()) {
    detail::check_map(n, map);
    return 0.0;
  }
  return neighborhood_chart(map, n, g).p(n, 0, g.start());
}

inline double log_inside(std::span<const int> x, const Grammar& g) { return std::log(inside(x, g)); }

inline double log_inside_constrained(std::span<const int> x, const ContactMap& map,
                                     const Grammar& g) {
  return std::log(inside_constrained(x, map, g));
}

struct ViterbiResult {
  std::optional<ParseTree> tree;  // empty when no parse exists
  double probability = 0.0;

  bool found() const noexcept { return tree.has_value(); }
  double log_probability() const { return std::log(probability); }
};

namespace detail {

inline ViterbiResult viterbi_impl(std::span<const int> x, const ContactMap& map, const Grammar& g) {
  const int n = static_cast<int>(x.size());
  std::vector<Backpointer> bps;
  const auto chart = fill_chart<Semiring::max_product>(LexicalWeights::for_sequence(x, g), map, g,
                                                       &bps);
  ViterbiResult result;
  result.probability = chart.p(n, 0, g.start());
  if (!(result.probability > 0.0)) {
    result.probability = 0.0;
    return result;
  }

  ParseTree tree;
  auto lexical_node = [&](int pos, int t) {
    return tree.add_node(t, {tree.add_leaf(x[static_cast<std::size_t>(pos)])});
  };
  auto build = [&](auto&& self, int len, int start, int sym) -> int {
    if (len == 1) return lexical_node(start, sym);
    const Backpointer& bp = bps[chart.p_index(len, start, sym)];
    const Rule& r = g.rule(bp.rule);
    if (r.kind == RuleKind::branching) {
      const int left = self(self, bp.split, start, r.rhs[0]);
      const int right = self(self, len - bp.split, start + bp.split, r.rhs[1]);
      return tree.add_node(sym, {left, right});
    }
    const int open = lexical_node(start, r.rhs[0]);
    const int inner = self(self, len - 2, start + 1, r.rhs[1]);
    const int close = lexical_node(start + len - 1, r.rhs[2]);
    return tree.add_node(sym, {open, inner, close});
  };
  tree.set_root(build(build, n, 0, g.start()));
  result.tree = std::move(tree);
  return result;
}

}  // namespace detail

/// Maximum-probability parse tree of x.
inline ViterbiResult viterbi(std::span<const int> x, const Grammar& g) {
  detail::check_input(x, g);
  return detail::viterbi_impl(x, ContactMap(static_cast<int>(x.size()), {}), g);
}

inline ViterbiResult viterbi(std::string_view x, const Grammar& g) {
  return viterbi(g.alphabet().encode(x), g);
}

/// Maximum-probability parse tree among those consistent with `map`.
inline ViterbiResult viterbi_constrained(std::span<const int> x, const ContactMap& map,
                                         const Grammar& g) {
  detail::check_input(x, g);
  detail::check_map(static_cast<int>(x.size()), map);
  if (!map.empty() && !g.has_contact_rules()) return {};
  return detail::viterbi_impl(x, map, g);
}

inline ViterbiResult viterbi_constrained(std::string_view x, const ContactMap& map,
                                         const Grammar& g) {
  return viterbi_constrained(g.alphabet().encode(x), map, g);
}

}  // namespace pcfgcm
