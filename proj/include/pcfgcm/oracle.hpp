#pragma once

// Brute-force enumeration of parse trees for small grammars and inputs.
//
// Trees are generated top-down as left-most derivations, with a memoized
// "can this symbol derive this span" table used only for pruning. Nothing
// here shares code with the chart parser; it is the reference the parser is
// tested against.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/tree.hpp"

namespace pcfgcm::oracle {

struct EnumerationBudget {
  int max_sequence_length = 10;
  std::uint64_t max_tree_count = 5'000'000;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One rule application of a left-most derivation, with the span it covers.
struct Step {
  int rule;
  int begin;
  int length;
};
using Derivation = std::vector<Step>;

class Enumerator {
 public:
  Enumerator(std::span<const int> x, const Grammar& g, EnumerationBudget budget)
      : x_(x.begin(), x.end()), g_(g), budget_(budget) {
    const int n = static_cast<int>(x_.size());
    if (n > budget_.max_sequence_length)
      throw BudgetExceeded("sequence length " + std::to_string(n) + " exceeds enumeration budget");
    const int v = g_.num_nonterminals();
    memo_.assign(static_cast<std::size_t>(v) * (n + 1) * (n + 1), -1);
    by_lhs_.resize(static_cast<std::size_t>(v));
    for (std::size_t k = 0; k < g_.rules().size(); ++k) {
      const Rule& r = g_.rules()[k];
      if (r.prob > 0.0) by_lhs_[static_cast<std::size_t>(r.lhs)].push_back(static_cast<int>(k));
    }
  }

  /// Calls visit(derivation, probability) once per complete parse tree of x.
  void run(const std::function<void(const Derivation&, double)>& visit) {
    visit_ = &visit;
    count_ = 0;
    derivation_.clear();
    agenda_.clear();
    const int n = static_cast<int>(x_.size());
    if (n == 0 || !derivable(g_.start(), 0, n)) return;
    agenda_.push_back({g_.start(), 0, n});
    expand(1.0);
  }

  /// Materializes a derivation as a parse tree.
  ParseTree build_tree(const Derivation& d) const {
    ParseTree tree;
    std::size_t next = 0;
    auto build = [&](auto&& self) -> int {
      const Step& s = d.at(next++);
      const Rule& r = g_.rule(s.rule);
      if (r.kind == RuleKind::lexical)
        return tree.add_node(r.lhs, {tree.add_leaf(x_[static_cast<std::size_t>(s.begin)])});
      std::vector<int> kids;
      for (int k = 0; k < r.arity(); ++k) kids.push_back(self(self));
      return tree.add_node(r.lhs, std::move(kids));
    };
    tree.set_root(build(build));
    return tree;
  }

  /// Same test as is_consistent(build_tree(d), map, delta), computed on the
  /// derivation without materializing the tree. The terminal leaves hang one
  /// edge below their lexical steps.
  bool consistent(const Derivation& d, const ContactMap& map, int delta) {
    parent_.assign(d.size(), -1);
    depth_.assign(d.size(), 0);
    lexical_.clear();
    open_.clear();  // (step, children still to attach)
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!open_.empty()) {
        parent_[k] = open_.back().first;
        depth_[k] = depth_[static_cast<std::size_t>(parent_[k])] + 1;
        if (--open_.back().second == 0) open_.pop_back();
      }
      const Rule& r = g_.rule(d[k].rule);
      if (r.kind == RuleKind::lexical) lexical_.push_back(static_cast<int>(k));
      else open_.emplace_back(static_cast<int>(k), r.arity());
    }
    for (const auto& [i, j] : map.pairs()) {
      int a = lexical_.at(static_cast<std::size_t>(i - 1));
      int b = lexical_.at(static_cast<std::size_t>(j - 1));
      int len = 2;
      while (depth_[static_cast<std::size_t>(a)] > depth_[static_cast<std::size_t>(b)]) { a = parent_[static_cast<std::size_t>(a)]; ++len; }
      while (depth_[static_cast<std::size_t>(b)] > depth_[static_cast<std::size_t>(a)]) { b = parent_[static_cast<std::size_t>(b)]; ++len; }
      while (a != b) {
        a = parent_[static_cast<std::size_t>(a)];
        b = parent_[static_cast<std::size_t>(b)];
        len += 2;
      }
      if (len > delta) return false;
    }
    return true;
  }

 private:
  struct Item {
    int symbol;
    int begin;
    int length;
  };

  bool derivable(int sym, int begin, int length) {
    const int n = static_cast<int>(x_.size());
    auto& slot = memo_[(static_cast<std::size_t>(sym) * (n + 1) + begin) * (n + 1) + length];
    if (slot != -1) return slot == 1;
    bool ok = false;
    for (int idx : by_lhs_[static_cast<std::size_t>(sym)]) {
      const Rule& r = g_.rule(idx);
      switch (r.kind) {
        case RuleKind::lexical:
          ok = length == 1 && x_[static_cast<std::size_t>(begin)] == r.rhs[0];
          break;
        case RuleKind::branching:
          for (int k = 1; k < length && !ok; ++k)
            ok = derivable(r.rhs[0], begin, k) && derivable(r.rhs[1], begin + k, length - k);
          break;
        case RuleKind::contact:
          ok = length >= 3 && derivable(r.rhs[0], begin, 1) &&
               derivable(r.rhs[1], begin + 1, length - 2) &&
               derivable(r.rhs[2], begin + length - 1, 1);
          break;
      }
      if (ok) break;
    }
    slot = ok ? 1 : 0;
    return ok;
  }

  void expand(double prob) {
    if (agenda_.empty()) {
      if (++count_ > budget_.max_tree_count) throw BudgetExceeded("tree count exceeds budget");
      (*visit_)(derivation_, prob);
      return;
    }
    const Item item = agenda_.back();
    agenda_.pop_back();
    for (int idx : by_lhs_[static_cast<std::size_t>(item.symbol)]) {
      const Rule& r = g_.rule(idx);
      switch (r.kind) {
        case RuleKind::lexical:
          if (item.length == 1 && x_[static_cast<std::size_t>(item.begin)] == r.rhs[0]) {
            derivation_.push_back({idx, item.begin, 1});
            expand(prob * r.prob);
            derivation_.pop_back();
          }
          break;
        case RuleKind::branching:
          for (int k = 1; k < item.length; ++k) {
            if (!derivable(r.rhs[0], item.begin, k) ||
                !derivable(r.rhs[1], item.begin + k, item.length - k))
              continue;
            derivation_.push_back({idx, item.begin, item.length});
            agenda_.push_back({r.rhs[1], item.begin + k, item.length - k});
            agenda_.push_back({r.rhs[0], item.begin, k});
            expand(prob * r.prob);
            agenda_.resize(agenda_.size() - 2);
            derivation_.pop_back();
          }
          break;
        case RuleKind::contact: {
          const int last = item.begin + item.length - 1;
          if (item.length < 3 || !derivable(r.rhs[0], item.begin, 1) ||
              !derivable(r.rhs[1], item.begin + 1, item.length - 2) ||
              !derivable(r.rhs[2], last, 1))
            break;
          derivation_.push_back({idx, item.begin, item.length});
          agenda_.push_back({r.rhs[2], last, 1});
          agenda_.push_back({r.rhs[1], item.begin + 1, item.length - 2});
          agenda_.push_back({r.rhs[0], item.begin, 1});
          expand(prob * r.prob);
          agenda_.resize(agenda_.size() - 3);
          derivation_.pop_back();
          break;
        }
      }
    }
    agenda_.push_back(item);
  }

  Sequence x_;
  const Grammar& g_;
  EnumerationBudget budget_;
  std::vector<signed char> memo_;
  std::vector<std::vector<int>> by_lhs_;
  std::vector<Item> agenda_;
  Derivation derivation_;
  const std::function<void(const Derivation&, double)>* visit_ = nullptr;
  std::uint64_t count_ = 0;
  std::vector<int> parent_, depth_, lexical_;
  std::vector<std::pair<int, int>> open_;
};

/// Every parse tree of x with its derivation probability.
inline std::vector<std::pair<ParseTree, double>> enumerate_trees(std::span<const int> x,
                                                                 const Grammar& g,
                                                                 EnumerationBudget budget = {}) {
  Enumerator e(x, g, budget);
  std::vector<std::pair<ParseTree, double>> out;
  e.run([&](const Derivation& d, double p) { out.emplace_back(e.build_tree(d), p); });
  return out;
}

inline double brute_inside(std::span<const int> x, const Grammar& g, EnumerationBudget budget = {}) {
  Enumerator e(x, g, budget);
  double total = 0.0;
  e.run([&](const Derivation&, double p) { total += p; });
  return total;
}

struct BruteSums {
  double all = 0.0;         // every parse tree
  double consistent = 0.0;  // trees consistent with the map
};

/// One enumeration pass yielding both the unconstrained and the
/// map-consistent sums.
inline BruteSums brute_sums(std::span<const int> x, const ContactMap& map, const Grammar& g,
                            int delta = kDefaultDelta, EnumerationBudget budget = {}) {
  if (map.length() != static_cast<int>(x.size()))
    throw ContactError("contact map length differs from sequence length");
  Enumerator e(x, g, budget);
  BruteSums sums;
  e.run([&](const Derivation& d, double p) {
    sums.all += p;
    if (map.empty() || e.consistent(d, map, delta)) sums.consistent += p;
  });
  return sums;
}

/// Sum over enumerated trees that pass is_consistent(tree, map, delta).
inline double brute_inside_constrained(std::span<const int> x, const ContactMap& map,
                                       const Grammar& g, int delta = kDefaultDelta,
                                       EnumerationBudget budget = {}) {
  return brute_sums(x, map, g, delta, budget).consistent;
}

/// Σ over all |Σ|^n sequences of brute_inside_constrained.
inline double brute_neighborhood_mass(const ContactMap& map, int n, const Grammar& g,
                                      int delta = kDefaultDelta, EnumerationBudget budget = {}) {
  const int a = static_cast<int>(g.alphabet().size());
  Sequence x(static_cast<std::size_t>(n), 0);
  double total = 0.0;
  for (;;) {
    total += brute_inside_constrained(x, map, g, delta, budget);
    int pos = n - 1;
    while (pos >= 0 && ++x[static_cast<std::size_t>(pos)] == a) x[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  return total;
}

}  // namespace pcfgcm::oracle
