#pragma once

// Synthetic motif data: sequences drawn from a known contact grammar,
// conditioned on length and on consistency with a fixed contact map, plus
// negatives cut from uniform random background sequences.

#include <optional>
#include <string>
#include <vector>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/dataio.hpp"
#include "pcfgcm/grammar.hpp"
#include "pcfgcm/learner.hpp"
#include "pcfgcm/tree.hpp"

namespace pcfgcm::testing {

// P emits the paired residues, Q the rest; the two emission profiles overlap
// enough that the pairing is not obvious from composition alone. S closes
// the outer pair, X grows the interior and may nest further contacts.
inline Grammar synthetic_generator() {
  return from_text(R"(alphabet: a b c d
vt: P Q
vn: S X
start: S
lexical P -> a : 0.3
lexical P -> b : 0.3
lexical P -> c : 0.2
lexical P -> d : 0.2
lexical Q -> a : 0.2
lexical Q -> b : 0.2
lexical Q -> c : 0.3
lexical Q -> d : 0.3
contact S -> P X P : 0.8
branching S -> X X : 0.2
branching X -> Q X : 0.35
branching X -> X Q : 0.25
contact X -> P X P : 0.2
branching X -> Q Q : 0.2
)");
}

inline ContactMap synthetic_map() { return ContactMap(12, {{1, 12}, {4, 9}}); }

/// Top-down sample; nullopt when the tree outgrows `max_leaves`.
inline std::optional<ParseTree> sample_tree(const Grammar& g, Random& rng, int max_leaves) {
  std::vector<std::vector<int>> by_lhs(static_cast<std::size_t>(g.num_nonterminals()));
  for (std::size_t k = 0; k < g.rules().size(); ++k)
    by_lhs[static_cast<std::size_t>(g.rules()[k].lhs)].push_back(static_cast<int>(k));
  ParseTree tree;
  int leaves = 0;
  auto expand = [&](auto&& self, int sym) -> int {
    if (leaves > max_leaves) return -1;
    double u = rng.uniform();
    const auto& options = by_lhs[static_cast<std::size_t>(sym)];
    int pick = options.back();
    for (int k : options) {
      u -= g.rule(k).prob;
      if (u < 0) {
        pick = k;
        break;
      }
    }
    const Rule& r = g.rule(pick);
    if (r.kind == RuleKind::lexical) {
      ++leaves;
      return tree.add_node(r.lhs, {tree.add_leaf(r.rhs[0])});
    }
    std::vector<int> kids;
    for (int c = 0; c < r.arity(); ++c) {
      const int child = self(self, r.rhs[static_cast<std::size_t>(c)]);
      if (child < 0) return -1;
      kids.push_back(child);
    }
    return tree.add_node(r.lhs, std::move(kids));
  };
  const int root = expand(expand, g.start());
  if (root < 0) return std::nullopt;
  tree.set_root(root);
  return tree;
}

/// `count` yields of trees of length map.length() consistent with `map`.
inline std::vector<Sequence> sample_consistent(const Grammar& g, const ContactMap& map, int count,
                                               Random& rng, long max_tries = 10'000'000) {
  std::vector<Sequence> out;
  for (long tries = 0; static_cast<int>(out.size()) < count; ++tries) {
    if (tries >= max_tries) throw std::runtime_error("sampler acceptance too low");
    const auto t = sample_tree(g, rng, map.length());
    if (!t || t->leaf_count() != map.length() || !is_consistent(*t, map)) continue;
    out.push_back(t->yield());
  }
  return out;
}

/// Positives from the generator under synthetic_map(); negatives are
/// windows of uniform random sequences.
inline Dataset synthetic_dataset(std::uint64_t seed, int positives, int negatives) {
  const Grammar g = synthetic_generator();
  Random rng(seed);
  Dataset d;
  d.alphabet = g.alphabet();
  d.shared_map = synthetic_map();
  d.motif_length = d.shared_map->length();
  int k = 0;
  for (const auto& x : sample_consistent(g, *d.shared_map, positives, rng))
    d.positives.push_back({"syn" + std::to_string(++k), d.alphabet.decode(x)});
  const int window = d.motif_length;
  std::vector<SequenceRecord> background;
  for (int made = 0; made < negatives; made += 10) {
    std::string s;
    for (int i = 0; i < 10 * window; ++i) s.push_back(d.alphabet.symbol(static_cast<int>(rng.below(4))));
    background.push_back({"bg" + std::to_string(background.size() + 1), s});
  }
  d.negatives = cut_negatives(background, window);
  d.negatives.resize(static_cast<std::size_t>(negatives));
  return d;
}

}  // namespace pcfgcm::testing
