#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pcfgcm/contacts.hpp"
#include "pcfgcm/oracle.hpp"
#include "pcfgcm/tree.hpp"
#include "test_util.hpp"

namespace pcfgcm {
namespace {

using Kind = ContactViolation::Kind;

// (S (T a) (S (T b) (T b)) (T a)) under G2.
ParseTree contact_tree(const Grammar& g) {
  return parse_bracketed("(S (T a) (S (T b) (T b)) (T a))", g);
}

TEST(Validate, Examples) {
  EXPECT_TRUE(is_valid(ContactMap(10, {{2, 9}, {4, 7}})));

  auto v = validate(ContactMap(10, {{1, 4}, {2, 6}}));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Kind::crossing);

  v = validate(ContactMap(10, {{3, 5}}));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Kind::separation);
}

TEST(Validate, OverlapAndRange) {
  auto v = validate(ContactMap(10, {{1, 5}, {5, 9}}));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Kind::overlap);

  v = validate(ContactMap(27, {{5, 30}}));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Kind::out_of_range);
  EXPECT_THROW(require_valid(ContactMap(27, {{5, 30}})), ContactError);
}

TEST(Validate, ReportsEveryViolation) {
  EXPECT_EQ(validate(ContactMap(10, {{1, 2}, {3, 8}, {5, 10}})).size(), 2u);
}

TEST(ContactMap, NormalizesPairs) {
  const ContactMap m(10, {{9, 2}, {4, 7}, {2, 9}});
  EXPECT_EQ(m.pairs(), (std::vector<ContactPair>{{2, 9}, {4, 7}}));
  EXPECT_TRUE(m.contains({7, 4}));
  EXPECT_FALSE(m.contains({1, 4}));
}

TEST(LeafDistance, ContactTree) {
  const Grammar g = testing::make_g2();
  const ParseTree t = contact_tree(g);
  EXPECT_EQ(leaf_distance(t, 1, 4), 4);
  EXPECT_EQ(leaf_distance(t, 2, 3), 4);
  EXPECT_EQ(leaf_distance(t, 1, 2), 5);
  EXPECT_THROW(leaf_distance(t, 0, 2), ContactError);
  EXPECT_THROW(leaf_distance(t, 1, 5), ContactError);
}

TEST(IsConsistent, Examples) {
  const Grammar g = testing::make_g2();
  EXPECT_TRUE(is_consistent(contact_tree(g), ContactMap(4, {{1, 4}})));
  const ParseTree branching = parse_bracketed("(S (S (S (T a) (T b)) (T b)) (T a))", g);
  EXPECT_FALSE(is_consistent(branching, ContactMap(4, {{1, 4}})));
  EXPECT_TRUE(is_consistent(branching, ContactMap(4, {})));
  EXPECT_THROW(is_consistent(branching, ContactMap(5, {})), ContactError);
}

// Every binary tree over a 2..7 leaf yield keeps non-adjacent leaves at
// least 5 edges apart.
TEST(LeafDistance, BranchingMinimumIsFive) {
  const Grammar g = testing::make_g2_bar();
  for (int n = 3; n <= 7; ++n) {
    for (const auto& [tree, p] : oracle::enumerate_trees(Sequence(static_cast<std::size_t>(n), 0), g)) {
      for (int i = 1; i <= n; ++i)
        for (int j = i + 2; j <= n; ++j) EXPECT_GE(leaf_distance(tree, i, j), 5);
    }
  }
}

TEST(LeafDistance, ContactRealizationIsFour) {
  const Grammar g = testing::make_g2();
  for (int n = 4; n <= 7; ++n) {
    for (const auto& [tree, p] : oracle::enumerate_trees(Sequence(static_cast<std::size_t>(n), 1), g)) {
      for (const TreeNode& node : tree.nodes()) {
        if (node.children.size() != 3) continue;
        EXPECT_EQ(leaf_distance(tree, node.begin + 1, node.end), 4);
      }
    }
  }
}

TEST(IsConsistent, AddingPairsNeverHelps) {
  std::mt19937_64 rng(3);
  const Grammar g = testing::make_g2();
  for (int n = 5; n <= 7; ++n) {
    const auto trees = oracle::enumerate_trees(Sequence(static_cast<std::size_t>(n), 0), g);
    for (int trial = 0; trial < 10; ++trial) {
      const ContactMap big = testing::random_map(rng, n);
      std::vector<ContactPair> fewer = big.pairs();
      if (!fewer.empty()) fewer.pop_back();
      const ContactMap small(n, fewer);
      for (const auto& [t, p] : trees) {
        if (is_consistent(t, big)) {
          EXPECT_TRUE(is_consistent(t, small));
        }
      }
    }
  }
}

TEST(ContactFile, RoundTripAndErrors) {
  const ContactMap m(27, {{2, 26}, {5, 12}});
  std::stringstream s;
  write_contacts(s, m);
  EXPECT_EQ(read_contacts(s), m);

  std::istringstream no_header("1 5\n");
  EXPECT_THROW(read_contacts(no_header), ContactError);
  std::istringstream junk("length: 9\n1 x\n");
  EXPECT_THROW(read_contacts(junk), ContactError);
  std::istringstream comments("# pairs\nlength: 9 # n\n\n1 5 # first\n");
  EXPECT_EQ(read_contacts(comments), ContactMap(9, {{1, 5}}));
}

TEST(Tree, UstErasesLabels) {
  const Grammar g = testing::make_g2();
  const ParseTree a = parse_bracketed("(S (S (T a) (T b)) (T b))", g);
  // G2 has a single V_N symbol; the relabeled tree comes from a second grammar.
  const Grammar h = from_text(R"(alphabet: a b
vt: T
vn: S R
start: S
lexical T -> a : 0.6
lexical T -> b : 0.4
branching S -> R T : 1
branching R -> T T : 1
)");
  const ParseTree b = parse_bracketed("(S (R (T a) (T b)) (T b))", h);
  EXPECT_EQ(ust_of(a), ust_of(b));
  EXPECT_EQ(ust_of(a).yield(), a.yield());
  EXPECT_EQ(to_bracketed(ust_of(a), g.alphabet()), "(* (* (* a) (* b)) (* b))");

  const Ust u = ust_of(contact_tree(g));
  EXPECT_EQ(u.node(u.root()).children.size(), 3u);
  EXPECT_FALSE(ust_of(a) == u);
}

TEST(Tree, BracketedRoundTrip) {
  const Grammar g = testing::make_g2();
  const std::string text = "(S (T a) (S (T b) (T b)) (T a))";
  const ParseTree t = parse_bracketed(text, g);
  EXPECT_EQ(to_bracketed(t, g), text);
  EXPECT_EQ(g.alphabet().decode(t.yield()), "abba");
  EXPECT_NEAR(tree_probability(t, g), 0.00864, 1e-15);
  EXPECT_THROW(parse_bracketed("(S (T a) (T b)", g), TreeError);
  EXPECT_THROW(parse_bracketed("(S (X a) (T b))", g), TreeError);
  EXPECT_THROW(parse_bracketed("(S (T a) (T b)) x", g), TreeError);
  EXPECT_THROW(tree_probability(parse_bracketed("(S (T a) (T b) (T b))", g), g), TreeError);
}

}  // namespace
}  // namespace pcfgcm
