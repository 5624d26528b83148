#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pcfgcm/estimation.hpp"
#include "pcfgcm/oracle.hpp"
#include "test_util.hpp"

namespace pcfgcm {
namespace {

using testing::make_g2;

SampleItem item(const Grammar& g, const std::string& x, std::vector<ContactPair> pairs) {
  return {g.alphabet().encode(x), ContactMap(static_cast<int>(x.size()), std::move(pairs))};
}

TEST(ObjectiveMl, Fixtures) {
  const Grammar g = make_g2();
  const std::vector<SampleItem> one{item(g, "abba", {{1, 4}})};
  EXPECT_NEAR(objective_ml(one, g), std::log(0.00864), 1e-10);
  const std::vector<SampleItem> free{item(g, "abba", {})};
  EXPECT_NEAR(objective_ml(free, g), std::log(0.009792), 1e-10);
  const std::vector<SampleItem> two{one[0], one[0]};
  EXPECT_DOUBLE_EQ(objective_ml(two, g), 2 * objective_ml(one, g));
}

TEST(ObjectiveMl, ZeroMassIsNegInf) {
  const Grammar g = testing::make_g2_bar();
  const std::vector<SampleItem> s{item(g, "abba", {{1, 4}})};
  EXPECT_EQ(objective_ml(s, g), kNegInf);
}

TEST(ObjectiveMl, EmptyMapsGiveLogLikelihood) {
  std::mt19937_64 rng(5);
  const Grammar g = testing::random_grammar(rng, Alphabet("ab"), 2, 2);
  std::vector<SampleItem> s;
  double expected = 0.0;
  for (const auto& x : testing::all_sequences(2, 4)) {
    s.push_back({x, ContactMap(4, {})});
    expected += std::log(inside(x, g));
  }
  EXPECT_NEAR(objective_ml(s, g), expected, 1e-10 * std::abs(expected));
}

TEST(ObjectiveCeM, Fixtures) {
  const Grammar g = make_g2();
  const ContactMap m(4, {{1, 4}});
  const std::vector<Sequence> one{g.alphabet().encode("abba")};
  EXPECT_NEAR(objective_ce_m(one, m, g), std::log(0.0576), 1e-10);
  const std::vector<Sequence> three(3, one[0]);
  EXPECT_NEAR(objective_ce_m(three, m, g), 3 * objective_ce_m(one, m, g), 1e-12);
}

TEST(ObjectiveCeM, Errors) {
  const Grammar g = make_g2();
  const std::vector<Sequence> wrong{g.alphabet().encode("abbab")};
  EXPECT_THROW(objective_ce_m(wrong, ContactMap(4, {{1, 4}}), g), EstimationError);
  const std::vector<Sequence> ok{g.alphabet().encode("abba")};
  EXPECT_THROW(objective_ce_m(ok, ContactMap(4, {{1, 4}}), testing::make_g2_bar()), EstimationError);
}

// Uniform lexical probabilities: the numerator is checked against the oracle
// only.
TEST(ObjectiveCeM, UniformLexicalMatchesOracle) {
  const Grammar g = from_text(R"(alphabet: a b
vt: T
vn: S
start: S
lexical T -> a : 0.5
lexical T -> b : 0.5
branching S -> T T : 0.5
branching S -> S T : 0.2
contact S -> T S T : 0.3
)");
  const ContactMap m(4, {{1, 4}});
  const double mass = oracle::brute_neighborhood_mass(m, 4, g);
  for (const auto& x : testing::all_sequences(2, 4)) {
    const double num = oracle::brute_inside_constrained(x, m, g);
    const std::vector<Sequence> s{x};
    EXPECT_NEAR(objective_ce_m(s, m, g), std::log(num / mass), 1e-10);
  }
}

TEST(ObjectiveCeX, Fixtures) {
  const Grammar g = make_g2();
  const std::vector<SampleItem> s{item(g, "abba", {{1, 4}})};
  EXPECT_NEAR(objective_ce_x(s, g), std::log(0.00864 / 0.009792), 1e-10);
  const std::vector<SampleItem> free{item(g, "abba", {})};
  EXPECT_EQ(objective_ce_x(free, g), 0.0);
}

TEST(ObjectiveCeX, ZeroInsideThrows) {
  const Grammar z = from_text(R"(alphabet: a b
vt: T
vn: S
start: S
lexical T -> a : 1
lexical T -> b : 0
branching S -> T T : 1
)");
  const std::vector<SampleItem> s{item(z, "ab", {})};
  EXPECT_THROW(objective_ce_x(s, z), EstimationError);
}

TEST(ObjectiveCeX, TermsAreNonPositive) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Grammar g = testing::random_grammar(rng, Alphabet("ab"), 2, 2);
    for (const auto& x : testing::all_sequences(2, 6)) {
      const std::vector<SampleItem> s{{x, testing::random_map(rng, 6)}};
      EXPECT_LE(objective_ce_x(s, g), 1e-12);
    }
  }
}

TEST(Objectives, ContinuousInTheta) {
  const Grammar g = make_g2();
  const TrainingSample sample{{item(g, "abba", {{1, 4}}), item(g, "abbab", {{1, 5}})},
                              ContactMap(4, {{1, 4}})};
  const TrainingSample same_length{{item(g, "abba", {{1, 4}}), item(g, "baab", {{1, 4}})},
                                   ContactMap(4, {{1, 4}})};
  for (std::size_t k = 0; k < g.rules().size(); ++k) {
    auto w = g.probabilities();
    w[k] += 1e-9;
    const Grammar h = normalize(w, g);
    for (auto kind : {EstimatorKind::ml, EstimatorKind::ce_x}) {
      EXPECT_LT(std::abs(evaluate_objective(kind, sample, h).value -
                         evaluate_objective(kind, sample, g).value),
                1e-6);
    }
    EXPECT_LT(std::abs(evaluate_objective(EstimatorKind::ce_m, same_length, h).value -
                       evaluate_objective(EstimatorKind::ce_m, same_length, g).value),
              1e-6);
  }
}

TEST(Objectives, Dispatch) {
  const Grammar g = make_g2();
  TrainingSample s{{item(g, "abba", {{1, 4}})}, std::nullopt};
  EXPECT_THROW(evaluate_objective(EstimatorKind::ce_m, s, g), EstimationError);
  s.shared_map = ContactMap(4, {{1, 4}});
  EXPECT_NEAR(evaluate_objective(EstimatorKind::ce_m, s, g).value, std::log(0.0576), 1e-10);
  EXPECT_EQ(parse_estimator("ce-x"), EstimatorKind::ce_x);
  EXPECT_EQ(to_string(EstimatorKind::ce_m), "ce-m");
  EXPECT_THROW(parse_estimator("em"), std::invalid_argument);
}

}  // namespace
}  // namespace pcfgcm
