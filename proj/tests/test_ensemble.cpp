#include <gtest/gtest.h>

#include <cmath>

#include "mzi/ensemble.hpp"

using namespace mzi;

namespace {

constexpr auto kSplit = SplitterMode::AlwaysSplit;
constexpr auto kCollapse = SplitterMode::CollapseAtSplitter;

const Pair e1{"S1", "D1"}, e2{"S2", "D2"}, e3{"S1", "D2"}, e4{"S2", "D1"};

}  // namespace

TEST(Ensemble, PairOrderPutsMatchedIndicesFirst) {
  const auto p = ensemble_pairs(builtin_scenario("BE"));
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0], e1);
  EXPECT_EQ(p[1], e2);
  EXPECT_EQ(p[2], e3);
  EXPECT_EQ(p[3], e4);
}

TEST(Ensemble, ChiSquareRules) {
  std::map<Pair, std::uint64_t> counts{{e1, 50}, {e2, 50}, {e3, 0}, {e4, 0}};
  std::map<Pair, double> expected{{e1, 0.5}, {e2, 0.5}, {e3, 0.0}, {e4, 0.0}};
  EXPECT_DOUBLE_EQ(chi_square(counts, expected, 100), 0.0);
  counts[e3] = 1;
  EXPECT_TRUE(std::isinf(chi_square(counts, expected, 101)));
  std::map<Pair, std::uint64_t> even{{e1, 30}, {e2, 20}, {e3, 25}, {e4, 25}};
  std::map<Pair, double> quarter{{e1, 0.25}, {e2, 0.25}, {e3, 0.25}, {e4, 0.25}};
  EXPECT_DOUBLE_EQ(chi_square(even, quarter, 100), 2.0);
}

TEST(Ensemble, BalancedCtOnlyMatchedEnsembles) {
  const auto st = run_ensemble(builtin_scenario("BE"), Theory::CT, kSplit, 10000, 42);
  EXPECT_EQ(st.counts.at(e3), 0u);
  EXPECT_EQ(st.counts.at(e4), 0u);
  EXPECT_EQ(st.counts.at(e1) + st.counts.at(e2), 10000u);
  EXPECT_TRUE(st.chi_square_pass());
  EXPECT_EQ(st.outcomes.size(), 10000u);
}

TEST(Ensemble, MissingElementIsFourWayEven) {
  const auto st = run_ensemble(builtin_scenario("ME"), Theory::CT, kSplit, 10000, 42);
  for (const auto& p : st.pairs) EXPECT_DOUBLE_EQ(st.expected.at(p), 0.25);
  EXPECT_LT(st.chi_square_vs_expected, kChiSquareCritical);
}

TEST(Ensemble, FixedPolicyStartsEveryRunFromOneSource) {
  const auto st = run_ensemble(builtin_scenario("ME"), Theory::CT, kSplit, 2000, 3, SourcePolicy{"S2"});
  EXPECT_EQ(st.counts.at(e1) + st.counts.at(e3), 0u);
  EXPECT_NEAR(st.expected.at(e2), 0.5, 1e-12);
  EXPECT_TRUE(st.chi_square_pass());
  EXPECT_THROW(run_ensemble(builtin_scenario("ME"), Theory::CT, kSplit, 10, 3, SourcePolicy{"D1"}),
               ConfigurationError);
  EXPECT_THROW(run_ensemble(builtin_scenario("ME"), Theory::AT, kSplit, 10, 3, SourcePolicy{"S1"}),
               ConfigurationError);
}

TEST(Ensemble, AllTheoriesAgreeOnBuiltinDistributions) {
  for (const auto& name : builtin_names())
    for (auto th : {Theory::CT, Theory::AT, Theory::ST}) {
      const auto st = run_ensemble(builtin_scenario(name), th, kSplit, 4000, 17);
      EXPECT_TRUE(st.chi_square_pass()) << name << " " << to_string(th) << " chi " << st.chi_square_vs_expected;
    }
}

TEST(Ensemble, AdvancedEnsembleMirrorsForward) {
  const auto ct = run_ensemble(builtin_scenario("CE"), Theory::CT, kSplit, 3000, 8);
  const auto at = run_ensemble(builtin_scenario("ACE"), Theory::AT, kSplit, 3000, 8);
  EXPECT_EQ(at.counts.at(e3), 0u);
  EXPECT_EQ(at.counts.at(e4), 0u);
  EXPECT_EQ(ct.counts.at(e3), 0u);
}

TEST(Ensemble, DeterministicForASeed) {
  const auto a = run_ensemble(builtin_scenario("CE"), Theory::CT, kCollapse, 500, 99);
  const auto b = run_ensemble(builtin_scenario("CE"), Theory::CT, kCollapse, 500, 99);
  EXPECT_EQ(a, b);
  const auto c = run_ensemble(builtin_scenario("CE"), Theory::CT, kCollapse, 500, 100);
  EXPECT_NE(a.outcomes, c.outcomes);
}

TEST(Ensemble, PrefixStability) {
  // Run i depends only on (seed, i): a shorter ensemble is a prefix of a longer one.
  const auto a = run_ensemble(builtin_scenario("ME"), Theory::CT, kCollapse, 300, 5);
  const auto b = run_ensemble(builtin_scenario("ME"), Theory::CT, kCollapse, 100, 5);
  EXPECT_TRUE(std::equal(b.outcomes.begin(), b.outcomes.end(), a.outcomes.begin()));
}

TEST(Ensemble, RejectsEmpty) {
  EXPECT_THROW(run_ensemble(builtin_scenario("BE"), Theory::CT, kSplit, 0, 1), PreconditionError);
}

TEST(Replay, ReproducesOutcomes) {
  for (auto th : {Theory::CT, Theory::AT, Theory::ST}) {
    const auto st = run_ensemble(builtin_scenario("CE"), th, kCollapse, 1000, 21);
    EXPECT_EQ(replay(st), st);
  }
}

TEST(Replay, ReportsFirstDifferingRun) {
  auto st = run_ensemble(builtin_scenario("ME"), Theory::CT, kSplit, 1000, 21);
  st.outcomes[417] = static_cast<std::uint16_t>((st.outcomes[417] + 1) % 4);
  try {
    replay(st);
    FAIL() << "tampered ensemble replayed cleanly";
  } catch (const MismatchError& e) {
    EXPECT_EQ(e.first_differing_run, 417u);
  }
}

TEST(CompareModes, CompleteExperimentDiverges) {
  const auto rep = compare_modes(builtin_scenario("CE"), Theory::CT, 10000, 42);
  EXPECT_FALSE(rep.agree);
  EXPECT_EQ(rep.verdict, "modes diverge");
  EXPECT_NEAR(rep.max_analytic_delta, 0.25, 1e-12);
  for (const auto& d : rep.deltas) {
    EXPECT_NEAR(d.analytic_delta, 0.25, 1e-12);
    EXPECT_NEAR(d.empirical_delta, 0.25, 5 * d.sigma + 0.01);
  }
  EXPECT_EQ(rep.always.counts.at(e3), 0u);
  for (const auto& p : rep.collapse.pairs) EXPECT_NEAR(rep.collapse.probabilities.at(p), 0.25, 0.02);
}

TEST(CompareModes, MissingElementAgrees) {
  const auto rep = compare_modes(builtin_scenario("ME"), Theory::CT, 10000, 42);
  EXPECT_TRUE(rep.agree);
  EXPECT_EQ(rep.verdict, "modes agree");
  EXPECT_NEAR(rep.max_analytic_delta, 0.0, 1e-12);
}

TEST(CompareModes, SymmetricTheoryOnCompleteExperiment) {
  // Under collapse each primed ST leg reaches its target with full weight,
  // so CE spreads evenly over all four ensembles.
  const auto rep = compare_modes(builtin_scenario("CE"), Theory::ST, 2000, 1);
  EXPECT_NEAR(rep.collapse.expected.at(e1), 0.25, 1e-12);
  EXPECT_NEAR(rep.always.expected.at(e1), 0.5, 1e-12);
}
