#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "engine.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "scenario_io.hpp"

namespace mzi {

/// chi-square critical value for df=3 at alpha=0.01.
inline constexpr double kChiSquareCritical = 11.34;

using Pair = std::pair<std::string, std::string>;  // (source, detector)

/// Which boundary starts each run: a fixed element or uniform over the
/// sources (CT, ST) or detectors (AT).
struct SourcePolicy {
  std::string fixed;  // empty means uniform
  bool uniform() const { return fixed.empty(); }
  std::string label() const { return uniform() ? "uniform" : fixed; }
  static SourcePolicy parse(const std::string& s) { return s == "uniform" ? SourcePolicy{} : SourcePolicy{s}; }
  bool operator==(const SourcePolicy&) const = default;
};

/// (source, detector) pairs in ensemble order: matched indices first
/// ((S1,D1), (S2,D2)), then the crossed ones ((S1,D2), (S2,D1)).
inline std::vector<Pair> ensemble_pairs(const Scenario& s) {
  const auto src = s.sources();
  const auto det = s.detectors();
  std::vector<Pair> out;
  for (std::size_t i = 0; i < std::min(src.size(), det.size()); ++i) out.emplace_back(src[i], det[i]);
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < det.size(); ++j)
      if (i != j) out.emplace_back(src[i], det[j]);
  return out;
}

struct EnsembleStats {
  std::string scenario_name;
  Theory theory{Theory::CT};
  SplitterMode mode{SplitterMode::AlwaysSplit};
  std::uint64_t n_runs{0};
  std::uint64_t seed{0};
  SourcePolicy policy{};
  std::vector<Pair> pairs;
  std::map<Pair, std::uint64_t> counts;
  std::map<Pair, double> probabilities;
  std::map<Pair, double> expected;
  double chi_square_vs_expected{0.0};
  std::string rng{SplitMix64::kAlgorithm};
  Scenario scenario;
  std::vector<std::uint16_t> outcomes;  // index into `pairs` per run

  bool chi_square_pass() const { return chi_square_vs_expected < kChiSquareCritical; }
  bool operator==(const EnsembleStats&) const = default;
};

/// Pearson statistic; an observed count in a cell with zero expectation is infinite.
inline double chi_square(const std::map<Pair, std::uint64_t>& counts,
                         const std::map<Pair, double>& expected_prob, std::uint64_t n) {
  double chi = 0.0;
  for (const auto& [pair, p] : expected_prob) {
    const auto it = counts.find(pair);
    const double obs = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    const double exp = p * static_cast<double>(n);
    if (exp <= 0.0) {
      if (obs > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    chi += (obs - exp) * (obs - exp) / exp;
  }
  return chi;
}

namespace detail {

inline std::vector<std::string> policy_choices(const Scenario& s, Theory theory,
                                               const SourcePolicy& policy) {
  if (!policy.uniform()) return {policy.fixed};
  return theory == Theory::AT ? s.detectors() : s.sources();
}

inline std::map<std::string, double> normalized(std::map<std::string, double> w) {
  double total = 0.0;
  for (const auto& [k, v] : w) total += v;
  if (!(total > 0.0)) throw ConfigurationError("no detector carries any weight");
  for (auto& [k, v] : w) v /= total;
  return w;
}

// ST detector weights for one source, normalized over detectors.
inline std::map<std::string, double> st_detector_weights(const Scenario& s, const std::string& source,
                                                         SplitterMode mode) {
  std::map<std::string, double> w;
  for (const auto& d : s.detectors()) w[d] = run_st(s, source, d, mode).weight;
  return normalized(std::move(w));
}

}  // namespace detail

/// Exact (source, detector) distribution of the ensemble the harness samples.
inline std::map<Pair, double> expected_distribution(const Scenario& scenario, Theory theory,
                                                    SplitterMode mode, const SourcePolicy& policy) {
  std::map<Pair, double> out;
  for (const auto& p : ensemble_pairs(scenario)) out[p] = 0.0;
  const auto starts = detail::policy_choices(scenario, theory, policy);
  const double p_start = 1.0 / static_cast<double>(starts.size());
  for (const auto& b : starts) {
    std::map<std::string, double> cond;
    if (theory == Theory::CT)
      cond = analytic_distribution(scenario, b, mode);
    else if (theory == Theory::AT)
      cond = analytic_distribution(time_reverse(scenario), b, mode);
    else
      cond = detail::st_detector_weights(scenario, b, mode);
    for (const auto& [other, p] : cond) {
      const Pair key = theory == Theory::AT ? Pair{other, b} : Pair{b, other};
      out[key] += p_start * p;
    }
  }
  return out;
}

/// n independent runs on per-run rng streams derived from (seed, run index).
inline EnsembleStats run_ensemble(const Scenario& scenario, Theory theory, SplitterMode mode,
                                  std::uint64_t n, std::uint64_t seed,
                                  const SourcePolicy& policy = {}) {
  if (n < 1) throw PreconditionError("ensemble needs n >= 1");
  const Scenario eff = effective(scenario);
  validate(eff);
  const auto starts = detail::policy_choices(eff, theory, policy);
  for (const auto& b : starts) {
    const auto& el = eff.at(b);
    const bool ok = theory == Theory::AT ? std::holds_alternative<Detector>(el.kind)
                                         : std::holds_alternative<Source>(el.kind);
    if (!ok) throw ConfigurationError("policy element " + b + " has the wrong role for " + to_string(theory));
  }

  EnsembleStats st;
  st.scenario_name = scenario.name;
  st.theory = theory;
  st.mode = mode;
  st.n_runs = n;
  st.seed = seed;
  st.policy = policy;
  st.scenario = scenario;
  st.pairs = ensemble_pairs(eff);
  for (const auto& p : st.pairs) st.counts[p] = 0;
  std::map<Pair, std::uint16_t> index;
  for (std::size_t i = 0; i < st.pairs.size(); ++i) index[st.pairs[i]] = static_cast<std::uint16_t>(i);

  const Scenario reversed = theory == Theory::AT ? time_reverse(eff) : Scenario{};
  std::map<std::string, std::map<std::string, double>> st_weights;
  if (theory == Theory::ST)
    for (const auto& b : starts) st_weights[b] = detail::st_detector_weights(eff, b, mode);

  st.outcomes.reserve(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    try {
      SplitMix64 rng = SplitMix64::stream(seed, r);
      const std::string& start = starts.size() == 1 ? starts.front() : starts[rng.below(starts.size())];
      Pair outcome;
      if (theory == Theory::CT) {
        const auto rec = run_ct(eff, start, mode, rng);
        outcome = {rec.source, rec.detector};
      } else if (theory == Theory::AT) {
        auto rec = simulate_ct(reversed, start, mode, rng).record;
        outcome = {rec.detector, start};
      } else {
        const double u = rng.uniform();
        double acc = 0.0;
        const auto& w = st_weights.at(start);
        std::string pick = w.rbegin()->first;
        for (const auto& [d, p] : w) {
          acc += p;
          if (u < acc && p > 0.0) {
            pick = d;
            break;
          }
        }
        outcome = {start, pick};
      }
      st.counts[outcome] += 1;
      st.outcomes.push_back(index.at(outcome));
    } catch (const Error& e) {
      throw ConfigurationError("run " + std::to_string(r) + ": " + e.what());
    }
  }
  for (const auto& p : st.pairs)
    st.probabilities[p] = static_cast<double>(st.counts[p]) / static_cast<double>(n);
  st.expected = expected_distribution(eff, theory, mode, policy);
  st.chi_square_vs_expected = chi_square(st.counts, st.expected, n);
  return st;
}

/// Re-run an ensemble from its recorded configuration and require identical outcomes.
inline EnsembleStats replay(const EnsembleStats& stats) {
  auto again = run_ensemble(stats.scenario, stats.theory, stats.mode, stats.n_runs, stats.seed,
                            stats.policy);
  const auto n = std::min(again.outcomes.size(), stats.outcomes.size());
  for (std::size_t i = 0; i < n; ++i)
    if (again.outcomes[i] != stats.outcomes[i])
      throw MismatchError("replay diverges at run " + std::to_string(i), i);
  if (again.outcomes.size() != stats.outcomes.size() || again.counts != stats.counts)
    throw MismatchError("replay diverges at run " + std::to_string(n), n);
  return again;
}

struct PairDelta {
  Pair pair;
  double analytic_always;
  double analytic_collapse;
  double empirical_always;
  double empirical_collapse;
  double analytic_delta;   // |always - collapse|
  double empirical_delta;  // |always - collapse|
  double sigma;            // binomial std of the empirical difference
  bool operator==(const PairDelta&) const = default;
};

struct DivergenceReport {
  std::string scenario_name;
  Theory theory{Theory::CT};
  std::uint64_t n{0};
  std::uint64_t seed{0};
  std::vector<PairDelta> deltas;
  double max_analytic_delta{0.0};
  double max_empirical_delta{0.0};
  bool agree{true};
  std::string verdict;
  EnsembleStats always;
  EnsembleStats collapse;
  bool operator==(const DivergenceReport&) const = default;
};

inline DivergenceReport compare_modes(const Scenario& scenario, Theory theory, std::uint64_t n,
                                      std::uint64_t seed, const SourcePolicy& policy = {}) {
  DivergenceReport rep;
  rep.scenario_name = scenario.name;
  rep.theory = theory;
  rep.n = n;
  rep.seed = seed;
  rep.always = run_ensemble(scenario, theory, SplitterMode::AlwaysSplit, n, seed, policy);
  rep.collapse = run_ensemble(scenario, theory, SplitterMode::CollapseAtSplitter, n, seed, policy);
  const double dn = static_cast<double>(n);
  for (const auto& p : rep.always.pairs) {
    PairDelta d{p,
                rep.always.expected.at(p),
                rep.collapse.expected.at(p),
                rep.always.probabilities.at(p),
                rep.collapse.probabilities.at(p),
                0.0,
                0.0,
                0.0};
    d.analytic_delta = std::abs(d.analytic_always - d.analytic_collapse);
    d.empirical_delta = std::abs(d.empirical_always - d.empirical_collapse);
    d.sigma = std::sqrt(d.empirical_always * (1 - d.empirical_always) / dn +
                        d.empirical_collapse * (1 - d.empirical_collapse) / dn);
    rep.max_analytic_delta = std::max(rep.max_analytic_delta, d.analytic_delta);
    rep.max_empirical_delta = std::max(rep.max_empirical_delta, d.empirical_delta);
    if (d.empirical_delta > 3.0 * d.sigma) rep.agree = false;
    rep.deltas.push_back(d);
  }
  rep.verdict = rep.agree ? "modes agree" : "modes diverge";
  return rep;
}

}  // namespace mzi
