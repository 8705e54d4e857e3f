#pragma once

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>

#include "engine.hpp"
#include "ensemble.hpp"
#include "json.hpp"
#include "scenario_io.hpp"

namespace mzi {

inline constexpr int kReportFormat = 1;

inline Theory theory_from(const std::string& s) {
  if (s == "ct" || s == "CT") return Theory::CT;
  if (s == "at" || s == "AT") return Theory::AT;
  if (s == "st" || s == "ST") return Theory::ST;
  throw ConfigurationError("unknown theory '" + s + "' (expected ct, at or st)");
}

inline SplitterMode mode_from(const std::string& s) {
  if (s == "always-split") return SplitterMode::AlwaysSplit;
  if (s == "collapse") return SplitterMode::CollapseAtSplitter;
  throw ConfigurationError("unknown splitter mode '" + s + "' (expected always-split or collapse)");
}

namespace detail {
inline json complex_json(Complex c) { return json::array({c.real(), c.imag()}); }
inline Complex complex_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline std::string pair_key(const Pair& p) { return p.first + "->" + p.second; }
}  // namespace detail

// ---------------------------------------------------------------------------
// TransitionRecord

inline json to_json(const TransitionRecord& r) {
  json amps = json::object();
  for (const auto& [id, a] : r.amplitudes) amps[id] = detail::complex_json(a);
  json collapses = json::array();
  for (const auto& c : r.collapse_events)
    collapses.push_back({{"time", c.time}, {"element", c.element}, {"pre", c.pre}, {"post", c.post}});
  json choices = json::array();
  for (const auto& c : r.branch_choices)
    choices.push_back({{"element", c.element}, {"time", c.time}, {"pick", c.pick ? "transmit" : "reflect"}});
  return {{"format", kReportFormat},
          {"type", "transition_record"},
          {"source", r.source},
          {"detector", r.detector},
          {"theory", to_string(r.theory)},
          {"mode", to_string(r.mode)},
          {"arm_support", {{"upper", r.arm_support.upper}, {"lower", r.arm_support.lower}}},
          {"amplitudes", amps},
          {"weight", r.weight},
          {"boundary_time", r.boundary_time},
          {"collapse_events", collapses},
          {"branch_choices", choices},
          {"seed", r.seed}};
}

inline TransitionRecord record_from_json(const json& j) {
  try {
    TransitionRecord r;
    r.source = j.at("source").get<std::string>();
    r.detector = j.at("detector").get<std::string>();
    r.theory = theory_from(j.at("theory").get<std::string>());
    r.mode = mode_from(j.at("mode").get<std::string>());
    r.arm_support = {j.at("arm_support").at("upper").get<bool>(), j.at("arm_support").at("lower").get<bool>()};
    for (const auto& [id, a] : j.at("amplitudes").items()) r.amplitudes[id] = detail::complex_from(a);
    r.weight = j.at("weight").get<double>();
    r.boundary_time = j.at("boundary_time").get<double>();
    for (const auto& c : j.at("collapse_events"))
      r.collapse_events.push_back({c.at("time").get<double>(), c.at("element").get<std::string>(),
                                   c.at("pre").get<std::string>(), c.at("post").get<std::string>()});
    for (const auto& c : j.at("branch_choices"))
      r.branch_choices.push_back({c.at("element").get<std::string>(), c.at("time").get<double>(),
                                  c.at("pick").get<std::string>() == "transmit" ? 1 : 0});
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed transition record: ") + e.what());
  }
}

inline std::string to_text(const TransitionRecord& r) {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "theory " << to_string(r.theory) << ", mode " << to_string(r.mode) << "\n"
     << "transition " << r.source << " -> " << r.detector << " at t=" << r.boundary_time << "\n"
     << "weight " << r.weight << "\n"
     << "arm support: upper=" << (r.arm_support.upper ? "yes" : "no")
     << " lower=" << (r.arm_support.lower ? "yes" : "no") << "\n";
  for (const auto& [id, a] : r.amplitudes)
    os << "  amplitude at " << id << ": " << a.real() << (a.imag() < 0 ? " - " : " + ")
       << std::abs(a.imag()) << "i  (|a|^2 = " << std::norm(a) << ")\n";
  for (const auto& c : r.branch_choices)
    os << "  branch choice at " << c.element << " t=" << c.time << ": "
       << (c.pick ? "transmit" : "reflect") << "\n";
  for (const auto& c : r.collapse_events)
    os << "  collapse at " << c.element << " t=" << c.time << "\n    before: " << c.pre
       << "\n    after:  " << c.post << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// EnsembleStats

inline json to_json(const EnsembleStats& s) {
  json table = json::array();
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const auto& p = s.pairs[i];
    table.push_back({{"ensemble", i + 1},
                     {"source", p.first},
                     {"detector", p.second},
                     {"count", s.counts.at(p)},
                     {"probability", s.probabilities.at(p)},
                     {"expected", s.expected.at(p)}});
  }
  std::string outcomes;
  outcomes.reserve(s.outcomes.size());
  for (auto o : s.outcomes) outcomes.push_back(static_cast<char>('0' + o));
  return {{"format", kReportFormat},
          {"type", "ensemble_stats"},
          {"scenario_name", s.scenario_name},
          {"theory", to_string(s.theory)},
          {"mode", to_string(s.mode)},
          {"n_runs", s.n_runs},
          {"seed", s.seed},
          {"policy", s.policy.label()},
          {"rng", s.rng},
          {"chi_square_vs_expected", std::isinf(s.chi_square_vs_expected) ? json(nullptr)
                                                                           : json(s.chi_square_vs_expected)},
          {"chi_square_critical", kChiSquareCritical},
          {"ensembles", table},
          {"outcomes", outcomes},
          {"scenario", to_json(s.scenario)}};
}

inline EnsembleStats stats_from_json(const json& j) {
  try {
    EnsembleStats s;
    s.scenario_name = j.at("scenario_name").get<std::string>();
    s.theory = theory_from(j.at("theory").get<std::string>());
    s.mode = mode_from(j.at("mode").get<std::string>());
    s.n_runs = j.at("n_runs").get<std::uint64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.policy = SourcePolicy::parse(j.at("policy").get<std::string>());
    s.rng = j.at("rng").get<std::string>();
    const auto& chi = j.at("chi_square_vs_expected");
    s.chi_square_vs_expected = chi.is_null() ? std::numeric_limits<double>::infinity() : chi.get<double>();
    for (const auto& row : j.at("ensembles")) {
      Pair p{row.at("source").get<std::string>(), row.at("detector").get<std::string>()};
      s.pairs.push_back(p);
      s.counts[p] = row.at("count").get<std::uint64_t>();
      s.probabilities[p] = row.at("probability").get<double>();
      s.expected[p] = row.at("expected").get<double>();
    }
    for (char c : j.at("outcomes").get<std::string>()) s.outcomes.push_back(static_cast<std::uint16_t>(c - '0'));
    s.scenario = scenario_from_json(j.at("scenario"));
    return s;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed ensemble report: ") + e.what());
  }
}

inline std::string to_csv(const EnsembleStats& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# scenario=" << s.scenario_name << " theory=" << to_string(s.theory)
     << " mode=" << to_string(s.mode) << " n=" << s.n_runs << " seed=" << s.seed
     << " policy=" << s.policy.label() << "\n# rng=" << s.rng << "\n";
  os << "ensemble,source,detector,count,probability,expected\n";
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const auto& p = s.pairs[i];
    os << i + 1 << ',' << p.first << ',' << p.second << ',' << s.counts.at(p) << ','
       << s.probabilities.at(p) << ',' << s.expected.at(p) << "\n";
  }
  return os.str();
}

inline std::string to_text(const EnsembleStats& s) {
  std::ostringstream os;
  os << "scenario " << s.scenario_name << ", theory " << to_string(s.theory) << ", mode "
     << to_string(s.mode) << ", n=" << s.n_runs << ", seed=" << s.seed << ", policy "
     << s.policy.label() << "\n";
  os << "rng: " << s.rng << "\n\n";
  os << "  ensemble  source  detector     count  probability  expected\n";
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const auto& p = s.pairs[i];
    char line[160];
    std::snprintf(line, sizeof line, "  %8zu  %6s  %8s  %8llu  %11.4f  %8.4f\n", i + 1, p.first.c_str(),
                  p.second.c_str(), static_cast<unsigned long long>(s.counts.at(p)),
                  s.probabilities.at(p), s.expected.at(p));
    os << line;
  }
  os << "\nchi-square vs expected (df=3): " << s.chi_square_vs_expected << "  ("
     << (s.chi_square_pass() ? "pass" : "FAIL") << " at " << kChiSquareCritical << ")\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// DivergenceReport

inline json to_json(const DivergenceReport& r) {
  json rows = json::array();
  for (const auto& d : r.deltas)
    rows.push_back({{"source", d.pair.first},
                    {"detector", d.pair.second},
                    {"analytic_always_split", d.analytic_always},
                    {"analytic_collapse", d.analytic_collapse},
                    {"empirical_always_split", d.empirical_always},
                    {"empirical_collapse", d.empirical_collapse},
                    {"analytic_delta", d.analytic_delta},
                    {"empirical_delta", d.empirical_delta},
                    {"sigma", d.sigma}});
  return {{"format", kReportFormat},
          {"type", "divergence_report"},
          {"scenario_name", r.scenario_name},
          {"theory", to_string(r.theory)},
          {"n", r.n},
          {"seed", r.seed},
          {"deltas", rows},
          {"max_analytic_delta", r.max_analytic_delta},
          {"max_empirical_delta", r.max_empirical_delta},
          {"verdict", r.verdict},
          {"always_split", to_json(r.always)},
          {"collapse", to_json(r.collapse)}};
}

inline DivergenceReport divergence_from_json(const json& j) {
  try {
    DivergenceReport r;
    r.scenario_name = j.at("scenario_name").get<std::string>();
    r.theory = theory_from(j.at("theory").get<std::string>());
    r.n = j.at("n").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& d : j.at("deltas"))
      r.deltas.push_back({{d.at("source").get<std::string>(), d.at("detector").get<std::string>()},
                          d.at("analytic_always_split").get<double>(),
                          d.at("analytic_collapse").get<double>(),
                          d.at("empirical_always_split").get<double>(),
                          d.at("empirical_collapse").get<double>(),
                          d.at("analytic_delta").get<double>(),
                          d.at("empirical_delta").get<double>(),
                          d.at("sigma").get<double>()});
    r.max_analytic_delta = j.at("max_analytic_delta").get<double>();
    r.max_empirical_delta = j.at("max_empirical_delta").get<double>();
    r.verdict = j.at("verdict").get<std::string>();
    r.agree = r.verdict == "modes agree";
    r.always = stats_from_json(j.at("always_split"));
    r.collapse = stats_from_json(j.at("collapse"));
    return r;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed divergence report: ") + e.what());
  }
}

inline std::string to_csv(const DivergenceReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "# scenario=" << r.scenario_name << " theory=" << to_string(r.theory) << " n=" << r.n
     << " seed=" << r.seed << " verdict=" << r.verdict << "\n";
  os << "ensemble,source,detector,analytic_always_split,analytic_collapse,empirical_always_split,"
        "empirical_collapse,analytic_delta,empirical_delta,sigma\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i) {
    const auto& d = r.deltas[i];
    os << i + 1 << ',' << d.pair.first << ',' << d.pair.second << ',' << d.analytic_always << ','
       << d.analytic_collapse << ',' << d.empirical_always << ',' << d.empirical_collapse << ','
       << d.analytic_delta << ',' << d.empirical_delta << ',' << d.sigma << "\n";
  }
  return os.str();
}

inline std::string to_text(const DivergenceReport& r) {
  std::ostringstream os;
  os << "scenario " << r.scenario_name << ", theory " << to_string(r.theory) << ", n=" << r.n
     << ", seed=" << r.seed << "\n\n";
  os << "  ensemble  pair       always  collapse   delta(analytic)  delta(empirical)  3sigma\n";
  for (std::size_t i = 0; i < r.deltas.size(); ++i) {
    const auto& d = r.deltas[i];
    char line[200];
    std::snprintf(line, sizeof line, "  %8zu  %-9s  %6.4f  %8.4f   %15.4f  %16.4f  %6.4f\n", i + 1,
                  detail::pair_key(d.pair).c_str(), d.empirical_always, d.empirical_collapse,
                  d.analytic_delta, d.empirical_delta, 3 * d.sigma);
    os << line;
  }
  os << "\nverdict: " << r.verdict << " (max delta " << r.max_empirical_delta << " empirical, "
     << r.max_analytic_delta << " analytic)\n";
  return os.str();
}

}  // namespace mzi
