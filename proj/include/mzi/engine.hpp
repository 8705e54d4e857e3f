#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "optics.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "wavepacket.hpp"

namespace mzi {

enum class Theory { CT, AT, ST };

inline const char* to_string(Theory t) {
  return t == Theory::CT ? "ct" : t == Theory::AT ? "at" : "st";
}

inline constexpr double kEpsilonSupport = 1e-9;
inline constexpr double kEventTolerance = 1e-9;
inline constexpr double kLeakTolerance = 1e-9;

/// A packet over the time span during which it travelled unscattered.
struct Segment {
  GaussianPacket packet;
  double t_start;
  double t_end{std::numeric_limits<double>::infinity()};
};

struct Absorption {
  std::string element;
  double time;
  GaussianPacket packet;
};

struct BranchChoice {
  std::string element;
  double time;
  int pick;  // 0 reflect, 1 transmit
  bool operator==(const BranchChoice&) const = default;
};

/// Event-driven history of one emission through a scenario.
struct Propagation {
  std::string emitter;
  double emit_time{0.0};
  std::vector<Segment> segments;
  std::vector<Absorption> absorptions;
  std::vector<GaussianPacket> escaped;
  std::vector<double> stage_norms;
  std::vector<BranchChoice> choices;

  std::vector<GaussianPacket> alive_at(double t) const {
    std::vector<GaussianPacket> out;
    for (const auto& s : segments)
      if (s.t_start <= t && t < s.t_end) out.push_back(s.packet);
    return out;
  }
  std::vector<GaussianPacket> absorbed_at(std::string_view element) const {
    std::vector<GaussianPacket> out;
    for (const auto& a : absorptions)
      if (a.element == element) out.push_back(a.packet);
    return out;
  }
  double last_absorption_time(std::string_view element) const {
    double t = -std::numeric_limits<double>::infinity();
    for (const auto& a : absorptions)
      if (a.element == element) t = std::max(t, a.time);
    return t;
  }
};

namespace detail {

inline std::optional<double> arrival_after(const GaussianPacket& p, const OpticalElement& e,
                                           double after) {
  const double v = p.constants.group_speed();
  if (v <= 0.0) return std::nullopt;
  const Vec2 rel = e.position - p.origin;
  const double along = dot(rel, p.direction);
  if (norm(rel - p.direction * along) > kCaptureRadius) return std::nullopt;
  const double t = p.birth_time + along / v;
  if (!(t > after + kEventTolerance)) return std::nullopt;
  return t;
}

}  // namespace detail

/// Propagate one emission through `scenario` (timeline already baked).
///
/// Packets advance ballistically and scatter at elements in arrival order;
/// simultaneous events are processed by element id. Detectors absorb, sources
/// are transparent. `choose` is consulted for collapse at present splitters.
template <class Chooser>
Propagation propagate(const Scenario& scenario, const std::string& emitter, SplitterMode mode,
                      Chooser&& choose) {
  const auto& src_el = scenario.at(emitter);
  const auto* src = std::get_if<Source>(&src_el.kind);
  if (!src) throw ConfigurationError(emitter + " is not a source in scenario " + scenario.name);
  const auto emit = scenario.emissions.find(emitter);
  if (emit == scenario.emissions.end())
    throw ConfigurationError(emitter + " has no emission time in scenario " + scenario.name);

  Propagation prop;
  prop.emitter = emitter;
  prop.emit_time = emit->second;

  struct Live {
    GaussianPacket packet;
    double t_start;
    double clock;  // time of the last element this packet met
  };
  std::vector<Live> live;
  {
    GaussianPacket p;
    p.amplitude = {1.0, 0.0};
    p.birth_time = prop.emit_time;
    p.origin = src_el.position;
    p.direction = src->emit_direction;
    p.constants = scenario.constants;
    p.lineage.push_back({emitter, Interaction::Emit, prop.emit_time});
    live.push_back({std::move(p), prop.emit_time, prop.emit_time});
  }

  auto record_norm = [&] {
    std::vector<GaussianPacket> all;
    for (const auto& l : live) all.push_back(l.packet);
    for (const auto& a : prop.absorptions) all.push_back(a.packet);
    prop.stage_norms.push_back(gram_norm(all));
  };
  record_norm();

  for (std::size_t guard = 0; !live.empty(); ++guard) {
    if (guard > 100000) throw ConfigurationError("propagation did not terminate");
    // Next event of every live packet.
    struct Next {
      double t;
      std::size_t element;
    };
    std::vector<std::optional<Next>> next(live.size());
    double t_star = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t k = 0; k < scenario.elements.size(); ++k) {
        const auto t = detail::arrival_after(live[i].packet, scenario.elements[k], live[i].clock);
        if (t && (!next[i] || *t < next[i]->t)) next[i] = Next{*t, k};
      }
      if (next[i]) t_star = std::min(t_star, next[i]->t);
    }
    if (!std::isfinite(t_star)) {
      for (auto& l : live) {
        prop.segments.push_back({l.packet, l.t_start});
        prop.escaped.push_back(std::move(l.packet));
      }
      live.clear();
      break;
    }

    std::vector<std::size_t> due;
    for (std::size_t i = 0; i < live.size(); ++i)
      if (next[i] && next[i]->t <= t_star + kEventTolerance) due.push_back(i);
    std::stable_sort(due.begin(), due.end(), [&](std::size_t a, std::size_t b) {
      return scenario.elements[next[a]->element].id < scenario.elements[next[b]->element].id;
    });

    std::vector<Live> survivors;
    std::vector<bool> handled(live.size(), false);
    for (std::size_t i : due) {
      handled[i] = true;
      const auto& el = scenario.elements[next[i]->element];
      const double t = next[i]->t;
      auto& l = live[i];
      const auto res = scatter(l.packet, el, t, mode, [&] {
        const int pick = static_cast<int>(choose());
        prop.choices.push_back({el.id, t, pick});
        return pick;
      });
      if (res.passed || (res.boundary && std::holds_alternative<Source>(el.kind))) {
        survivors.push_back({l.packet, l.t_start, t});
        continue;
      }
      prop.segments.push_back({l.packet, l.t_start, t});
      if (res.boundary) {
        GaussianPacket absorbed = l.packet;
        absorbed.lineage.push_back({el.id, Interaction::Absorb, t});
        prop.absorptions.push_back({el.id, t, std::move(absorbed)});
        continue;
      }
      for (const auto& child : res.children)
        if (std::abs(child.amplitude) >= kPruneAmplitude) survivors.push_back({child, t, t});
    }
    for (std::size_t i = 0; i < live.size(); ++i)
      if (!handled[i]) survivors.push_back(std::move(live[i]));
    live = std::move(survivors);
    record_norm();
  }
  return prop;
}

inline Propagation propagate(const Scenario& scenario, const std::string& emitter,
                             SplitterMode mode, SplitMix64& rng) {
  return propagate(scenario, emitter, mode, [&] { return rng.uniform() < 0.5 ? 0 : 1; });
}

/// Every collapse branch of a propagation together with its probability.
struct Branch {
  double probability;
  Propagation propagation;
};

inline std::vector<Branch> enumerate_branches(const Scenario& scenario, const std::string& emitter,
                                              SplitterMode mode) {
  std::vector<Branch> out;
  std::vector<int> prefix;
  for (;;) {
    std::vector<int> used;
    auto chooser = [&] {
      const int c = used.size() < prefix.size() ? prefix[used.size()] : 0;
      used.push_back(c);
      return c;
    };
    auto prop = propagate(scenario, emitter, mode, chooser);
    out.push_back({std::ldexp(1.0, -static_cast<int>(used.size())), std::move(prop)});
    auto zero = std::find(used.rbegin(), used.rend(), 0);
    if (zero == used.rend()) break;
    const auto keep = static_cast<std::size_t>(used.rend() - zero - 1);
    prefix.assign(used.begin(), used.begin() + static_cast<std::ptrdiff_t>(keep));
    prefix.push_back(1);
  }
  return out;
}

/// Born probability of ending at each absorbing element.
inline std::map<std::string, double> absorption_weights(const Propagation& p) {
  std::map<std::string, double> w;
  for (const auto& a : p.absorptions) w.try_emplace(a.element, 0.0);
  for (auto& [id, val] : w) val = gram_norm(p.absorbed_at(id));
  return w;
}

inline double escaped_weight(const Propagation& p) { return gram_norm(p.escaped); }

/// Exact distribution over absorbing elements for one emitter in `scenario`.
inline std::map<std::string, double> analytic_distribution(const Scenario& scenario,
                                                           const std::string& emitter,
                                                           SplitterMode mode) {
  const Scenario eff = effective(scenario);
  std::map<std::string, double> dist;
  for (const auto& id : eff.detectors()) dist[id] = 0.0;
  for (const auto& br : enumerate_branches(eff, emitter, mode))
    for (const auto& [id, w] : absorption_weights(br.propagation)) dist[id] += br.probability * w;
  return dist;
}

struct ArmSupport {
  bool upper{false};
  bool lower{false};
  bool operator==(const ArmSupport&) const = default;
};

/// An arm is supported iff its share exceeds epsilon of the total; zero total
/// supports neither arm.
inline ArmSupport arm_support(double upper_mass, double lower_mass,
                              double epsilon = kEpsilonSupport) {
  const double total = upper_mass + lower_mass;
  if (!(total > 0.0)) return {};
  return {upper_mass > epsilon * total, lower_mass > epsilon * total};
}

/// Arm support from a sampled product field and a region classifier.
inline ArmSupport arm_support(const FieldGrid& grid, const std::function<Arm(Vec2)>& region,
                              double epsilon = kEpsilonSupport) {
  const double up = grid.mass_where([&](Vec2 r) { return region(r) == Arm::Upper; });
  const double lo = grid.mass_where([&](Vec2 r) { return region(r) == Arm::Lower; });
  return arm_support(up, lo, epsilon);
}

// Interior of the built-in interferometer: upper arm above the B1-B2 diagonal.
inline Arm mzi_arm_region(Vec2 r) {
  constexpr double pad = 400.0;
  if (r.x < -pad || r.y < -pad || r.x > 800.0 + pad || r.y > 800.0 + pad) return Arm::None;
  return r.y > r.x ? Arm::Upper : r.y < r.x ? Arm::Lower : Arm::None;
}

inline Arm arm_of(const GaussianPacket& p, const Scenario& s) {
  for (const auto& entry : p.lineage)
    if (const auto* e = s.find(entry.element); e && e->arm != Arm::None) return e->arm;
  return Arm::None;
}

struct CollapseEvent {
  double time;
  std::string element;
  std::string pre;
  std::string post;
  bool operator==(const CollapseEvent&) const = default;
};

/// Outcome of one run under one theory, in forward (source, detector) convention.
///
/// `amplitudes` holds the coherent amplitude arriving at each absorbing
/// boundary of the run: detectors for CT/ST, sources for AT.
struct TransitionRecord {
  std::string source;
  std::string detector;
  Theory theory{Theory::CT};
  SplitterMode mode{SplitterMode::AlwaysSplit};
  ArmSupport arm_support{};
  std::map<std::string, Complex> amplitudes;
  double weight{0.0};
  double boundary_time{0.0};
  std::vector<CollapseEvent> collapse_events;
  std::vector<BranchChoice> branch_choices;
  std::uint64_t seed{0};

  bool operator==(const TransitionRecord&) const = default;
};

namespace detail {

inline std::string describe(std::span<const GaussianPacket> packets, double t) {
  std::ostringstream os;
  os.precision(10);
  os << packets.size() << " packet(s), norm " << gram_norm(packets);
  for (const auto& p : packets)
    os << "; |a|=" << std::abs(p.amplitude) << " at " << center_at(p, t) << " width "
       << width_at(p, t);
  return os.str();
}

inline ArmSupport lineage_support(const std::vector<GaussianPacket>& packets, const Scenario& s) {
  Complex up{}, lo{};
  for (const auto& p : packets) {
    const Arm a = arm_of(p, s);
    if (a == Arm::Upper) up += p.amplitude;
    if (a == Arm::Lower) lo += p.amplitude;
  }
  return arm_support(std::abs(up), std::abs(lo));
}

}  // namespace detail

/// Localized wavefunction that replaces the packet set on collapse, at rest inside `element`.
inline GaussianPacket collapsed_packet(const OpticalElement& element, Vec2 direction, double t,
                                       const PhysicalConstants& c, Complex phase = {1.0, 0.0}) {
  GaussianPacket p;
  p.amplitude = std::abs(phase) > 0 ? phase / std::abs(phase) : Complex{1.0, 0.0};
  p.birth_time = t;
  p.origin = element.position;
  p.direction = direction;
  p.constants = {c.hbar, c.mass, 0.0, kSigmaCollapse};
  p.lineage.push_back({element.id, Interaction::Collapse, t});
  return p;
}

/// A collapse-theory run with its full history, for rendering and live sessions.
struct CollapseRun {
  Scenario scenario;  // baked, in the run's own clock
  Propagation propagation;
  TransitionRecord record;
  GaussianPacket collapsed;

  std::vector<GaussianPacket> packets_at(double t) const {
    if (t >= record.boundary_time) return {collapsed};
    return propagation.alive_at(t);
  }
};

/// Forward evolution from `source`, Born sample over detectors, collapse to xi.
template <class Chooser, class Uniform>
CollapseRun simulate_collapse_theory(const Scenario& scenario, const std::string& source,
                                     SplitterMode mode, Chooser&& choose, Uniform&& uniform) {
  CollapseRun run;
  run.scenario = effective(scenario);
  validate(run.scenario);
  run.propagation = propagate(run.scenario, source, mode, choose);
  const auto& prop = run.propagation;
  const auto weights = absorption_weights(prop);
  std::map<std::string, double> det;
  double total = 0.0;
  for (const auto& [id, w] : weights)
    if (std::holds_alternative<Detector>(run.scenario.at(id).kind) && w > 0.0) {
      det[id] = w;
      total += w;
    }
  if (det.empty() || !(total > 0.0))
    throw ConfigurationError("no detector reachable from " + source + " in " + scenario.name);
  if (escaped_weight(prop) > kLeakTolerance)
    throw ConfigurationError("probability leaks out of the apparatus in " + scenario.name);

  const double u = uniform() * total;
  double acc = 0.0;
  std::string winner = det.rbegin()->first;
  for (const auto& [id, w] : det) {
    acc += w;
    if (u < acc) {
      winner = id;
      break;
    }
  }

  auto& rec = run.record;
  rec.source = source;
  rec.detector = winner;
  rec.theory = Theory::CT;
  rec.mode = mode;
  rec.weight = weights.at(winner);
  rec.branch_choices = prop.choices;
  for (const auto& id : run.scenario.detectors()) {
    Complex sum{};
    for (const auto& p : prop.absorbed_at(id)) sum += p.amplitude;
    rec.amplitudes[id] = sum;
  }
  const auto arriving = prop.absorbed_at(winner);
  rec.arm_support = detail::lineage_support(arriving, run.scenario);
  rec.boundary_time = prop.last_absorption_time(winner);

  const auto& det_el = run.scenario.at(winner);
  run.collapsed = collapsed_packet(det_el, std::get<Detector>(det_el.kind).facing,
                                   rec.boundary_time, run.scenario.constants,
                                   rec.amplitudes.at(winner));
  std::vector<GaussianPacket> before;
  for (const auto& a : prop.absorptions) before.push_back(a.packet);
  const GaussianPacket post[] = {run.collapsed};
  rec.collapse_events.push_back({rec.boundary_time, winner,
                                 detail::describe(before, rec.boundary_time),
                                 detail::describe(post, rec.boundary_time)});
  return run;
}

inline CollapseRun simulate_ct(const Scenario& scenario, const std::string& source,
                               SplitterMode mode, SplitMix64& rng) {
  return simulate_collapse_theory(
      scenario, source, mode, [&] { return rng.uniform() < 0.5 ? 0 : 1; },
      [&] { return rng.uniform(); });
}

inline TransitionRecord run_ct(const Scenario& scenario, const std::string& source,
                               SplitterMode mode, SplitMix64& rng) {
  return simulate_ct(scenario, source, mode, rng).record;
}

/// The CT engine on the time-reversed scenario, with `detector` as emitter.
/// The returned run lives in the backward clock tau = T - t.
inline CollapseRun simulate_at(const Scenario& scenario, const std::string& detector,
                               SplitterMode mode, SplitMix64& rng) {
  const auto& el = scenario.at(detector);
  if (!std::holds_alternative<Detector>(el.kind))
    throw ConfigurationError(detector + " is not a detector in " + scenario.name);
  if (!effective(scenario).detections.contains(detector))
    throw ConfigurationError(detector + " has no final boundary time in " + scenario.name);
  auto run = simulate_ct(time_reverse(scenario), detector, mode, rng);
  auto& rec = run.record;
  const std::string prepared = rec.detector;
  rec.detector = detector;
  rec.source = prepared;
  rec.theory = Theory::AT;
  return run;
}

inline TransitionRecord run_at(const Scenario& scenario, const std::string& detector,
                               SplitterMode mode, SplitMix64& rng) {
  return simulate_at(scenario, detector, mode, rng).record;
}

// ---------------------------------------------------------------------------
// Symmetrical theory

namespace detail {

// Some splitter is absent just after `start` but present later in the run.
inline bool leg_is_primed(const Scenario& s, double start) {
  for (const auto& e : s.elements) {
    if (!std::holds_alternative<BeamSplitter>(e.kind)) continue;
    bool now = false, later = false;
    for (const auto& iv : e.presence) {
      now = now || iv.covers_right_of(start);
      later = later || iv.meets_open(start, s.duration);
    }
    if (!now && later) return true;
  }
  return false;
}

// Presence frozen at its state just after `start`.
inline Scenario frozen_at(const Scenario& s, double start) {
  Scenario out = s;
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (auto& e : out.elements) {
    if (e.is_boundary()) continue;
    bool now = false;
    for (const auto& iv : e.presence) now = now || iv.covers_right_of(start);
    e.presence.clear();
    if (now) e.presence.push_back({-inf, inf});
  }
  return out;
}

}  // namespace detail

struct StLeg {
  Propagation propagation;
  bool primed{false};
};

struct StRun {
  Scenario forward_scenario;   // baked
  Scenario backward_scenario;  // time-reversed
  StLeg forward;
  StLeg backward;
  Complex scale{};  // forward amplitude into the detector
  double upper_mass{0.0};
  double lower_mass{0.0};
  TransitionRecord record;

  /// Retarded packets at t and advanced packets at their own clock T - t; t is
  /// clamped to the transition interval since nothing collapses at either end.
  std::pair<std::vector<GaussianPacket>, std::vector<GaussianPacket>> packets_at(double t) const {
    const double T = forward_scenario.duration;
    const double tc = std::clamp(t, 0.0, T);
    auto hold = [](const Propagation& p, double at) {
      auto pk = p.alive_at(at);
      if (pk.empty()) {
        // At the closing boundary: show what arrived there.
        for (const auto& a : p.absorptions)
          if (a.time <= at + kEventTolerance) pk.push_back(a.packet);
      }
      return pk;
    };
    return {hold(forward.propagation, tc), hold(backward.propagation, T - tc)};
  }
};

namespace detail {

inline StLeg st_leg(const Scenario& s, const std::string& emitter, const std::string& target,
                    SplitterMode mode, SplitMix64& rng) {
  const double start = s.emissions.at(emitter);
  if (mode == SplitterMode::CollapseAtSplitter && leg_is_primed(s, start)) {
    const Scenario frozen = frozen_at(s, start);
    std::vector<Propagation> routes;
    for (auto& br : enumerate_branches(frozen, emitter, SplitterMode::CollapseAtSplitter))
      if (gram_norm(br.propagation.absorbed_at(target)) > 0.5)
        routes.push_back(std::move(br.propagation));
    StLeg leg{{}, true};
    if (routes.empty()) {
      leg.propagation.emitter = emitter;
      leg.propagation.emit_time = start;
      return leg;
    }
    const auto pick = routes.size() == 1 ? 0 : rng.below(routes.size());
    leg.propagation = std::move(routes[pick]);
    return leg;
  }
  return {propagate(s, emitter, SplitterMode::AlwaysSplit, rng), false};
}

inline std::pair<Complex, Complex> arm_amplitudes(const Propagation& p, const Scenario& s) {
  Complex up{}, lo{};
  for (const auto& seg : p.segments) {
    const auto& last = seg.packet.lineage.back();
    const auto* e = s.find(last.element);
    if (!e || !std::holds_alternative<Mirror>(e->kind)) continue;
    if (e->arm == Arm::Upper) up += seg.packet.amplitude;
    if (e->arm == Arm::Lower) lo += seg.packet.amplitude;
  }
  return {up, lo};
}

}  // namespace detail

/// Retarded leg from the source, advanced leg from the detector, product field,
/// no collapse. Deterministic; `seed` only breaks ties between equally valid
/// collapse routes of a primed leg.
inline StRun simulate_st(const Scenario& scenario, const std::string& source,
                         const std::string& detector, SplitterMode mode, std::uint64_t seed = 0) {
  StRun run;
  run.forward_scenario = effective(scenario);
  validate(run.forward_scenario);
  if (!std::holds_alternative<Source>(run.forward_scenario.at(source).kind))
    throw ConfigurationError(source + " is not a source");
  if (!std::holds_alternative<Detector>(run.forward_scenario.at(detector).kind))
    throw ConfigurationError(detector + " is not a detector");
  if (!run.forward_scenario.detections.contains(detector))
    throw ConfigurationError(detector + " has no final boundary time");
  run.backward_scenario = time_reverse(run.forward_scenario);

  SplitMix64 rng = SplitMix64::stream(seed, 0);
  run.forward = detail::st_leg(run.forward_scenario, source, detector, mode, rng);
  run.backward = detail::st_leg(run.backward_scenario, detector, source, mode, rng);

  const auto& fwd = run.forward.propagation;
  for (const auto& p : fwd.absorbed_at(detector)) run.scale += p.amplitude;
  const double weight = gram_norm(fwd.absorbed_at(detector));

  const auto [fu, fl] = detail::arm_amplitudes(fwd, run.forward_scenario);
  const auto [bu, bl] = detail::arm_amplitudes(run.backward.propagation, run.backward_scenario);
  const double a = std::abs(run.scale);
  run.upper_mass = a * std::abs(fu) * std::abs(bu);
  run.lower_mass = a * std::abs(fl) * std::abs(bl);

  auto& rec = run.record;
  rec.source = source;
  rec.detector = detector;
  rec.theory = Theory::ST;
  rec.mode = mode;
  rec.seed = seed;
  rec.weight = weight;
  rec.arm_support = arm_support(run.upper_mass, run.lower_mass);
  rec.boundary_time = run.forward_scenario.detections.at(detector);
  for (const auto& id : run.forward_scenario.detectors()) {
    Complex sum{};
    for (const auto& p : fwd.absorbed_at(id)) sum += p.amplitude;
    rec.amplitudes[id] = sum;
  }
  for (const auto& c : fwd.choices) rec.branch_choices.push_back(c);
  for (const auto& c : run.backward.propagation.choices) rec.branch_choices.push_back(c);
  return run;
}

inline TransitionRecord run_st(const Scenario& scenario, const std::string& source,
                               const std::string& detector, SplitterMode mode,
                               std::uint64_t seed = 0) {
  return simulate_st(scenario, source, detector, mode, seed).record;
}

}  // namespace mzi
