#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "optics.hpp"

namespace mzi {

enum class ChoiceAction { Insert, Remove };

struct TimelineEvent {
  double t;
  ChoiceAction action;
  std::string element;
  bool operator==(const TimelineEvent&) const = default;
};

/// Element layout plus boundary schedule and a choice timeline.
///
/// `emissions` gives the initial boundary time of each source, `detections`
/// the final boundary time of each detector. Timeline events override the base
/// presence intervals from their time onwards (last event wins).
struct Scenario {
  std::string name;
  double duration{8000.0};
  std::vector<OpticalElement> elements;
  std::map<std::string, double> emissions;
  std::map<std::string, double> detections;
  std::vector<TimelineEvent> timeline;
  PhysicalConstants constants{};

  const OpticalElement* find(std::string_view id) const {
    for (const auto& e : elements)
      if (e.id == id) return &e;
    return nullptr;
  }
  const OpticalElement& at(std::string_view id) const {
    if (const auto* e = find(id)) return *e;
    throw ConfigurationError("scenario " + name + " has no element " + std::string(id));
  }
  template <class K>
  std::vector<std::string> ids_of() const {
    std::vector<std::string> out;
    for (const auto& e : elements)
      if (std::holds_alternative<K>(e.kind)) out.push_back(e.id);
    return out;
  }
  std::vector<std::string> sources() const { return ids_of<Source>(); }
  std::vector<std::string> detectors() const { return ids_of<Detector>(); }

  bool operator==(const Scenario&) const = default;
};

namespace detail {

// Presence of one element as intervals after applying its timeline events.
inline std::vector<PresenceInterval> bake_presence(const OpticalElement& e,
                                                   const std::vector<TimelineEvent>& timeline) {
  std::vector<TimelineEvent> events;
  for (const auto& ev : timeline)
    if (ev.element == e.id) events.push_back(ev);
  if (events.empty()) return e.presence;
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  // Events at equal times: the last one listed wins.
  std::vector<TimelineEvent> uniq;
  for (const auto& ev : events) {
    if (!uniq.empty() && uniq.back().t == ev.t)
      uniq.back() = ev;
    else
      uniq.push_back(ev);
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<PresenceInterval> out;
  auto push = [&](PresenceInterval iv) {
    if (iv.on > iv.off || (iv.on == iv.off && !(iv.on_closed && iv.off_closed))) return;
    if (!out.empty() && out.back().off == iv.on && (out.back().off_closed || iv.on_closed)) {
      out.back().off = iv.off;
      out.back().off_closed = iv.off_closed;
      return;
    }
    out.push_back(iv);
  };
  const double first = uniq.front().t;
  for (auto iv : e.presence) {
    if (iv.on >= first) continue;
    if (iv.off > first || (iv.off == first && iv.off_closed)) {
      iv.off = first;
      iv.off_closed = false;
    }
    push(iv);
  }
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    if (uniq[i].action != ChoiceAction::Insert) continue;
    const double end = i + 1 < uniq.size() ? uniq[i + 1].t : inf;
    push({uniq[i].t, end, true, false});
  }
  return out;
}

inline PresenceInterval reverse_interval(const PresenceInterval& iv, double T) {
  return {T - iv.off, T - iv.on, iv.off_closed, iv.on_closed};
}

}  // namespace detail

inline void validate(const Scenario& s) {
  if (!(s.duration > 0.0) || !std::isfinite(s.duration))
    throw ConfigurationError("scenario duration must be positive");
  s.constants.validate();
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    validate_element(s.elements[i]);
    for (std::size_t j = 0; j < i; ++j) {
      if (s.elements[i].id == s.elements[j].id)
        throw ConfigurationError("duplicate element id " + s.elements[i].id);
      if (s.elements[i].position == s.elements[j].position)
        throw ConfigurationError("elements " + s.elements[j].id + " and " + s.elements[i].id +
                                 " share a position");
    }
  }
  for (const auto& [id, t] : s.emissions)
    if (!std::holds_alternative<Source>(s.at(id).kind))
      throw ConfigurationError(id + " has an emission time but is not a source");
  for (const auto& [id, t] : s.detections)
    if (!std::holds_alternative<Detector>(s.at(id).kind))
      throw ConfigurationError(id + " has a detection time but is not a detector");
  for (const auto& ev : s.timeline) {
    if (!(ev.t > 0.0 && ev.t < s.duration))
      throw ConfigurationError("choice time must lie strictly inside (0, duration)");
    if (s.at(ev.element).is_boundary())
      throw ConfigurationError("choices apply to mirrors and beam-splitters, not " + ev.element);
  }
}

/// The same scenario with its timeline folded into presence intervals.
inline Scenario effective(const Scenario& s) {
  if (s.timeline.empty()) return s;
  Scenario out = s;
  for (auto& e : out.elements) e.presence = detail::bake_presence(e, s.timeline);
  out.timeline.clear();
  return out;
}

/// Run the scenario backwards: t -> T - t, sources and detectors swap roles.
inline Scenario time_reverse(const Scenario& scenario) {
  const Scenario s = effective(scenario);
  const double T = s.duration;
  Scenario out = s;
  for (auto& e : out.elements) {
    std::vector<PresenceInterval> rev;
    for (auto it = e.presence.rbegin(); it != e.presence.rend(); ++it)
      rev.push_back(detail::reverse_interval(*it, T));
    e.presence = std::move(rev);
    if (const auto* src = std::get_if<Source>(&e.kind))
      e.kind = Detector{-src->emit_direction};
    else if (const auto* det = std::get_if<Detector>(&e.kind))
      e.kind = Source{-det->facing};
  }
  out.emissions.clear();
  out.detections.clear();
  for (const auto& [id, t] : s.detections) out.emissions[id] = T - t;
  for (const auto& [id, t] : s.emissions) out.detections[id] = T - t;
  return out;
}

/// The interferometer layout shared by every built-in experiment.
///
/// Every segment is 800 units long, so at v = k/m = 0.4 a packet meets B1 at
/// t=2000, the mirrors at 4000, B2 at 6000 and the detectors at 8000.
inline Scenario mzi_layout(std::string name, const PhysicalConstants& c = {}) {
  const double h = std::numbers::sqrt2 / 2.0;
  const std::vector<PresenceInterval> always{{0.0, 8000.0}};
  Scenario s;
  s.name = std::move(name);
  s.duration = 8000.0;
  s.constants = c;
  s.elements = {
      {"S1", Source{{1.0, 0.0}}, {-800.0, 0.0}},
      {"S2", Source{{0.0, 1.0}}, {0.0, -800.0}},
      // Coating faces S1: S1 hits the dielectric, S2 the glass.
      {"B1", BeamSplitter{{-h, h}}, {0.0, 0.0}, always},
      {"M1", Mirror{{h, -h}}, {0.0, 800.0}, always, Arm::Upper},
      {"M2", Mirror{{h, -h}}, {800.0, 0.0}, always, Arm::Lower},
      // Coating faces the lower arm: the upper-arm packet hits the glass.
      {"B2", BeamSplitter{{h, -h}}, {800.0, 800.0}, always},
      {"D1", Detector{{1.0, 0.0}}, {1600.0, 800.0}},
      {"D2", Detector{{0.0, 1.0}}, {800.0, 1600.0}},
  };
  s.emissions = {{"S1", 0.0}, {"S2", 0.0}};
  s.detections = {{"D1", 8000.0}, {"D2", 8000.0}};
  return s;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"BE", "ME", "CE", "ABE", "AME", "ACE"};
  return names;
}

inline Scenario builtin_scenario(std::string_view name) {
  Scenario s = mzi_layout(std::string(name));
  auto presence = [&](const char* id) -> std::vector<PresenceInterval>& {
    for (auto& e : s.elements)
      if (e.id == id) return e.presence;
    throw ConfigurationError("layout lacks element");
  };
  if (name == "BE" || name == "ABE") return s;
  if (name == "ME") {
    presence("B2").clear();
    return s;
  }
  if (name == "CE") {
    presence("B2") = {{5000.0, 8000.0}};
    return s;
  }
  if (name == "AME") {
    presence("B1").clear();
    return s;
  }
  if (name == "ACE") {
    presence("B1") = {{0.0, 3000.0}};
    return s;
  }
  throw ConfigurationError("unknown built-in scenario '" + std::string(name) +
                           "' (expected BE, ME, CE, ABE, AME or ACE)");
}

}  // namespace mzi
