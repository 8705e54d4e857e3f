#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "vec2.hpp"
#include "wavepacket.hpp"

namespace mzi {

inline constexpr double kCaptureRadius = 1.0;
inline constexpr double kUnitTolerance = 1e-12;

struct Source {
  Vec2 emit_direction;
  bool operator==(const Source&) const = default;
};
// `facing` is the direction of travel of packets it receives.
struct Detector {
  Vec2 facing;
  bool operator==(const Detector&) const = default;
};
struct Mirror {
  Vec2 normal;
  bool operator==(const Mirror&) const = default;
};
// `dielectric_side` is the unit normal on the coated face.
struct BeamSplitter {
  Vec2 dielectric_side;
  bool operator==(const BeamSplitter&) const = default;
};

using ElementKind = std::variant<Source, Detector, Mirror, BeamSplitter>;

inline const char* kind_name(const ElementKind& k) {
  constexpr const char* names[] = {"source", "detector", "mirror", "beam_splitter"};
  return names[k.index()];
}

/// Time interval with explicit endpoint closedness; [on, off) by default.
struct PresenceInterval {
  double on{0.0};
  double off{std::numeric_limits<double>::infinity()};
  bool on_closed{true};
  bool off_closed{false};

  bool contains(double t) const {
    const bool after = on_closed ? t >= on : t > on;
    const bool before = off_closed ? t <= off : t < off;
    return after && before;
  }
  // True iff the interval covers (t, t + delta) for some delta > 0.
  bool covers_right_of(double t) const { return on <= t && t < off; }
  // True iff the interval meets the open interval (a, b).
  bool meets_open(double a, double b) const { return on < b && off > a && on < off; }
  bool operator==(const PresenceInterval&) const = default;
};

enum class Arm { None, Upper, Lower };

struct OpticalElement {
  std::string id;
  ElementKind kind;
  Vec2 position;
  std::vector<PresenceInterval> presence{};
  Arm arm{Arm::None};

  bool is_boundary() const {
    return std::holds_alternative<Source>(kind) || std::holds_alternative<Detector>(kind);
  }
  bool operator==(const OpticalElement&) const = default;
};

enum class SplitterMode { AlwaysSplit, CollapseAtSplitter };

inline const char* to_string(SplitterMode m) {
  return m == SplitterMode::AlwaysSplit ? "always-split" : "collapse";
}

inline bool is_present(const OpticalElement& e, double t) {
  for (const auto& iv : e.presence)
    if (iv.contains(t)) return true;
  return false;
}

inline void validate_element(const OpticalElement& e) {
  auto unit = [&](Vec2 v, const char* what) {
    if (std::abs(norm(v) - 1.0) > kUnitTolerance)
      throw ConfigurationError(e.id + ": " + what + " is not a unit vector");
  };
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Source>) unit(k.emit_direction, "emit_direction");
        if constexpr (std::is_same_v<K, Detector>) unit(k.facing, "facing");
        if constexpr (std::is_same_v<K, Mirror>) unit(k.normal, "normal");
        if constexpr (std::is_same_v<K, BeamSplitter>) unit(k.dielectric_side, "dielectric_side");
      },
      e.kind);
  for (std::size_t i = 0; i < e.presence.size(); ++i) {
    const auto& iv = e.presence[i];
    if (!(iv.on <= iv.off)) throw ConfigurationError(e.id + ": presence interval reversed");
    if (i > 0) {
      const auto& prev = e.presence[i - 1];
      const bool touching = prev.off == iv.on && !(prev.off_closed && iv.on_closed);
      if (!(prev.off < iv.on || touching))
        throw ConfigurationError(e.id + ": presence intervals must be sorted and disjoint");
    }
  }
}

struct SplitterFactors {
  Complex reflect;
  Complex transmit;
  bool dielectric_hit;
};

/// Reflection off the coated face picks up a pi phase; the glass face and
/// transmission do not.
inline SplitterFactors splitter_factors(const BeamSplitter& s, Vec2 incoming) {
  const double c = dot(incoming, s.dielectric_side);
  if (std::abs(c) < 1e-9) throw GeometryError("grazing incidence on beam-splitter");
  const double h = std::numbers::sqrt2 / 2.0;
  const bool dielectric = c < 0.0;
  return {Complex{dielectric ? -h : h, 0.0}, Complex{h, 0.0}, dielectric};
}

struct ScatterResult {
  std::vector<GaussianPacket> children;
  std::vector<Interaction> kinds;
  bool boundary{false};  // reached a source or detector
  bool passed{false};    // element absent: no interaction
};

namespace detail {
inline GaussianPacket mirror_child(const GaussianPacket& p, const OpticalElement& e, Vec2 n,
                                   Complex factor, Interaction kind, double t_hit) {
  GaussianPacket c = p;
  c.amplitude = p.amplitude * factor;
  c.origin = reflect_point(p.origin, e.position, n);
  c.direction = normalized(reflect_direction(p.direction, n));
  c.lineage.push_back({e.id, kind, t_hit});
  return c;
}
inline GaussianPacket transmitted_child(const GaussianPacket& p, const OpticalElement& e,
                                        Complex factor, double t_hit) {
  GaussianPacket c = p;
  c.amplitude = p.amplitude * factor;
  c.lineage.push_back({e.id, Interaction::Transmit, t_hit});
  return c;
}
}  // namespace detail

/// Scatter a packet whose centre sits on `element` at `t_hit`.
///
/// `choose` is called only for a present beam-splitter in CollapseAtSplitter mode
/// and must return 0 (reflect) or 1 (transmit).
template <class Chooser>
ScatterResult scatter(const GaussianPacket& packet, const OpticalElement& element, double t_hit,
                      SplitterMode mode, Chooser&& choose) {
  if (norm(center_at(packet, t_hit) - element.position) > kCaptureRadius)
    throw PreconditionError("scatter: packet is not at " + element.id);
  ScatterResult out;
  if (element.is_boundary()) {
    out.boundary = true;
    return out;
  }
  if (!is_present(element, t_hit)) {
    out.passed = true;
    out.children.push_back(packet);
    return out;
  }
  if (const auto* m = std::get_if<Mirror>(&element.kind)) {
    out.children.push_back(
        detail::mirror_child(packet, element, m->normal, Complex{-1.0, 0.0}, Interaction::Reflect, t_hit));
    out.kinds.push_back(Interaction::Reflect);
    return out;
  }
  const auto& bs = std::get<BeamSplitter>(element.kind);
  const auto f = splitter_factors(bs, packet.direction);
  if (mode == SplitterMode::AlwaysSplit) {
    out.children.push_back(detail::mirror_child(packet, element, bs.dielectric_side, f.reflect,
                                                Interaction::Reflect, t_hit));
    out.kinds.push_back(Interaction::Reflect);
    out.children.push_back(detail::transmitted_child(packet, element, f.transmit, t_hit));
    out.kinds.push_back(Interaction::Transmit);
    return out;
  }
  // Collapse: the whole particle goes one way, keeping only the factor's phase.
  const int pick = static_cast<int>(choose());
  if (pick == 0) {
    out.children.push_back(detail::mirror_child(packet, element, bs.dielectric_side,
                                                f.reflect / std::abs(f.reflect),
                                                Interaction::Reflect, t_hit));
    out.kinds.push_back(Interaction::Reflect);
  } else {
    out.children.push_back(detail::transmitted_child(packet, element,
                                                     f.transmit / std::abs(f.transmit), t_hit));
    out.kinds.push_back(Interaction::Transmit);
  }
  return out;
}

inline ScatterResult scatter(const GaussianPacket& packet, const OpticalElement& element,
                             double t_hit, SplitterMode mode, SplitMix64& rng) {
  return scatter(packet, element, t_hit, mode, [&] { return rng.uniform() < 0.5 ? 0 : 1; });
}

/// Earliest time after the packet's last interaction at which its centre
/// reaches the element, if the ray passes within the capture radius.
inline std::optional<double> arrival_time(const GaussianPacket& p, const OpticalElement& e) {
  const double v = p.constants.group_speed();
  if (v <= 0.0) return std::nullopt;
  const Vec2 rel = e.position - p.origin;
  const double along = dot(rel, p.direction);
  const Vec2 miss = rel - p.direction * along;
  if (norm(miss) > kCaptureRadius) return std::nullopt;
  const double t = p.birth_time + along / v;
  if (t < p.birth_time) return std::nullopt;
  if (!p.lineage.empty() && !(t > p.lineage.back().time + 1e-9)) return std::nullopt;
  return t;
}

struct ChainStep {
  const OpticalElement* element;
  Interaction interaction;
};

/// Product of the element factors along a path from a source to a detector,
/// walking the ray to check that each element lies ahead of the previous one.
inline Complex transfer_amplitude(std::span<const ChainStep> chain) {
  if (chain.size() < 2) throw ConfigurationError("chain needs a source and a detector");
  const auto* src = std::get_if<Source>(&chain.front().element->kind);
  if (!src) throw ConfigurationError("chain must start at a source");
  if (!std::holds_alternative<Detector>(chain.back().element->kind))
    throw ConfigurationError("chain must end at a detector");
  Complex amp{1.0, 0.0};
  Vec2 pos = chain.front().element->position;
  Vec2 dir = src->emit_direction;
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const auto& e = *chain[i].element;
    const Vec2 rel = e.position - pos;
    const double along = dot(rel, dir);
    if (along <= 0.0 || norm(rel - dir * along) > kCaptureRadius)
      throw ConfigurationError("chain is inconsistent: " + e.id + " is not on the ray");
    pos = e.position;
    const bool last = i + 1 == chain.size();
    if (last) break;
    if (const auto* m = std::get_if<Mirror>(&e.kind)) {
      amp *= -1.0;
      dir = reflect_direction(dir, m->normal);
    } else if (const auto* bs = std::get_if<BeamSplitter>(&e.kind)) {
      const auto f = splitter_factors(*bs, dir);
      if (chain[i].interaction == Interaction::Reflect) {
        amp *= f.reflect;
        dir = reflect_direction(dir, bs->dielectric_side);
      } else if (chain[i].interaction == Interaction::Transmit) {
        amp *= f.transmit;
      } else {
        throw ConfigurationError("chain is inconsistent: splitter must reflect or transmit");
      }
    } else {
      throw ConfigurationError("chain is inconsistent: boundary element " + e.id + " mid-path");
    }
  }
  return amp;
}

}  // namespace mzi
