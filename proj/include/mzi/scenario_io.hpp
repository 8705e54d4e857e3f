#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "scenario.hpp"

namespace mzi {

using json = nlohmann::json;

inline constexpr int kScenarioFormat = 1;

namespace detail {

inline json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
inline Vec2 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigurationError("expected a 2-vector");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

// +/-inf have no JSON spelling; they are written as null.
inline json bound_json(double v) { return std::isinf(v) ? json(nullptr) : json(v); }
inline double bound_from(const json& j, double inf_sign) {
  return j.is_null() ? inf_sign * std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json interval_json(const PresenceInterval& iv) {
  json j = json::array({bound_json(iv.on), bound_json(iv.off)});
  if (!(iv.on_closed && !iv.off_closed)) {
    std::string br;
    br += iv.on_closed ? '[' : '(';
    br += iv.off_closed ? ']' : ')';
    j.push_back(br);
  }
  return j;
}

inline PresenceInterval interval_from(const json& j) {
  if (!j.is_array() || j.size() < 2 || j.size() > 3)
    throw ConfigurationError("presence interval must be [on, off] or [on, off, \"(]\"]");
  PresenceInterval iv{bound_from(j.at(0), -1.0), bound_from(j.at(1), 1.0)};
  if (j.size() == 3) {
    const auto br = j.at(2).get<std::string>();
    if (br.size() != 2 || (br[0] != '[' && br[0] != '(') || (br[1] != ']' && br[1] != ')'))
      throw ConfigurationError("bad interval bracket spec '" + br + "'");
    iv.on_closed = br[0] == '[';
    iv.off_closed = br[1] == ']';
  }
  return iv;
}

inline const char* arm_name(Arm a) {
  return a == Arm::Upper ? "upper" : a == Arm::Lower ? "lower" : "none";
}
inline Arm arm_from(const std::string& s) {
  if (s == "upper") return Arm::Upper;
  if (s == "lower") return Arm::Lower;
  if (s == "none") return Arm::None;
  throw ConfigurationError("unknown arm '" + s + "'");
}

}  // namespace detail

inline json to_json(const OpticalElement& e) {
  json j{{"id", e.id}, {"kind", kind_name(e.kind)}, {"position", detail::vec_json(e.position)}};
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Source>) j["emit_direction"] = detail::vec_json(k.emit_direction);
        if constexpr (std::is_same_v<K, Detector>) j["facing"] = detail::vec_json(k.facing);
        if constexpr (std::is_same_v<K, Mirror>) j["normal"] = detail::vec_json(k.normal);
        if constexpr (std::is_same_v<K, BeamSplitter>)
          j["dielectric_side"] = detail::vec_json(k.dielectric_side);
      },
      e.kind);
  json pres = json::array();
  for (const auto& iv : e.presence) pres.push_back(detail::interval_json(iv));
  j["presence"] = pres;
  if (e.arm != Arm::None) j["arm"] = detail::arm_name(e.arm);
  return j;
}

inline OpticalElement element_from_json(const json& j) {
  OpticalElement e;
  e.id = j.at("id").get<std::string>();
  e.position = detail::vec_from(j.at("position"));
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "source")
    e.kind = Source{detail::vec_from(j.at("emit_direction"))};
  else if (kind == "detector")
    e.kind = Detector{detail::vec_from(j.at("facing"))};
  else if (kind == "mirror")
    e.kind = Mirror{detail::vec_from(j.at("normal"))};
  else if (kind == "beam_splitter")
    e.kind = BeamSplitter{detail::vec_from(j.at("dielectric_side"))};
  else
    throw ConfigurationError("unknown element kind '" + kind + "'");
  if (j.contains("presence"))
    for (const auto& iv : j.at("presence")) e.presence.push_back(detail::interval_from(iv));
  if (j.contains("arm")) e.arm = detail::arm_from(j.at("arm").get<std::string>());
  return e;
}

inline json to_json(const Scenario& s) {
  json els = json::array();
  for (const auto& e : s.elements) els.push_back(to_json(e));
  json tl = json::array();
  for (const auto& ev : s.timeline)
    tl.push_back({{"t", ev.t},
                  {"action", ev.action == ChoiceAction::Insert ? "insert" : "remove"},
                  {"element", ev.element}});
  return {{"format", kScenarioFormat},
          {"name", s.name},
          {"duration", s.duration},
          {"constants",
           {{"hbar", s.constants.hbar},
            {"mass", s.constants.mass},
            {"wavenumber", s.constants.wavenumber},
            {"sigma0", s.constants.sigma0}}},
          {"elements", els},
          {"emissions", s.emissions},
          {"detections", s.detections},
          {"timeline", tl}};
}

inline Scenario scenario_from_json(const json& j) {
  try {
    if (j.value("format", 0) != kScenarioFormat)
      throw ConfigurationError("unsupported scenario format (expected \"format\": 1)");
    Scenario s;
    s.name = j.at("name").get<std::string>();
    s.duration = j.at("duration").get<double>();
    if (j.contains("constants")) {
      const auto& c = j.at("constants");
      s.constants.hbar = c.value("hbar", 1.0);
      s.constants.mass = c.value("mass", 1.0);
      s.constants.wavenumber = c.value("wavenumber", 0.4);
      s.constants.sigma0 = c.value("sigma0", 50.0);
    }
    for (const auto& e : j.at("elements")) s.elements.push_back(element_from_json(e));
    if (j.contains("emissions")) s.emissions = j.at("emissions").get<std::map<std::string, double>>();
    if (j.contains("detections"))
      s.detections = j.at("detections").get<std::map<std::string, double>>();
    if (j.contains("timeline"))
      for (const auto& ev : j.at("timeline")) {
        const auto action = ev.at("action").get<std::string>();
        if (action != "insert" && action != "remove")
          throw ConfigurationError("timeline action must be insert or remove");
        s.timeline.push_back({ev.at("t").get<double>(),
                              action == "insert" ? ChoiceAction::Insert : ChoiceAction::Remove,
                              ev.at("element").get<std::string>()});
      }
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("malformed scenario document: ") + e.what());
  }
}

/// A built-in name (BE, ME, CE, ABE, AME, ACE) or a path to a scenario file.
inline Scenario load_scenario(const std::string& name_or_path) {
  for (const auto& n : builtin_names())
    if (n == name_or_path) return builtin_scenario(n);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigurationError("no built-in scenario or readable file named '" + name_or_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigurationError("cannot parse " + name_or_path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace mzi
