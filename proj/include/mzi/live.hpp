#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "engine.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "scenario_io.hpp"
#include "wavepacket.hpp"

namespace mzi::live {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kDefaultCadence = 10.0;
inline constexpr double kDefaultRate = 1000.0;  // sim units per wall second
inline constexpr int kDefaultGridSide = 64;
inline constexpr int kMaxGridSide = 128;
inline constexpr std::size_t kEventRing = 4096;

struct SessionConfig {
  Scenario scenario;
  Theory theory{Theory::CT};
  SplitterMode mode{SplitterMode::AlwaysSplit};
  std::uint64_t seed{0};
  double cadence{kDefaultCadence};
  double rate{kDefaultRate};
  int grid{kDefaultGridSide};
  SourcePolicy policy{};

  bool operator==(const SessionConfig&) const = default;
};

inline void validate(const SessionConfig& c) {
  mzi::validate(c.scenario);
  if (c.theory == Theory::ST)
    throw ConfigurationError("live sessions run ct or at; st needs the whole future timeline");
  if (!(c.cadence > 0.0) || !std::isfinite(c.cadence)) throw ConfigurationError("cadence must be positive");
  if (!(c.rate > 0.0) || !std::isfinite(c.rate)) throw ConfigurationError("rate must be positive");
  if (c.grid < 2 || c.grid > kMaxGridSide)
    throw ConfigurationError("grid side must be in [2, " + std::to_string(kMaxGridSide) + "]");
  const auto starts = c.theory == Theory::AT ? c.scenario.detectors() : c.scenario.sources();
  if (starts.empty()) throw ConfigurationError("scenario has nothing to launch from");
  if (!c.policy.uniform() && std::find(starts.begin(), starts.end(), c.policy.fixed) == starts.end())
    throw ConfigurationError("policy element " + c.policy.fixed + " cannot launch a " +
                             to_string(c.theory) + " run");
}

inline json to_json(const SessionConfig& c) {
  return {{"scenario", mzi::to_json(c.scenario)},
          {"theory", to_string(c.theory)},
          {"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"cadence", c.cadence},
          {"rate", c.rate},
          {"grid", c.grid},
          {"policy", c.policy.label()}};
}

/// `scenario` may be a built-in name, a file path or an inline scenario object.
inline SessionConfig config_from_json(const json& j) {
  try {
    if (!j.is_object()) throw ConfigurationError("session config must be a JSON object");
    SessionConfig c;
    const auto& s = j.contains("scenario") ? j.at("scenario") : json("BE");
    c.scenario = s.is_object() ? scenario_from_json(s) : load_scenario(s.get<std::string>());
    if (j.contains("theory")) c.theory = theory_from(j.at("theory").get<std::string>());
    if (j.contains("mode")) c.mode = mode_from(j.at("mode").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cadence")) c.cadence = j.at("cadence").get<double>();
    if (j.contains("rate")) c.rate = j.at("rate").get<double>();
    if (j.contains("grid")) c.grid = j.at("grid").get<int>();
    if (j.contains("policy")) c.policy = SourcePolicy::parse(j.at("policy").get<std::string>());
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad session config: ") + e.what());
  }
}

enum class Phase { Idle, InFlight, Detected };

inline const char* to_string(Phase p) {
  return p == Phase::Idle ? "idle" : p == Phase::InFlight ? "in-flight" : "detected";
}

struct Command {
  std::string cmd;
  std::string element{};
  std::optional<double> rate{};
  std::string id{};  // client idempotency key

  bool operator==(const Command&) const = default;
};

inline json to_json(const Command& c) {
  json j{{"cmd", c.cmd}};
  if (!c.element.empty()) j["element"] = c.element;
  if (c.rate) j["rate"] = *c.rate;
  if (!c.id.empty()) j["id"] = c.id;
  return j;
}

inline Command command_from_json(const json& j) {
  try {
    Command c;
    c.cmd = j.at("cmd").get<std::string>();
    if (j.contains("element")) c.element = j.at("element").get<std::string>();
    if (j.contains("rate")) c.rate = j.at("rate").get<double>();
    if (j.contains("id")) c.id = j.at("id").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad command: ") + e.what());
  }
}

struct Ack {
  bool accepted{true};
  std::string reason{};
  std::uint64_t seq{0};  // sequence number of the event this command produced
};

struct Event {
  std::uint64_t seq{0};
  std::string type;
  double clock{0.0};
  json payload;
};

inline json to_json(const Event& e) {
  return {{"protocol", kProtocolVersion}, {"seq", e.seq}, {"type", e.type}, {"clock", e.clock},
          {"payload", e.payload}};
}

/// One command as applied: `tick` counts clock ticks processed before it, which
/// is all a replay needs to reproduce its timing exactly.
struct LogEntry {
  std::uint64_t tick{0};
  double clock{0.0};
  double run_clock{0.0};
  Command command;
  bool accepted{true};
  std::string reason{};

  bool operator==(const LogEntry&) const = default;
};

struct Detection {
  std::uint64_t run{0};
  std::string source;
  std::string detector;
  double clock{0.0};
  bool operator==(const Detection&) const = default;
};

struct Scoreboard {
  std::vector<Pair> pairs;
  std::map<Pair, std::uint64_t> counts;
  std::uint64_t total{0};
  bool operator==(const Scoreboard&) const = default;
};

inline json to_json(const Scoreboard& s) {
  json rows = json::array();
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const auto& p = s.pairs[i];
    const auto n = s.counts.at(p);
    rows.push_back({{"ensemble", i + 1},
                    {"source", p.first},
                    {"detector", p.second},
                    {"count", n},
                    {"probability", s.total ? static_cast<double>(n) / static_cast<double>(s.total) : 0.0}});
  }
  return {{"runs", s.total}, {"ensembles", rows}};
}

/// A steerable run loop. Not thread-safe on its own; SessionManager serializes access.
///
/// The clock is the session's sim clock and never decreases; `run_clock` is the
/// time since the current run's emission (the backward clock for AT sessions),
/// which is the clock choices are made in. While idle, insert/remove set the
/// standing apparatus used from clock 0 of the next run; while in flight they
/// append choice events to the running scenario and the run is recomputed from
/// the same rng stream, so everything before the choice is unchanged.
class Session {
 public:
  Session(std::string id, SessionConfig config) : id_(std::move(id)), config_(std::move(config)) {
    validate(config_);
    base_ = effective(config_.scenario);
    board_.pairs = ensemble_pairs(base_);
    for (const auto& p : board_.pairs) board_.counts[p] = 0;
    emit("created", {{"id", id_}, {"config", to_json(config_)}});
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  double clock() const { return clock_; }
  double run_clock() const { return phase_ == Phase::Idle ? 0.0 : clock_ - run_origin_; }
  bool paused() const { return paused_; }
  double rate() const { return rate_; }
  std::uint64_t runs_started() const { return started_; }
  std::uint64_t ticks() const { return ticks_; }
  const Scoreboard& scoreboard() const { return board_; }
  const std::vector<Detection>& detections() const { return detections_; }
  const std::vector<LogEntry>& log() const { return log_; }
  std::uint64_t next_seq() const { return seq_; }

  /// The scenario of the current run in its own clock, or the standing apparatus when idle.
  Scenario apparatus() const { return phase_ == Phase::Idle ? standing() : current_; }

  std::map<std::string, bool> presence() const {
    const Scenario s = effective(apparatus());
    const double t = run_clock();
    std::map<std::string, bool> out;
    for (const auto& e : s.elements)
      if (!e.is_boundary()) out[e.id] = is_present(e, t);
    return out;
  }

  std::vector<GaussianPacket> packets() const {
    if (phase_ == Phase::Idle || !run_) return {};
    std::vector<GaussianPacket> out;
    const double t = run_clock();
    for (const auto& p : run_->packets_at(t))
      if (t >= p.birth_time) out.push_back(p);
    return out;
  }

  Ack command(const Command& c) {
    if (!c.id.empty()) {
      if (const auto it = seen_.find(c.id); it != seen_.end()) return it->second;
    }
    LogEntry entry{ticks_, clock_, run_clock(), c, true, {}};
    Ack ack;
    try {
      ack.reason = apply(c);
    } catch (const Error& e) {
      ack.accepted = false;
      ack.reason = e.what();
    }
    entry.accepted = ack.accepted;
    entry.reason = ack.reason;
    log_.push_back(entry);
    json payload = to_json(c);
    payload["accepted"] = ack.accepted;
    if (!ack.reason.empty()) payload["reason"] = ack.reason;
    payload["phase"] = to_string(phase_);
    payload["run_clock"] = run_clock();
    ack.seq = emit(ack.accepted ? "command" : "rejected", payload);
    if (!c.id.empty()) seen_[c.id] = ack;
    return ack;
  }

  /// Advance one cadence step (or leave the detected phase).
  void tick() {
    ++ticks_;
    if (phase_ == Phase::Detected) {
      phase_ = Phase::Idle;
      emit_state();
      return;
    }
    if (phase_ != Phase::InFlight || paused_) {
      emit_state();
      return;
    }
    clock_ += config_.cadence;
    const double rc = clock_ - run_origin_;
    if (rc + kEventTolerance >= run_->record.boundary_time) {
      const auto& rec = run_->record;
      Detection d{run_index_, pair_.first, pair_.second, clock_};
      detections_.push_back(d);
      board_.counts[pair_] += 1;
      board_.total += 1;
      phase_ = Phase::Detected;
      emit("detection", {{"run", d.run},
                         {"source", d.source},
                         {"detector", d.detector},
                         {"boundary", config_.theory == Theory::AT ? d.source : d.detector},
                         {"run_clock", rc},
                         {"boundary_time", rec.boundary_time},
                         {"scoreboard", to_json(board_)}});
    }
    emit_state();
  }

  /// A state event that changes nothing (idle keep-alive).
  void heartbeat() { emit_state("heartbeat"); }

  /// Events with seq >= since still held in the ring.
  std::vector<Event> events_since(std::uint64_t since) const {
    std::vector<Event> out;
    for (const auto& e : ring_)
      if (e.seq >= since) out.push_back(e);
    return out;
  }
  std::uint64_t oldest_seq() const { return ring_.empty() ? seq_ : ring_.front().seq; }

  json snapshot() const {
    json centers = json::array();
    const double t = run_clock();
    for (const auto& p : packets()) {
      const Vec2 c = center_at(p, std::max(t, p.birth_time));
      centers.push_back({{"x", c.x}, {"y", c.y}, {"amplitude", std::abs(p.amplitude)}});
    }
    const int n = config_.grid;
    GridSpec g = default_grid_for(base_, n);
    const auto field = density_grid(packets(), g, t);
    json grid{{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min},
              {"y_max", g.y_max}, {"nx", g.nx},       {"ny", g.ny}};
    grid["values"] = field.values;
    json pres = json::object();
    for (const auto& [id, on] : presence()) pres[id] = on;
    return {{"phase", to_string(phase_)},
            {"run", run_index_},
            {"runs_started", started_},
            {"run_clock", run_clock()},
            {"paused", paused_},
            {"rate", rate_},
            {"presence", pres},
            {"packets", centers},
            {"grid", grid},
            {"scoreboard", to_json(board_)}};
  }

 private:
  static GridSpec default_grid_for(const Scenario& s, int n) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& e : s.elements) {
      x0 = std::min(x0, e.position.x);
      x1 = std::max(x1, e.position.x);
      y0 = std::min(y0, e.position.y);
      y1 = std::max(y1, e.position.y);
    }
    const double pad = 4.0 * s.constants.sigma0;
    return {x0 - pad, x1 + pad, y0 - pad, y1 + pad, n, n};
  }

  Scenario standing() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Scenario s = base_;
    for (auto& e : s.elements) {
      const auto it = overrides_.find(e.id);
      if (it == overrides_.end()) continue;
      e.presence.clear();
      if (it->second) e.presence.push_back({-inf, inf});
    }
    return config_.theory == Theory::AT ? time_reverse(s) : s;
  }

  std::string apply(const Command& c) {
    if (c.cmd == "start_run") return start_run();
    if (c.cmd == "pause") {
      paused_ = true;
      return {};
    }
    if (c.cmd == "resume") {
      paused_ = false;
      return {};
    }
    if (c.cmd == "set_rate") {
      if (!c.rate || !(*c.rate > 0.0) || !std::isfinite(*c.rate))
        throw ConfigurationError("set_rate needs a positive rate");
      rate_ = *c.rate;
      return {};
    }
    if (c.cmd == "reset_scoreboard") {
      for (auto& [p, n] : board_.counts) n = 0;
      board_.total = 0;
      return {};
    }
    if (c.cmd == "insert" || c.cmd == "remove") return choose(c.cmd == "insert", c.element);
    throw ConfigurationError("unknown command " + c.cmd);
  }

  std::string start_run() {
    if (phase_ == Phase::InFlight) throw ConfigurationError("a run is already in flight");
    current_ = standing();
    const auto starts = config_.policy.uniform()
                            ? (config_.theory == Theory::AT ? base_.detectors() : base_.sources())
                            : std::vector<std::string>{config_.policy.fixed};
    // Same stream layout as run_ensemble: pick the start, then hand the stream to the run.
    SplitMix64 rng = SplitMix64::stream(config_.seed, started_);
    emitter_ = starts.size() == 1 ? starts.front() : starts[rng.below(starts.size())];
    rng_ = rng;
    run_index_ = started_++;
    recompute();
    run_origin_ = clock_;
    phase_ = Phase::InFlight;
    return {};
  }

  void recompute() {
    SplitMix64 rng = rng_;
    run_ = std::make_unique<CollapseRun>(simulate_ct(current_, emitter_, config_.mode, rng));
    const auto& rec = run_->record;
    pair_ = config_.theory == Theory::AT ? Pair{rec.detector, emitter_} : Pair{emitter_, rec.detector};
  }

  std::string choose(bool insert, const std::string& element) {
    const auto* e = base_.find(element);
    if (!e) throw ConfigurationError("unknown element " + element);
    if (e->is_boundary()) throw ConfigurationError(element + " is a boundary element and cannot be moved");
    if (phase_ == Phase::Idle) {
      overrides_[element] = insert;
      return {};
    }
    if (phase_ == Phase::Detected) throw ConfigurationError("choice window closed");
    const double t = run_clock();
    const auto& el = current_.at(element);
    for (const auto& p : packets())
      if (norm(center_at(p, std::max(t, p.birth_time)) - el.position) <= kCaptureRadius + kEventTolerance)
        throw ConfigurationError("choice window closed");
    if (t <= 0.0) {
      // Nothing has moved yet: same as changing the standing apparatus.
      overrides_[element] = insert;
      current_ = standing();
    } else {
      if (t >= current_.duration) throw ConfigurationError("choice window closed");
      current_.timeline.push_back({t, insert ? ChoiceAction::Insert : ChoiceAction::Remove, element});
    }
    recompute();
    return {};
  }

  void emit_state(const char* type = "state") { emit(type, snapshot()); }

  std::uint64_t emit(std::string type, json payload) {
    Event e{seq_++, std::move(type), clock_, std::move(payload)};
    ring_.push_back(std::move(e));
    while (ring_.size() > kEventRing) ring_.pop_front();
    return seq_ - 1;
  }

  std::string id_;
  SessionConfig config_;
  Scenario base_;
  std::map<std::string, bool> overrides_;
  Scenario current_;
  std::unique_ptr<CollapseRun> run_;
  std::string emitter_;
  SplitMix64 rng_{0};
  Pair pair_;
  Phase phase_{Phase::Idle};
  bool paused_{false};
  double rate_{config_.rate};
  double clock_{0.0};
  double run_origin_{0.0};
  std::uint64_t started_{0};
  std::uint64_t run_index_{0};
  std::uint64_t ticks_{0};
  std::uint64_t seq_{0};
  std::deque<Event> ring_;
  Scoreboard board_;
  std::vector<Detection> detections_;
  std::vector<LogEntry> log_;
  std::map<std::string, Ack> seen_;
};

// ---------------------------------------------------------------------------
// Exportable session log

struct SessionLog {
  SessionConfig config;
  std::vector<LogEntry> entries;
  std::uint64_t ticks{0};
  std::vector<Detection> detections;
  Scoreboard scoreboard;
};

inline SessionLog export_log(const Session& s) {
  return {s.config(), s.log(), s.ticks(), s.detections(), s.scoreboard()};
}

inline json to_json(const SessionLog& l) {
  json entries = json::array();
  for (const auto& e : l.entries) {
    json j{{"tick", e.tick}, {"clock", e.clock}, {"run_clock", e.run_clock},
           {"command", to_json(e.command)}, {"accepted", e.accepted}};
    if (!e.reason.empty()) j["reason"] = e.reason;
    entries.push_back(j);
  }
  json dets = json::array();
  for (const auto& d : l.detections)
    dets.push_back({{"run", d.run}, {"source", d.source}, {"detector", d.detector}, {"clock", d.clock}});
  return {{"protocol", kProtocolVersion}, {"config", to_json(l.config)}, {"entries", entries},
          {"ticks", l.ticks}, {"detections", dets}, {"scoreboard", to_json(l.scoreboard)}};
}

inline SessionLog log_from_json(const json& j) {
  try {
    if (j.at("protocol").get<int>() != kProtocolVersion)
      throw ConfigurationError("unsupported session log protocol");
    SessionLog l;
    l.config = config_from_json(j.at("config"));
    for (const auto& e : j.at("entries"))
      l.entries.push_back({e.at("tick").get<std::uint64_t>(), e.at("clock").get<double>(),
                           e.at("run_clock").get<double>(), command_from_json(e.at("command")),
                           e.at("accepted").get<bool>(), e.value("reason", std::string{})});
    l.ticks = j.at("ticks").get<std::uint64_t>();
    for (const auto& d : j.at("detections"))
      l.detections.push_back({d.at("run").get<std::uint64_t>(), d.at("source").get<std::string>(),
                              d.at("detector").get<std::string>(), d.at("clock").get<double>()});
    l.scoreboard.pairs = ensemble_pairs(effective(l.config.scenario));
    for (const auto& row : j.at("scoreboard").at("ensembles"))
      l.scoreboard.counts[{row.at("source").get<std::string>(), row.at("detector").get<std::string>()}] =
          row.at("count").get<std::uint64_t>();
    l.scoreboard.total = j.at("scoreboard").at("runs").get<std::uint64_t>();
    return l;
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad session log: ") + e.what());
  }
}

/// Re-run a log on a fresh session; throws MismatchError at the first
/// acceptance or detection that differs.
inline std::unique_ptr<Session> replay(const SessionLog& log) {
  auto s = std::make_unique<Session>("replay", log.config);
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    const auto& e = log.entries[i];
    while (s->ticks() < e.tick) s->tick();
    Command c = e.command;
    c.id.clear();  // idempotency keys only dedupe network retries
    const auto ack = s->command(c);
    if (ack.accepted != e.accepted || s->clock() != e.clock)
      throw MismatchError("session replay diverges at log entry " + std::to_string(i), i);
  }
  while (s->ticks() < log.ticks) s->tick();
  const auto& got = s->detections();
  const auto n = std::min(got.size(), log.detections.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!(got[i] == log.detections[i]))
      throw MismatchError("session replay diverges at run " + std::to_string(i), i);
  if (got.size() != log.detections.size() || !(s->scoreboard() == log.scoreboard))
    throw MismatchError("session replay diverges at run " + std::to_string(n), n);
  return s;
}

// ---------------------------------------------------------------------------
// Session registry

/// A session plus its lock; the wakeup signals new events to stream readers.
struct SessionSlot {
  explicit SessionSlot(std::unique_ptr<Session> s, std::string token)
      : session(std::move(s)), control_token(std::move(token)) {}
  std::mutex mutex;
  std::condition_variable wakeup;
  std::unique_ptr<Session> session;
  std::string control_token;
  double tick_debt{0.0};       // fractional ticks owed by the wall clock
  double heartbeat_wait{0.0};  // wall seconds since the last idle heartbeat
};

class SessionManager {
 public:
  explicit SessionManager(std::uint64_t token_seed = 0x5eed) : token_rng_(token_seed) {}

  /// Server-assigned id and a control token for the single writer.
  std::pair<std::string, std::string> create(const SessionConfig& config) {
    std::lock_guard lock(mutex_);
    const std::string id = "s" + std::to_string(++counter_);
    char tok[17];
    std::snprintf(tok, sizeof tok, "%016llx", static_cast<unsigned long long>(token_rng_.next()));
    sessions_[id] = std::make_shared<SessionSlot>(std::make_unique<Session>(id, config), tok);
    return {id, tok};
  }

  std::shared_ptr<SessionSlot> find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::vector<std::shared_ptr<SessionSlot>> all() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<SessionSlot>> out;
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

  /// Advance every session by `wall_seconds` of wall time.
  void advance(double wall_seconds, double heartbeat_period = 1.0, std::size_t max_ticks = 2000) {
    for (const auto& slot : all()) {
      std::lock_guard lock(slot->mutex);
      auto& s = *slot->session;
      bool changed = false;
      if (s.phase() == Phase::Idle || s.paused()) {
        slot->tick_debt = 0.0;
        slot->heartbeat_wait += wall_seconds;
        if (slot->heartbeat_wait >= heartbeat_period) {
          slot->heartbeat_wait = 0.0;
          s.heartbeat();
          changed = true;
        }
      } else {
        slot->heartbeat_wait = 0.0;
        slot->tick_debt += wall_seconds * s.rate() / s.config().cadence;
        for (std::size_t k = 0; k < max_ticks && slot->tick_debt >= 1.0; ++k) {
          slot->tick_debt -= 1.0;
          s.tick();
          changed = true;
          if (s.phase() == Phase::Idle) break;
        }
        slot->tick_debt = std::min(slot->tick_debt, static_cast<double>(max_ticks));
      }
      if (changed) slot->wakeup.notify_all();
    }
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  std::uint64_t counter_{0};
  SplitMix64 token_rng_;
};

}  // namespace mzi::live
