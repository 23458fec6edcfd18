#include "laneintent/session.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "laneintent/dataset_io.hpp"
#include "laneintent/surrogate_driver.hpp"

namespace laneintent {

namespace {

using json = nlohmann::ordered_json;

double number_field(const json& j, const char* key, bool required, double fallback = 0.0) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw ProtocolError(error_code::kBadField, std::string("missing field '") + key + "'");
    return fallback;
  }
  if (!it->is_number()) {
    throw ProtocolError(error_code::kBadField, std::string("field '") + key + "' must be a number");
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    throw ProtocolError(error_code::kBadField, std::string("field '") + key + "' must be finite");
  }
  return v;
}

std::optional<double> client_time_of(const json& j) {
  if (!j.contains("client_time") || j["client_time"].is_null()) return std::nullopt;
  return number_field(j, "client_time", true);
}

double normalized(const json& j, const char* key) {
  const double v = number_field(j, key, true);
  if (v < -1.0 || v > 1.0) {
    throw ProtocolError(error_code::kBadField, std::string("field '") + key + "' outside [-1, 1]");
  }
  return v;
}

json state_json(const VehicleState& s) {
  return {{"px", s.px}, {"py", s.py}, {"vx", s.vx}, {"vy", s.vy}, {"theta", s.theta}};
}

}  // namespace

std::string_view label_kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::PrepareOn:
      return "PrepareOn";
    case LabelKind::PrepareOff:
      return "PrepareOff";
    case LabelKind::ExecuteLaneChange:
      return "ExecuteLaneChange";
  }
  return "?";
}

ClientMessage parse_client_message(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ProtocolError(error_code::kBadJson, "frame is not valid JSON");
  if (!j.is_object()) throw ProtocolError(error_code::kBadJson, "frame must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) {
    throw ProtocolError(error_code::kBadField, "missing string field 'type'");
  }
  const auto type = j["type"].get<std::string>();
  if (type == "control") {
    return ControlMessage{normalized(j, "steer_rate"), normalized(j, "accel"), client_time_of(j)};
  }
  if (type == "label") {
    if (!j.contains("kind") || !j["kind"].is_string()) {
      throw ProtocolError(error_code::kBadField, "missing string field 'kind'");
    }
    const auto kind = j["kind"].get<std::string>();
    LabelMessage m;
    m.client_time = client_time_of(j);
    if (kind == "PrepareOn") {
      m.kind = LabelKind::PrepareOn;
    } else if (kind == "PrepareOff") {
      m.kind = LabelKind::PrepareOff;
    } else if (kind == "ExecuteLaneChange") {
      m.kind = LabelKind::ExecuteLaneChange;
    } else {
      throw ProtocolError(error_code::kUnknownKind, "unknown label kind '" + kind + "'");
    }
    return m;
  }
  if (type == "handshake") {
    if (!j.contains("protocol_version") || !j["protocol_version"].is_number_integer()) {
      throw ProtocolError(error_code::kBadField, "handshake requires integer 'protocol_version'");
    }
    HandshakeMessage h;
    h.protocol_version = j["protocol_version"].get<int>();
    if (j.contains("scenario_request")) h.scenario_request = j["scenario_request"];
    return h;
  }
  throw ProtocolError(error_code::kUnknownKind, "unknown message type '" + type + "'");
}

std::string client_message_text(const ClientMessage& msg) {
  json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ControlMessage>) {
          j = {{"type", "control"}, {"steer_rate", m.steer_rate}, {"accel", m.accel}};
          if (m.client_time) j["client_time"] = *m.client_time;
        } else if constexpr (std::is_same_v<T, LabelMessage>) {
          j = {{"type", "label"}, {"kind", label_kind_name(m.kind)}};
          if (m.client_time) j["client_time"] = *m.client_time;
        } else {
          j = {{"type", "handshake"}, {"protocol_version", m.protocol_version}};
          if (!m.scenario_request.is_null()) j["scenario_request"] = m.scenario_request;
        }
      },
      msg);
  return j.dump();
}

std::string error_message_text(std::string_view code, std::string_view text) {
  return json{{"type", "error"}, {"code", code}, {"text", text}}.dump();
}

// ---------------------------------------------------------------------------

HumanProxy::HumanProxy(std::string driver_id) : driver_id_(std::move(driver_id)) {}

void HumanProxy::set_control(double steer_rate, double accel) {
  steer_rate_ = std::clamp(steer_rate, -1.0, 1.0);
  accel_ = std::clamp(accel, -1.0, 1.0);
}

void HumanProxy::push_label(LabelKind kind, std::int64_t tick, std::optional<double> client_time) {
  LabelLogEntry e;
  e.tick = tick;
  e.server_time = tick_time(tick);
  e.client_time = client_time;
  e.kind = kind;
  log_.push_back(e);
  queue_.push_back(log_.size() - 1);
}

void HumanProxy::begin_episode(const ScenarioSpec&, Seed) {
  steer_rate_ = 0.0;
  accel_ = 0.0;
  mode_ = ModeLabel::LaneKeep;
  queue_.clear();
}

DriverDecision HumanProxy::decide(const PolicyInput& input) {
  const ModeLabel before = mode_;
  const auto& geometry = input.geometry;

  if (before == ModeLabel::LaneChange) {
    const double err = input.ego.py - geometry.center_of(target_lane_);
    if (std::abs(err) < kSettleLateralTol && std::abs(input.ego.theta) < kSettleHeadingTol) {
      mode_ = ModeLabel::LaneKeep;
    }
  }
  while (!queue_.empty()) {
    LabelLogEntry& e = log_[queue_.front()];
    queue_.pop_front();
    switch (e.kind) {
      case LabelKind::PrepareOn:
        e.applied = mode_ == ModeLabel::LaneKeep;
        if (e.applied) mode_ = ModeLabel::Prepare;
        break;
      case LabelKind::PrepareOff:
        e.applied = mode_ == ModeLabel::Prepare;
        if (e.applied) mode_ = ModeLabel::LaneKeep;
        break;
      case LabelKind::ExecuteLaneChange:
        e.applied = mode_ != ModeLabel::LaneChange;
        if (e.applied) {
          mode_ = ModeLabel::LaneChange;
          target_lane_ = opposite(lane_of(input.ego.py, geometry));
        }
        break;
    }
    e.mode_after = mode_;
  }

  DriverDecision d;
  d.accel = kControlAccelScale * accel_;
  d.lateral_rate_cmd = kControlLateralScale * steer_rate_;
  d.mode = mode_;
  if (mode_ != before) d.emitted_event = sigma_for(before, mode_);
  return d;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json summary_to_json(const SessionSummary& s) {
  return {{"ticks", s.ticks},
          {"labels_received", s.labels_received},
          {"labels_ignored", s.labels_ignored},
          {"lane_changes_started", s.lane_changes_started},
          {"lane_changes_completed", s.lane_changes_completed},
          {"aborted_preparations", s.aborts},
          {"controls_received", s.controls_received},
          {"errors_sent", s.errors_sent},
          {"collided", s.collided},
          {"partial", s.partial}};
}

SessionEngine::SessionEngine(const RunConfig& config, Seed seed, SessionOptions options)
    : config_(config),
      seed_(seed),
      options_(std::move(options)),
      scenarios_(generate_scenarios(config.grid, derive_seed(seed, 3), config.geometry)),
      proxy_(options_.driver_id) {
  if (options_.decimation < 1) throw DomainError("decimation must be >= 1");
}

std::vector<std::string> SessionEngine::receive(std::string_view text) {
  std::vector<std::string> out;
  try {
    ClientMessage msg = parse_client_message(text);
    if (auto* h = std::get_if<HandshakeMessage>(&msg)) return handshake(*h);
    if (!started()) {
      throw ProtocolError(error_code::kNoHandshake, "handshake required before other messages");
    }
    if (auto* c = std::get_if<ControlMessage>(&msg)) {
      proxy_.set_control(c->steer_rate, c->accel);
      ++controls_;
    } else if (auto* l = std::get_if<LabelMessage>(&msg)) {
      // Stamped with the tick the server is about to simulate.
      proxy_.push_label(l->kind, runner_->tick(), l->client_time);
    }
  } catch (const ProtocolError& e) {
    ++errors_;
    out.push_back(error_message_text(e.code(), e.what()));
  }
  return out;
}

std::vector<std::string> SessionEngine::handshake(const HandshakeMessage& msg) {
  if (started()) {
    throw ProtocolError(error_code::kDuplicateHandshake, "session already started");
  }
  if (msg.protocol_version != kProtocolVersion) {
    rejected_ = true;
    throw ProtocolError(error_code::kProtocolVersion,
                        "protocol version " + std::to_string(msg.protocol_version) +
                            " not supported (server speaks " + std::to_string(kProtocolVersion) +
                            ")");
  }
  const ScenarioSpec* chosen = nullptr;
  const auto& req = msg.scenario_request;
  if (req.is_null() || (req.is_object() && req.empty())) {
    chosen = &scenarios_.front();
  } else if (req.is_object() && req.contains("index") && req["index"].is_number_integer()) {
    const auto idx = req["index"].get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= scenarios_.size()) {
      throw ProtocolError(error_code::kBadScenario,
                          "scenario index " + std::to_string(idx) + " out of range [0, " +
                              std::to_string(scenarios_.size()) + ")");
    }
    chosen = &scenarios_[static_cast<std::size_t>(idx)];
  } else if (req.is_object() && req.contains("scenario_id") && req["scenario_id"].is_string()) {
    const auto id = req["scenario_id"].get<std::string>();
    for (const auto& s : scenarios_) {
      if (s.scenario_id == id) chosen = &s;
    }
    if (!chosen) throw ProtocolError(error_code::kBadScenario, "no scenario '" + id + "'");
  } else {
    throw ProtocolError(error_code::kBadScenario,
                        "scenario_request must be null, {\"index\": n} or {\"scenario_id\": s}");
  }
  runner_ = std::make_unique<EpisodeRunner>(*chosen, proxy_, config_.sensor, seed_, config_.geometry);
  return {};
}

std::optional<std::string> SessionEngine::step() {
  if (!started()) throw std::logic_error("SessionEngine::step before handshake");
  const TimestepRecord& rec = runner_->step();
  ++ticks_;
  if (tick_of(rec.time) % options_.decimation == 0) return tick_text(rec);
  return std::nullopt;
}

std::string SessionEngine::tick_text(const TimestepRecord& rec) const {
  const auto& g = config_.geometry;
  const double speed = std::hypot(rec.ego.vx, rec.ego.vy);
  json others = json::array();
  for (const auto& o : rec.others_true) others.push_back(state_json(o));
  json j{{"type", "tick"},
         {"tick", tick_of(rec.time)},
         {"time", rec.time},
         {"ego", state_json(rec.ego)},
         {"others", std::move(others)},
         {"mode", mode_tag(rec.mode)},
         {"lane_geometry",
          {{"lane_width", g.lane_width},
           {"right_center_y", g.right_center_y},
           {"left_center_y", g.left_center_y},
           {"divider_y", g.divider_y},
           {"vehicle_length", g.vehicle_length},
           {"vehicle_width", g.vehicle_width}}},
         {"speed_band",
          {{"min", kEgoSpeedMin},
           {"max", kEgoSpeedMax},
           {"inside", speed >= kEgoSpeedMin && speed <= kEgoSpeedMax}}}};
  return j.dump();
}

Trace SessionEngine::finish() {
  if (final_trace_) return *final_trace_;
  if (!started()) throw std::logic_error("SessionEngine::finish before handshake");
  if (!runner_->done()) runner_->abort();
  Trace t = runner_->take_trace();
  t.episode_id = options_.episode_id;
  t.config_digest = config_.digest();
  final_trace_ = t;
  return t;
}

SessionSummary SessionEngine::summary() const {
  SessionSummary s;
  s.ticks = ticks_;
  s.controls_received = controls_;
  s.errors_sent = errors_;
  for (const auto& e : proxy_.label_log()) {
    ++s.labels_received;
    if (!e.applied) ++s.labels_ignored;
  }
  if (final_trace_) {
    s.collided = final_trace_->collided;
    s.partial = final_trace_->partial;
    for (const auto& e : final_trace_->mode_events) {
      if (e.to == ModeLabel::LaneChange) ++s.lane_changes_started;
      if (e.from == ModeLabel::LaneChange && e.to == ModeLabel::LaneKeep) ++s.lane_changes_completed;
      if (e.from == ModeLabel::Prepare && e.to == ModeLabel::LaneKeep) ++s.aborts;
    }
  }
  return s;
}

std::string SessionEngine::session_end_text(const std::string& trace_path) const {
  return json{{"type", "session_end"},
              {"episode_id", options_.episode_id},
              {"trace_path", trace_path},
              {"summary", summary_to_json(summary())}}
      .dump();
}

// ---------------------------------------------------------------------------

ReplayResult replay_script(const RunConfig& config, Seed seed, std::span<const ScriptedInput> script,
                           SessionOptions options) {
  SessionEngine engine(config, seed, std::move(options));
  ReplayResult out;
  std::size_t next = 0;
  auto deliver_until = [&](std::int64_t tick) {
    while (next < script.size() && script[next].tick <= tick) {
      for (auto& reply : engine.receive(script[next].frame)) out.outbound.push_back(std::move(reply));
      ++next;
    }
  };
  // Frames before the accepted handshake go in order; after it, script
  // ticks are simulation ticks.
  while (!engine.started()) {
    if (next >= script.size()) throw DomainError("replay script has no accepted handshake");
    for (auto& reply : engine.receive(script[next].frame)) out.outbound.push_back(std::move(reply));
    ++next;
  }
  std::int64_t tick = 0;
  while (!engine.done()) {
    deliver_until(tick);
    if (auto frame = engine.step()) out.outbound.push_back(std::move(*frame));
    ++tick;
  }
  out.trace = engine.finish();
  out.label_log = engine.label_log();
  out.outbound.push_back(engine.session_end_text(""));
  return out;
}

std::vector<ScriptedInput> parse_script(std::string_view text) {
  std::vector<ScriptedInput> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("tick") ||
        !j["tick"].is_number_integer() || !j.contains("frame") || !j["frame"].is_object()) {
      throw FormatError("script:" + std::to_string(line_no) +
                        ": expected {\"tick\": <int>, \"frame\": {...}}");
    }
    const auto tick = j["tick"].get<std::int64_t>();
    if (!out.empty() && tick < out.back().tick) {
      throw FormatError("script:" + std::to_string(line_no) + ": ticks must not decrease");
    }
    out.push_back({tick, j["frame"].dump()});
  }
  return out;
}

std::string write_session_outputs(const Trace& trace, const std::vector<LabelLogEntry>& log,
                                  const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path trace_path = fs::path(dir) / (trace.episode_id + ".jsonl");
  write_trace(trace, trace_path);
  std::string text;
  for (const auto& e : log) {
    json j{{"tick", e.tick},
           {"server_time", e.server_time},
           {"client_time", e.client_time ? json(*e.client_time) : json(nullptr)},
           {"kind", label_kind_name(e.kind)},
           {"applied", e.applied},
           {"mode_after", mode_tag(e.mode_after)}};
    text += j.dump();
    text += '\n';
  }
  write_text_file(fs::path(dir) / (trace.episode_id + ".labels.jsonl"), text);
  return trace_path.string();
}

}  // namespace laneintent
