#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "laneintent/config.hpp"
#include "laneintent/simulation.hpp"

namespace laneintent {

// Wire protocol: one JSON object per WebSocket text frame, discriminated by
// "type". See docs/protocol.md.

inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultDecimation = 3;
inline constexpr double kControlAccelScale = 4.0;    // m/s^2 at |accel| = 1
inline constexpr double kControlLateralScale = 2.0;  // m/s at |steer_rate| = 1

enum class LabelKind : std::uint8_t { PrepareOn, PrepareOff, ExecuteLaneChange };

std::string_view label_kind_name(LabelKind k);

struct ControlMessage {
  double steer_rate = 0.0;  // normalized [-1, 1]
  double accel = 0.0;       // normalized [-1, 1]
  std::optional<double> client_time;
};

struct LabelMessage {
  LabelKind kind = LabelKind::PrepareOn;
  std::optional<double> client_time;
};

struct HandshakeMessage {
  int protocol_version = kProtocolVersion;
  nlohmann::ordered_json scenario_request;  // null, {"index": n} or {"scenario_id": s}
};

using ClientMessage = std::variant<ControlMessage, LabelMessage, HandshakeMessage>;

/// Error codes sent back in "error" messages.
namespace error_code {
inline constexpr std::string_view kBadJson = "bad_json";
inline constexpr std::string_view kUnknownKind = "unknown_kind";
inline constexpr std::string_view kBadField = "bad_field";
inline constexpr std::string_view kProtocolVersion = "protocol_version";
inline constexpr std::string_view kNoHandshake = "no_handshake";
inline constexpr std::string_view kDuplicateHandshake = "duplicate_handshake";
inline constexpr std::string_view kBadScenario = "bad_scenario";
}  // namespace error_code

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string_view code, const std::string& text)
      : std::runtime_error(text), code_(code) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

ClientMessage parse_client_message(std::string_view text);
std::string client_message_text(const ClientMessage& msg);

std::string error_message_text(std::string_view code, std::string_view text);

/// One label event as received, with the server tick it was stamped with.
struct LabelLogEntry {
  std::int64_t tick = 0;
  double server_time = 0.0;
  std::optional<double> client_time;
  LabelKind kind = LabelKind::PrepareOn;
  bool applied = false;
  ModeLabel mode_after = ModeLabel::LaneKeep;
};

/// Policy fed by client input: zero-order hold on the latest control, label
/// events applied in arrival order on the next tick, and the same settle
/// rule as the surrogate for LaneChange -> LaneKeep.
class HumanProxy final : public DriverPolicy {
 public:
  explicit HumanProxy(std::string driver_id = "human");

  void set_control(double steer_rate, double accel);
  void push_label(LabelKind kind, std::int64_t tick, std::optional<double> client_time);

  void begin_episode(const ScenarioSpec& spec, Seed seed) override;
  DriverDecision decide(const PolicyInput& input) override;
  std::string driver_id() const override { return driver_id_; }

  const std::vector<LabelLogEntry>& label_log() const { return log_; }

 private:
  std::string driver_id_;
  double steer_rate_ = 0.0;
  double accel_ = 0.0;
  ModeLabel mode_ = ModeLabel::LaneKeep;
  LaneId target_lane_ = LaneId::Left;
  std::deque<std::size_t> queue_;  // indices into log_
  std::vector<LabelLogEntry> log_;
};

struct SessionOptions {
  int decimation = kDefaultDecimation;
  std::string episode_id = "session_0001";
  std::string driver_id = "human";
};

struct SessionSummary {
  std::size_t ticks = 0;
  std::size_t labels_received = 0;
  std::size_t labels_ignored = 0;
  std::size_t lane_changes_started = 0;
  std::size_t lane_changes_completed = 0;
  std::size_t aborts = 0;
  std::size_t controls_received = 0;
  std::size_t errors_sent = 0;
  bool collided = false;
  bool partial = false;
};

nlohmann::ordered_json summary_to_json(const SessionSummary& s);

/// One interactive episode, independent of the transport. The transport
/// feeds received frames to receive() and calls step() at the simulation
/// rate; everything else is deterministic in (config, seed, input order).
class SessionEngine {
 public:
  SessionEngine(const RunConfig& config, Seed seed, SessionOptions options = {});

  /// Handles one client frame; returns the frames to send back.
  std::vector<std::string> receive(std::string_view text);

  bool started() const { return runner_ != nullptr; }
  /// True after a handshake with the wrong protocol version.
  bool rejected() const { return rejected_; }
  bool done() const { return runner_ && runner_->done(); }

  /// Runs one tick; returns a tick frame every `decimation` ticks.
  std::optional<std::string> step();

  /// Ends the session. Marks the trace partial if the episode was not over.
  Trace finish();

  const std::vector<LabelLogEntry>& label_log() const { return proxy_.label_log(); }
  SessionSummary summary() const;
  const ScenarioSpec* scenario() const { return runner_ ? &runner_->spec() : nullptr; }

  std::string session_end_text(const std::string& trace_path) const;

 private:
  std::vector<std::string> handshake(const HandshakeMessage& msg);
  std::string tick_text(const TimestepRecord& rec) const;

  const RunConfig& config_;
  Seed seed_;
  SessionOptions options_;
  std::vector<ScenarioSpec> scenarios_;
  HumanProxy proxy_;
  std::unique_ptr<EpisodeRunner> runner_;
  bool rejected_ = false;
  std::size_t controls_ = 0;
  std::size_t errors_ = 0;
  std::size_t ticks_ = 0;
  std::optional<Trace> final_trace_;
};

/// A frame delivered just before the step of `tick`.
struct ScriptedInput {
  std::int64_t tick = 0;
  std::string frame;
};

struct ReplayResult {
  Trace trace;
  std::vector<std::string> outbound;
  std::vector<LabelLogEntry> label_log;
};

/// Drives a session from a fixed input script with no network and no wall
/// clock. Frames for ticks past the end of the episode are dropped.
ReplayResult replay_script(const RunConfig& config, Seed seed, std::span<const ScriptedInput> script,
                           SessionOptions options = {});

/// Script file: one JSON object per line, {"tick": n, "frame": {...}}.
std::vector<ScriptedInput> parse_script(std::string_view text);

/// Writes the trace and its label log next to each other under `dir`;
/// returns the trace path.
std::string write_session_outputs(const Trace& trace, const std::vector<LabelLogEntry>& log,
                                  const std::string& dir);

}  // namespace laneintent
