#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laneintent/domain.hpp"
#include "laneintent/perception.hpp"
#include "laneintent/rng.hpp"

namespace laneintent {

// ---------------------------------------------------------------------------
// Kinematics

inline constexpr double kMaxAccel = 6.0;          // m/s^2
inline constexpr double kMaxLateralRate = 3.0;    // m/s
inline constexpr double kMaxSpeed = 40.0;         // m/s
inline constexpr double kLateralTimeConstant = 0.2;  // s

/// One forward-Euler step of the point-mass model. Positions advance with the
/// old velocities; vx is clamped to [0, 40]; vy follows the lateral rate
/// command through a first-order lag (time constant 0.2 s) whose per-step
/// change is limited to 15*dt; heading is recomputed from the new velocity.
/// Throws DomainError on non-finite input or violated bounds.
VehicleState step_vehicle(const VehicleState& state, double accel, double lateral_rate_cmd,
                          double dt);

// ---------------------------------------------------------------------------
// Scenarios

struct SurroundingVehicleSpec {
  double init_gap_x = 0.0;  // m, relative to ego
  LaneId lane = LaneId::Right;
  double init_speed = 0.0;   // m/s
  double final_speed = 0.0;  // m/s
  double speed_ramp_start = 0.0;     // s
  double speed_ramp_duration = 0.0;  // s

  /// Scripted longitudinal speed at time t (linear ramp).
  double speed_at(double t) const;

  bool operator==(const SurroundingVehicleSpec&) const = default;
};

struct ScenarioSpec {
  std::string scenario_id;
  double ego_init_speed = 17.5;
  LaneId ego_init_lane = LaneId::Right;
  std::vector<SurroundingVehicleSpec> surrounding;
  double episode_duration = 30.0;  // s

  /// Throws DomainError if a ScenarioSpec invariant is violated.
  void validate(const LaneGeometry& geometry = {}) const;
  /// True when two vehicles (ego included) start with overlapping boxes.
  bool has_spawn_overlap(const LaneGeometry& geometry = {}) const;

  bool operator==(const ScenarioSpec&) const = default;
};

inline constexpr double kEgoSpeedMin = 15.0;
inline constexpr double kEgoSpeedMax = 20.0;

/// One surrounding vehicle of a grid entry. `speeds` lists candidate
/// (initial, final) pairs; the grid takes the product across vehicles.
struct VehiclePlacement {
  double gap_x = 0.0;
  bool same_lane = true;  // relative to the ego's initial lane
  std::vector<std::pair<double, double>> speeds;
  double ramp_start = 0.0;
  double ramp_duration = 0.0;
};

struct TrafficConfig {
  std::string name;
  std::vector<VehiclePlacement> vehicles;
};

struct ScenarioGrid {
  std::vector<double> ego_speeds;
  std::vector<LaneId> ego_lanes;
  std::vector<TrafficConfig> traffic;
  double episode_duration = 30.0;
};

/// Cartesian product of the grid, shuffled by seed. Combinations whose
/// vehicles spawn overlapping are dropped. Throws DomainError on an empty
/// grid or an entry that breaks a ScenarioSpec invariant other than overlap.
std::vector<ScenarioSpec> generate_scenarios(const ScenarioGrid& grid, Seed seed,
                                             const LaneGeometry& geometry = {});

// ---------------------------------------------------------------------------
// Traces

struct Controls {
  double accel = 0.0;             // m/s^2
  double lateral_rate_cmd = 0.0;  // m/s
  bool operator==(const Controls&) const = default;
};

struct TimestepRecord {
  double time = 0.0;  // s, exactly tick/60
  VehicleState ego;
  /// Logged for analysis only; feature extraction never reads it.
  Controls ego_controls;
  std::vector<VehicleState> others_true;
  std::vector<Measurement> others_measured;
  ModeLabel mode = ModeLabel::LaneKeep;  // active during [time, time + 1/60)

  bool operator==(const TimestepRecord&) const = default;
};

struct ModeEvent {
  double time = 0.0;
  ModeLabel from = ModeLabel::LaneKeep;
  ModeLabel to = ModeLabel::LaneKeep;
  bool operator==(const ModeEvent&) const = default;
};

struct Trace {
  std::string episode_id;
  std::string scenario_id;
  std::string driver_id;
  Seed seed;
  std::string config_digest;
  bool collided = false;
  /// Incomplete recording (e.g. a dropped interactive session).
  bool partial = false;
  std::vector<TimestepRecord> records;
  std::vector<ModeEvent> mode_events;

  bool operator==(const Trace&) const = default;
};

/// Rebuilds mode_events from the per-record modes (the mode before the first
/// record is taken as LaneKeep).
std::vector<ModeEvent> events_from_records(std::span<const TimestepRecord> records);

inline std::int64_t tick_of(double time) {
  return static_cast<std::int64_t>(time * kTicksPerSecond + (time >= 0 ? 0.5 : -0.5));
}

// ---------------------------------------------------------------------------
// Driver policies

struct DriverDecision {
  double accel = 0.0;
  double lateral_rate_cmd = 0.0;
  ModeLabel mode = ModeLabel::LaneKeep;
  /// Present iff mode differs from the previous tick's mode.
  std::optional<Sigma> emitted_event;
};

struct PolicyInput {
  std::int64_t tick = 0;
  double time = 0.0;
  const VehicleState& ego;
  std::span<const Measurement> measurements;
  const LaneGeometry& geometry;
  const SensorConfig& sensor;
};

/// Anything that can drive the ego: the surrogate, or a human proxy.
class DriverPolicy {
 public:
  virtual ~DriverPolicy() = default;
  virtual void begin_episode(const ScenarioSpec& spec, Seed seed) = 0;
  virtual DriverDecision decide(const PolicyInput& input) = 0;
  virtual std::string driver_id() const = 0;
};

/// Thrown when a policy returns non-finite controls.
class PolicyError : public std::runtime_error {
 public:
  PolicyError(std::int64_t tick, const std::string& what);
  std::int64_t tick() const { return tick_; }

 private:
  std::int64_t tick_;
};

/// Stepwise fixed-rate episode loop. Each step(): senses, queries the policy,
/// appends one record, then advances every vehicle by 1/60 s.
class EpisodeRunner {
 public:
  EpisodeRunner(ScenarioSpec spec, DriverPolicy& driver, SensorConfig sensor, Seed seed,
                LaneGeometry geometry = {});

  bool done() const { return done_; }
  std::int64_t tick() const { return tick_; }
  const VehicleState& ego() const { return ego_; }
  const std::vector<VehicleState>& others() const { return others_; }
  ModeLabel current_mode() const { return mode_; }
  const LaneGeometry& geometry() const { return geometry_; }
  const ScenarioSpec& spec() const { return spec_; }

  /// Runs one tick and returns the appended record. Must not be called once
  /// done(). Throws PolicyError on non-finite controls.
  const TimestepRecord& step();

  /// Marks the trace partial and stops.
  void abort();

  Trace take_trace();

  /// Distance ego must lead all traffic by before the episode ends early.
  static constexpr double kPassMargin = 100.0;

 private:
  bool collision() const;
  bool passed_all_traffic() const;

  ScenarioSpec spec_;
  DriverPolicy& driver_;
  SensorConfig sensor_;
  LaneGeometry geometry_;
  Rng sensor_rng_;
  VehicleState ego_;
  std::vector<VehicleState> others_;
  std::int64_t tick_ = 0;
  std::int64_t last_tick_ = 0;
  ModeLabel mode_ = ModeLabel::LaneKeep;
  bool done_ = false;
  Trace trace_;
};

/// Runs a whole episode. The driver is re-seeded from `seed` via
/// begin_episode so the result depends only on the arguments.
Trace run_episode(const ScenarioSpec& spec, DriverPolicy& driver, const SensorConfig& sensor_cfg,
                  Seed seed, const LaneGeometry& geometry = {});

}  // namespace laneintent
