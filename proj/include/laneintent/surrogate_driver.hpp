#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "laneintent/domain.hpp"
#include "laneintent/perception.hpp"
#include "laneintent/rng.hpp"
#include "laneintent/simulation.hpp"

namespace laneintent {

/// Surrogate-driver calibration. Threshold defaults are the mean values
/// measured at human mode transitions; the remaining fields shape the
/// per-mode controllers and the human-like timing noise.
struct DriverParams {
  double ttc_prep_threshold = 1.34;  // s
  double ttc_lc_threshold = 1.20;    // s
  double thw_prep_reference = 0.80;  // 1/s
  double thw_lc_reference = 0.96;    // 1/s
  double abort_hysteresis = 0.5;     // s
  double rttc_front_min = 2.0;       // s
  double rttc_rear_min = 2.0;        // s
  double prep_lateral_bias = 0.3;    // m
  double lc_nominal_duration = 2.5;  // s
  double desired_speed = 18.0;       // m/s
  double reaction_delay_mean = 0.3;  // s
  double reaction_delay_std = 0.1;   // s
  double label_jitter_prob = 0.05;
  double label_jitter_std = 0.2;  // s

  // Longitudinal controller.
  double follow_headway = 0.9;  // s, time gap the follow law settles to (below ttc_lc_threshold)
  double gap_gain = 0.15;       // 1/s
  double speed_gain = 0.8;      // 1/s
  double speed_damping = 0.1;   // s

  void validate() const;
  bool operator==(const DriverParams&) const = default;
};

inline constexpr double kThresholdCorrelation = 0.9;
/// Sampled profiles settle this far (in seconds of TTC) below the
/// LaneChange threshold, so the threshold is always eventually crossed.
inline constexpr double kFollowMargin = 0.3;

inline constexpr double kLateralGain = 1.2;           // 1/s
inline constexpr double kSettleLateralTol = 0.15;     // m
inline constexpr double kSettleHeadingTol = 0.02;     // rad

struct DriverProfile {
  std::string name;
  DriverParams params;
  bool operator==(const DriverProfile&) const = default;
};

/// Subject-level profiles: thresholds drawn from the per-subject spread of
/// the human statistics, desired speed uniform in [17, 19] m/s.
std::vector<DriverProfile> sample_profiles(std::size_t count, Seed seed,
                                           const DriverParams& base = {});

/// Everything the guards look at on one tick.
struct GuardInputs {
  const SlotGrid& slots;
  double ego_speed = 0.0;
  /// Only meaningful in LaneChange: py minus the target lane centre.
  double lc_lateral_error = 0.0;
  double heading = 0.0;
};

/// The transition whose guard holds in `current`, if any. Pure.
std::optional<ModeLabel> guard_transition(ModeLabel current, const GuardInputs& in,
                                          const DriverParams& params, const SensorConfig& sensor);

/// Guarded mode machine with per-event reaction delay. A transition whose
/// guard first holds at tick k fires at k + delay if the guard still holds
/// then; otherwise the pending event is dropped.
class ModeMachine {
 public:
  explicit ModeMachine(DriverParams params) : params_(std::move(params)) {}

  struct Result {
    ModeLabel mode;
    std::optional<Sigma> event;
  };

  Result decide_mode(std::int64_t tick, const GuardInputs& in, const SensorConfig& sensor,
                     Rng& rng);

  ModeLabel current() const { return current_; }
  void reset() {
    current_ = ModeLabel::LaneKeep;
    pending_.reset();
  }

 private:
  struct Pending {
    ModeLabel to;
    std::int64_t fire_tick;
  };
  DriverParams params_;
  ModeLabel current_ = ModeLabel::LaneKeep;
  std::optional<Pending> pending_;
};

struct LaneChangePlan {
  double source_y = 0.0;
  double target_center = 0.0;
  double progress = 0.0;  // s since the LaneChange mode was entered
};

/// Minimum-jerk lateral reference for a lane change.
double lane_change_reference(const LaneChangePlan& plan, double duration);

struct ControlOutput {
  double accel = 0.0;
  double lateral_rate_cmd = 0.0;
};

/// Per-mode control law. `ego_lane` is the lane the ego currently occupies;
/// `plan` is required in LaneChange. `prev_accel` feeds the damping term.
ControlOutput control_for_mode(ModeLabel mode, const VehicleState& ego, LaneId ego_lane,
                               const SlotGrid& slots, const DriverParams& params,
                               const LaneGeometry& geometry,
                               const std::optional<LaneChangePlan>& plan, double prev_accel);

/// Scripted stand-in for a human subject.
class SurrogateDriver final : public DriverPolicy {
 public:
  explicit SurrogateDriver(DriverProfile profile);

  void begin_episode(const ScenarioSpec& spec, Seed seed) override;
  DriverDecision decide(const PolicyInput& input) override;
  std::string driver_id() const override { return profile_.name; }

  const DriverProfile& profile() const { return profile_; }

 private:
  DriverProfile profile_;
  ModeMachine machine_;
  Rng rng_{Seed{0}};
  double prev_accel_ = 0.0;
  LaneId lc_source_ = LaneId::Right;
  double lc_start_y_ = 0.0;  // lateral position when the lane change began
  std::int64_t lc_start_tick_ = 0;
};

/// With probability label_jitter_prob each mode event is moved by
/// Normal(0, label_jitter_std) rounded to ticks; moves are clamped so events
/// keep their order, and record modes are rewritten to match.
Trace apply_label_noise(const Trace& trace, const DriverParams& params, Rng& rng);

}  // namespace laneintent
