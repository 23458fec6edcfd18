#include "laneintent/surrogate_driver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace laneintent {

void DriverParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw DomainError(std::string("driver params: ") + name + " must be > 0");
  };
  positive(ttc_prep_threshold, "ttc_prep_threshold");
  positive(ttc_lc_threshold, "ttc_lc_threshold");
  positive(thw_prep_reference, "thw_prep_reference");
  positive(thw_lc_reference, "thw_lc_reference");
  positive(abort_hysteresis, "abort_hysteresis");
  positive(rttc_front_min, "rttc_front_min");
  positive(rttc_rear_min, "rttc_rear_min");
  positive(prep_lateral_bias, "prep_lateral_bias");
  positive(lc_nominal_duration, "lc_nominal_duration");
  positive(desired_speed, "desired_speed");
  positive(follow_headway, "follow_headway");
  positive(gap_gain, "gap_gain");
  positive(speed_gain, "speed_gain");
  if (ttc_lc_threshold > ttc_prep_threshold) {
    throw DomainError("driver params: ttc_lc_threshold must not exceed ttc_prep_threshold");
  }
  if (reaction_delay_mean < 0.0 || reaction_delay_std < 0.0 || label_jitter_std < 0.0 ||
      speed_damping < 0.0) {
    throw DomainError("driver params: delays, jitter and damping must be >= 0");
  }
  if (label_jitter_prob < 0.0 || label_jitter_prob > 1.0) {
    throw DomainError("driver params: label_jitter_prob must lie in [0, 1]");
  }
}

std::vector<DriverProfile> sample_profiles(std::size_t count, Seed seed,
                                           const DriverParams& base) {
  Rng rng(seed);
  std::vector<DriverProfile> out;
  for (std::size_t i = 0; i < count; ++i) {
    DriverParams p = base;
    // Subject thresholds are drawn jointly: marginals follow the published
    // per-subject spread, and a cautious subject is cautious at both
    // transitions (correlation kThresholdCorrelation).
    for (int attempt = 0;; ++attempt) {
      const double z1 = rng.normal(0.0, 1.0);
      const double z2 = rng.normal(0.0, 1.0);
      p.ttc_prep_threshold = 1.34 + 0.17 * z1;
      p.ttc_lc_threshold =
          1.20 + 0.14 * (kThresholdCorrelation * z1 +
                         std::sqrt(1.0 - kThresholdCorrelation * kThresholdCorrelation) * z2);
      if (p.ttc_lc_threshold <= p.ttc_prep_threshold - 0.05 && p.ttc_lc_threshold > 0.6) break;
      if (attempt > 1000) throw std::runtime_error("sample_profiles: rejection loop stuck");
    }
    p.follow_headway = p.ttc_lc_threshold - kFollowMargin;
    p.thw_prep_reference = std::max(0.3, rng.normal(0.80, 0.11));
    p.thw_lc_reference = std::max(0.3, rng.normal(0.96, 0.12));
    p.desired_speed = rng.uniform(17.0, 19.0);
    p.validate();
    std::ostringstream name;
    name << "driver" << (i + 1);
    out.push_back({name.str(), p});
  }
  return out;
}

std::optional<ModeLabel> guard_transition(ModeLabel current, const GuardInputs& in,
                                          const DriverParams& params, const SensorConfig& sensor) {
  auto metrics = [&](const Measurement& m) {
    return compute_time_metrics(m.rel_x, in.ego_speed, m.rel_vx, sensor);
  };
  const auto& lead = in.slots.ahead_same;
  switch (current) {
    case ModeLabel::LaneKeep:
      if (lead && metrics(*lead).ttc <= params.ttc_prep_threshold) return ModeLabel::Prepare;
      return std::nullopt;
    case ModeLabel::Prepare: {
      if (!lead) return ModeLabel::LaneKeep;
      const double ttc = metrics(*lead).ttc;
      if (ttc >= params.ttc_prep_threshold + params.abort_hysteresis) return ModeLabel::LaneKeep;
      if (ttc <= params.ttc_lc_threshold) {
        const auto& front = in.slots.ahead_opposite;
        const auto& rear = in.slots.behind_opposite;
        const bool front_ok = !front || metrics(*front).rttc >= params.rttc_front_min;
        const bool rear_ok = !rear || metrics(*rear).rttc >= params.rttc_rear_min;
        if (front_ok && rear_ok) return ModeLabel::LaneChange;
      }
      return std::nullopt;
    }
    case ModeLabel::LaneChange:
      if (std::abs(in.lc_lateral_error) < kSettleLateralTol &&
          std::abs(in.heading) < kSettleHeadingTol) {
        return ModeLabel::LaneKeep;
      }
      return std::nullopt;
  }
  return std::nullopt;
}

ModeMachine::Result ModeMachine::decide_mode(std::int64_t tick, const GuardInputs& in,
                                             const SensorConfig& sensor, Rng& rng) {
  const auto wanted = guard_transition(current_, in, params_, sensor);

  auto fire = [&](ModeLabel to) {
    const auto sigma = sigma_for(current_, to);
    current_ = to;
    pending_.reset();
    return Result{current_, sigma};
  };

  if (pending_) {
    if (tick < pending_->fire_tick) return {current_, std::nullopt};
    const ModeLabel to = pending_->to;
    pending_.reset();
    if (wanted && *wanted == to) return fire(to);
  }
  if (!wanted) return {current_, std::nullopt};

  const double delay =
      std::max(0.0, rng.normal(params_.reaction_delay_mean, params_.reaction_delay_std));
  const auto delay_ticks = static_cast<std::int64_t>(std::llround(delay * kTicksPerSecond));
  if (delay_ticks == 0) return fire(*wanted);
  pending_ = Pending{*wanted, tick + delay_ticks};
  return {current_, std::nullopt};
}

double lane_change_reference(const LaneChangePlan& plan, double duration) {
  const double tau = std::clamp(plan.progress / duration, 0.0, 1.0);
  const double s = tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
  return plan.source_y + (plan.target_center - plan.source_y) * s;
}

ControlOutput control_for_mode(ModeLabel mode, const VehicleState& ego, LaneId ego_lane,
                               const SlotGrid& slots, const DriverParams& params,
                               const LaneGeometry& geometry,
                               const std::optional<LaneChangePlan>& plan, double prev_accel) {
  double target_speed = params.desired_speed;
  double lateral_target = geometry.center_of(ego_lane);

  if (mode == ModeLabel::LaneChange) {
    if (!plan) throw DomainError("control_for_mode: LaneChange requires a lane-change plan");
    lateral_target = lane_change_reference(*plan, params.lc_nominal_duration);
  } else {
    if (slots.ahead_same) {
      const auto& lead = *slots.ahead_same;
      const double lead_speed = ego.vx + lead.rel_vx;
      const double safe = lead_speed + params.gap_gain * (lead.rel_x - params.follow_headway * ego.vx);
      target_speed = std::min(target_speed, std::max(0.0, safe));
    }
    if (mode == ModeLabel::Prepare) {
      const double toward_divider = ego_lane == LaneId::Right ? 1.0 : -1.0;
      lateral_target += toward_divider * params.prep_lateral_bias;
    }
  }

  ControlOutput out;
  out.accel = std::clamp(
      params.speed_gain * (target_speed - ego.vx) - params.speed_damping * prev_accel, -kMaxAccel,
      2.0);
  out.lateral_rate_cmd =
      std::clamp(kLateralGain * (lateral_target - ego.py), -kMaxLateralRate, kMaxLateralRate);
  return out;
}

SurrogateDriver::SurrogateDriver(DriverProfile profile)
    : profile_(std::move(profile)), machine_(profile_.params) {
  profile_.params.validate();
}

void SurrogateDriver::begin_episode(const ScenarioSpec&, Seed seed) {
  rng_ = Rng(seed);
  machine_.reset();
  prev_accel_ = 0.0;
  lc_source_ = LaneId::Right;
  lc_start_y_ = 0.0;
  lc_start_tick_ = 0;
}

DriverDecision SurrogateDriver::decide(const PolicyInput& input) {
  const auto& ego = input.ego;
  const auto& geometry = input.geometry;
  const LaneId lane = lane_of(ego.py, geometry);
  const SlotGrid slots = assign_slots(ego, lane, input.measurements, geometry);

  const double lc_error = machine_.current() == ModeLabel::LaneChange
                              ? ego.py - geometry.center_of(opposite(lc_source_))
                              : 0.0;
  const GuardInputs guards{slots, std::hypot(ego.vx, ego.vy), lc_error, ego.theta};
  const auto result = machine_.decide_mode(input.tick, guards, input.sensor, rng_);

  if (result.event == Sigma::Execute) {
    lc_source_ = lane;
    lc_start_y_ = ego.py;
    lc_start_tick_ = input.tick;
  }
  std::optional<LaneChangePlan> plan;
  if (result.mode == ModeLabel::LaneChange) {
    plan = LaneChangePlan{lc_start_y_, geometry.center_of(opposite(lc_source_)),
                          tick_time(input.tick - lc_start_tick_)};
  }
  const ControlOutput ctrl =
      control_for_mode(result.mode, ego, lane, slots, profile_.params, geometry, plan, prev_accel_);
  prev_accel_ = ctrl.accel;
  return DriverDecision{ctrl.accel, ctrl.lateral_rate_cmd, result.mode, result.event};
}

Trace apply_label_noise(const Trace& trace, const DriverParams& params, Rng& rng) {
  Trace out = trace;
  if (trace.mode_events.empty() || trace.records.empty()) return out;

  const auto n_events = trace.mode_events.size();
  std::vector<std::int64_t> ticks(n_events);
  for (std::size_t i = 0; i < n_events; ++i) ticks[i] = tick_of(trace.mode_events[i].time);
  const std::int64_t last_tick = tick_of(trace.records.back().time);

  for (std::size_t i = 0; i < n_events; ++i) {
    if (!rng.bernoulli(params.label_jitter_prob)) continue;
    const double shift = rng.normal(0.0, params.label_jitter_std);
    const auto shift_ticks = static_cast<std::int64_t>(std::llround(shift * kTicksPerSecond));
    const std::int64_t lo = i == 0 ? 0 : ticks[i - 1] + 1;
    const std::int64_t hi = i + 1 < n_events ? ticks[i + 1] - 1 : last_tick;
    ticks[i] = std::clamp(ticks[i] + shift_ticks, lo, std::max(lo, hi));
  }

  ModeLabel mode = trace.mode_events.front().from;
  std::size_t next = 0;
  for (auto& rec : out.records) {
    const std::int64_t k = tick_of(rec.time);
    while (next < n_events && ticks[next] <= k) mode = trace.mode_events[next++].to;
    rec.mode = mode;
  }
  for (std::size_t i = 0; i < n_events; ++i) out.mode_events[i].time = tick_time(ticks[i]);
  return out;
}

}  // namespace laneintent
