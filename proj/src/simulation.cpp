#include "laneintent/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace laneintent {

namespace {

bool all_finite(const VehicleState& s) {
  return std::isfinite(s.px) && std::isfinite(s.py) && std::isfinite(s.vx) &&
         std::isfinite(s.vy) && std::isfinite(s.theta);
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

VehicleState step_vehicle(const VehicleState& state, double accel, double lateral_rate_cmd,
                          double dt) {
  if (!all_finite(state) || !std::isfinite(accel) || !std::isfinite(lateral_rate_cmd) ||
      !std::isfinite(dt)) {
    throw DomainError("step_vehicle: non-finite input");
  }
  if (!(dt > 0.0)) throw DomainError("step_vehicle: dt must be positive");
  if (std::abs(accel) > kMaxAccel) throw DomainError("step_vehicle: |accel| exceeds 6 m/s^2");
  if (std::abs(lateral_rate_cmd) > kMaxLateralRate) {
    throw DomainError("step_vehicle: |lateral_rate_cmd| exceeds 3 m/s");
  }

  VehicleState next;
  next.px = state.px + state.vx * dt;
  next.py = state.py + state.vy * dt;
  next.vx = std::clamp(state.vx + accel * dt, 0.0, kMaxSpeed);
  const double max_delta = kMaxLateralRate * dt * 5.0;
  const double lag = (lateral_rate_cmd - state.vy) * dt / kLateralTimeConstant;
  next.vy = state.vy + std::clamp(lag, -max_delta, max_delta);
  next.theta = std::atan2(next.vy, next.vx);
  return next;
}

double SurroundingVehicleSpec::speed_at(double t) const {
  if (t <= speed_ramp_start) return init_speed;
  if (speed_ramp_duration <= 0.0 || t >= speed_ramp_start + speed_ramp_duration) {
    return final_speed;
  }
  const double frac = (t - speed_ramp_start) / speed_ramp_duration;
  return init_speed + (final_speed - init_speed) * frac;
}

bool ScenarioSpec::has_spawn_overlap(const LaneGeometry& geometry) const {
  struct Box {
    double x;
    LaneId lane;
  };
  std::vector<Box> boxes;
  boxes.push_back({0.0, ego_init_lane});
  for (const auto& v : surrounding) boxes.push_back({v.init_gap_x, v.lane});
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (boxes[i].lane == boxes[j].lane &&
          std::abs(boxes[i].x - boxes[j].x) < geometry.vehicle_length) {
        return true;
      }
    }
  }
  return false;
}

void ScenarioSpec::validate(const LaneGeometry& geometry) const {
  const std::string where = "scenario '" + scenario_id + "': ";
  if (surrounding.empty() || surrounding.size() > 3) {
    throw DomainError(where + "needs 1 to 3 surrounding vehicles");
  }
  if (ego_init_speed < kEgoSpeedMin || ego_init_speed > kEgoSpeedMax) {
    throw DomainError(where + "ego speed " + format_number(ego_init_speed) +
                      " outside [15, 20] m/s");
  }
  if (!(episode_duration > 0.0)) throw DomainError(where + "episode_duration must be > 0");
  for (const auto& v : surrounding) {
    if (v.init_speed < 0.0 || v.final_speed < 0.0 || v.init_speed > kMaxSpeed ||
        v.final_speed > kMaxSpeed) {
      throw DomainError(where + "vehicle speeds must lie in [0, 40] m/s");
    }
    if (v.speed_ramp_start < 0.0 || v.speed_ramp_duration < 0.0) {
      throw DomainError(where + "ramp times must be >= 0");
    }
    if (v.speed_ramp_duration > 0.0 &&
        std::abs(v.final_speed - v.init_speed) / v.speed_ramp_duration > kMaxAccel) {
      throw DomainError(where + "speed ramp exceeds 6 m/s^2");
    }
  }
  if (has_spawn_overlap(geometry)) throw DomainError(where + "vehicles spawn overlapping");
}

std::vector<ScenarioSpec> generate_scenarios(const ScenarioGrid& grid, Seed seed,
                                             const LaneGeometry& geometry) {
  if (grid.ego_speeds.empty() || grid.ego_lanes.empty() || grid.traffic.empty()) {
    throw DomainError("scenario grid: ego_speeds, ego_lanes and traffic must be non-empty");
  }
  std::vector<ScenarioSpec> out;
  for (double speed : grid.ego_speeds) {
    for (LaneId lane : grid.ego_lanes) {
      for (const auto& traffic : grid.traffic) {
        if (traffic.vehicles.empty()) {
          throw DomainError("scenario grid: traffic '" + traffic.name + "' has no vehicles");
        }
        // Mixed-radix counter over each vehicle's speed candidates.
        std::vector<std::size_t> choice(traffic.vehicles.size(), 0);
        for (const auto& v : traffic.vehicles) {
          if (v.speeds.empty()) {
            throw DomainError("scenario grid: traffic '" + traffic.name +
                              "' has a vehicle without speeds");
          }
        }
        for (std::size_t combo = 0;; ++combo) {
          ScenarioSpec spec;
          std::ostringstream id;
          id << traffic.name << "_" << lane_name(lane) << "_v" << speed << "_c" << combo;
          spec.scenario_id = id.str();
          spec.ego_init_speed = speed;
          spec.ego_init_lane = lane;
          spec.episode_duration = grid.episode_duration;
          for (std::size_t i = 0; i < traffic.vehicles.size(); ++i) {
            const auto& p = traffic.vehicles[i];
            SurroundingVehicleSpec v;
            v.init_gap_x = p.gap_x;
            v.lane = p.same_lane ? lane : opposite(lane);
            v.init_speed = p.speeds[choice[i]].first;
            v.final_speed = p.speeds[choice[i]].second;
            v.speed_ramp_start = p.ramp_start;
            v.speed_ramp_duration = p.ramp_duration;
            spec.surrounding.push_back(v);
          }
          if (!spec.has_spawn_overlap(geometry)) {
            spec.validate(geometry);
            out.push_back(std::move(spec));
          }

          std::size_t i = 0;
          for (; i < choice.size(); ++i) {
            if (++choice[i] < traffic.vehicles[i].speeds.size()) break;
            choice[i] = 0;
          }
          if (i == choice.size()) break;
        }
      }
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span<ScenarioSpec>(out));
  return out;
}

std::vector<ModeEvent> events_from_records(std::span<const TimestepRecord> records) {
  std::vector<ModeEvent> events;
  ModeLabel prev = ModeLabel::LaneKeep;
  for (const auto& r : records) {
    if (r.mode != prev) events.push_back({r.time, prev, r.mode});
    prev = r.mode;
  }
  return events;
}

PolicyError::PolicyError(std::int64_t tick, const std::string& what)
    : std::runtime_error("policy error at tick " + std::to_string(tick) + " (t=" +
                         format_number(tick_time(tick)) + " s): " + what),
      tick_(tick) {}

EpisodeRunner::EpisodeRunner(ScenarioSpec spec, DriverPolicy& driver, SensorConfig sensor,
                             Seed seed, LaneGeometry geometry)
    : spec_(std::move(spec)),
      driver_(driver),
      sensor_(sensor),
      geometry_(geometry),
      sensor_rng_(derive_seed(seed, 1)) {
  geometry_.validate();
  sensor_.validate();
  spec_.validate(geometry_);

  ego_.py = geometry_.center_of(spec_.ego_init_lane);
  ego_.vx = spec_.ego_init_speed;
  for (const auto& v : spec_.surrounding) {
    VehicleState s;
    s.px = v.init_gap_x;
    s.py = geometry_.center_of(v.lane);
    s.vx = v.init_speed;
    others_.push_back(s);
  }
  last_tick_ = static_cast<std::int64_t>(std::llround(spec_.episode_duration * kTicksPerSecond));

  trace_.episode_id = spec_.scenario_id;
  trace_.scenario_id = spec_.scenario_id;
  trace_.driver_id = driver_.driver_id();
  trace_.seed = seed;
  driver_.begin_episode(spec_, derive_seed(seed, 2));
}

const TimestepRecord& EpisodeRunner::step() {
  if (done_) throw std::logic_error("EpisodeRunner::step after episode end");
  const double t = tick_time(tick_);

  TimestepRecord rec;
  rec.time = t;
  rec.ego = ego_;
  rec.others_true = others_;
  rec.others_measured = sense(ego_, others_, sensor_, sensor_rng_);

  const DriverDecision d =
      driver_.decide(PolicyInput{tick_, t, ego_, rec.others_measured, geometry_, sensor_});
  if (!std::isfinite(d.accel) || !std::isfinite(d.lateral_rate_cmd)) {
    throw PolicyError(tick_, "non-finite controls (accel=" + format_number(d.accel) +
                                 ", lateral_rate_cmd=" + format_number(d.lateral_rate_cmd) + ")");
  }
  rec.ego_controls.accel = std::clamp(d.accel, -kMaxAccel, kMaxAccel);
  rec.ego_controls.lateral_rate_cmd =
      std::clamp(d.lateral_rate_cmd, -kMaxLateralRate, kMaxLateralRate);
  rec.mode = d.mode;
  if (d.mode != mode_) trace_.mode_events.push_back({t, mode_, d.mode});
  mode_ = d.mode;
  trace_.records.push_back(std::move(rec));
  const TimestepRecord& appended = trace_.records.back();

  if (collision()) {
    trace_.collided = true;
    done_ = true;
  } else if (tick_ >= last_tick_ || passed_all_traffic()) {
    done_ = true;
  } else {
    ego_ = step_vehicle(ego_, appended.ego_controls.accel, appended.ego_controls.lateral_rate_cmd,
                        kDt);
    const double t_next = tick_time(tick_ + 1);
    for (std::size_t i = 0; i < others_.size(); ++i) {
      const double target = spec_.surrounding[i].speed_at(t_next);
      const double accel = std::clamp((target - others_[i].vx) / kDt, -kMaxAccel, kMaxAccel);
      others_[i] = step_vehicle(others_[i], accel, 0.0, kDt);
    }
    ++tick_;
  }
  return appended;
}

void EpisodeRunner::abort() {
  trace_.partial = true;
  done_ = true;
}

Trace EpisodeRunner::take_trace() { return std::move(trace_); }

bool EpisodeRunner::collision() const {
  for (const auto& o : others_) {
    if (std::abs(o.px - ego_.px) < geometry_.vehicle_length &&
        std::abs(o.py - ego_.py) < geometry_.vehicle_width) {
      return true;
    }
  }
  return false;
}

bool EpisodeRunner::passed_all_traffic() const {
  return std::all_of(others_.begin(), others_.end(),
                     [&](const VehicleState& o) { return ego_.px - o.px > kPassMargin; });
}

Trace run_episode(const ScenarioSpec& spec, DriverPolicy& driver, const SensorConfig& sensor_cfg,
                  Seed seed, const LaneGeometry& geometry) {
  EpisodeRunner runner(spec, driver, sensor_cfg, seed, geometry);
  while (!runner.done()) runner.step();
  return runner.take_trace();
}

}  // namespace laneintent
