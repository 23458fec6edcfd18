#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "laneintent/dataset_io.hpp"
#include "laneintent/simulation.hpp"
#include "laneintent/surrogate_driver.hpp"
#include "support.hpp"

namespace laneintent {
namespace {

// Scalar re-statement of the documented kinematics, written independently.
VehicleState reference_step(VehicleState s, double a, double cmd, double dt) {
  VehicleState n;
  n.px = s.px + s.vx * dt;
  n.py = s.py + s.vy * dt;
  n.vx = s.vx + a * dt;
  if (n.vx < 0) n.vx = 0;
  if (n.vx > 40) n.vx = 40;
  double dvy = (cmd - s.vy) / 0.2 * dt;
  const double limit = 15.0 * dt;
  if (dvy > limit) dvy = limit;
  if (dvy < -limit) dvy = -limit;
  n.vy = s.vy + dvy;
  n.theta = std::atan2(n.vy, n.vx);
  return n;
}

TEST(StepVehicle, ConstantVelocity) {
  VehicleState s;
  s.vx = 15.0;
  const auto n = step_vehicle(s, 0.0, 0.0, 1.0 / 60.0);
  EXPECT_NEAR(n.px, 0.25, 1e-12);
  EXPECT_EQ(n.py, 0.0);
  EXPECT_EQ(n.vx, 15.0);
  EXPECT_EQ(n.vy, 0.0);
  EXPECT_EQ(n.theta, 0.0);
}

TEST(StepVehicle, EulerAcceleration) {
  VehicleState s;
  s.vx = 15.0;
  const auto n = step_vehicle(s, 3.0, 0.0, 1.0 / 60.0);
  EXPECT_NEAR(n.vx, 15.05, 1e-12);
  EXPECT_NEAR(n.px, 0.25, 1e-12);
}

TEST(StepVehicle, HeadingFollowsVelocityAfterLag) {
  Rng rng(Seed{3});
  for (int i = 0; i < 5000; ++i) {
    VehicleState s;
    s.vx = 15.0;
    s.vy = 1.0;
    s.theta = rng.uniform(-1.0, 1.0);
    const double a = rng.uniform(-6.0, 6.0);
    const double cmd = rng.uniform(-3.0, 3.0);
    const auto got = step_vehicle(s, a, cmd, 1.0 / 60.0);
    const auto want = reference_step(s, a, cmd, 1.0 / 60.0);
    EXPECT_NEAR(got.vy, want.vy, 1e-12);
    EXPECT_NEAR(got.theta, want.theta, 1e-12);
    EXPECT_NEAR(got.theta, std::atan2(got.vy, got.vx), 1e-15);
  }
}

TEST(StepVehicle, MatchesReferenceOnRandomStates) {
  Rng rng(Seed{4});
  for (int i = 0; i < 20000; ++i) {
    const auto s = test::random_state(rng);
    const double a = rng.uniform(-6.0, 6.0);
    const double cmd = rng.uniform(-3.0, 3.0);
    const auto got = step_vehicle(s, a, cmd, kDt);
    const auto want = reference_step(s, a, cmd, kDt);
    EXPECT_NEAR(got.px, want.px, 1e-12);
    EXPECT_NEAR(got.py, want.py, 1e-12);
    EXPECT_NEAR(got.vx, want.vx, 1e-12);
    EXPECT_NEAR(got.vy, want.vy, 1e-12);
    EXPECT_NEAR(got.theta, want.theta, 1e-12);
  }
}

TEST(StepVehicle, ZeroCommandsKeepStraightMotion) {
  Rng rng(Seed{5});
  for (int i = 0; i < 500; ++i) {
    VehicleState s = test::random_state(rng);
    s.vy = 0.0;
    s.theta = 0.0;
    const VehicleState start = s;
    for (int k = 1; k <= 120; ++k) {
      s = step_vehicle(s, 0.0, 0.0, kDt);
      EXPECT_NEAR(s.px, start.px + start.vx * kDt * k, 1e-9);
      EXPECT_EQ(s.py, start.py);
      EXPECT_EQ(s.vx, start.vx);
      EXPECT_EQ(s.vy, 0.0);
      EXPECT_EQ(s.theta, 0.0);
    }
  }
}

TEST(StepVehicle, HeldLateralCommandKeepsLateralSpeed) {
  Rng rng(Seed{6});
  for (int i = 0; i < 500; ++i) {
    VehicleState s = test::random_state(rng);
    const VehicleState start = s;
    for (int k = 0; k < 60; ++k) s = step_vehicle(s, 0.0, start.vy, kDt);
    EXPECT_EQ(s.vy, start.vy);
    EXPECT_EQ(s.vx, start.vx);
    EXPECT_NEAR(s.py, start.py + start.vy * 1.0, 1e-9);
  }
}

TEST(StepVehicle, RejectsBadInput) {
  VehicleState s;
  EXPECT_THROW(step_vehicle(s, 7.0, 0.0, kDt), DomainError);
  EXPECT_THROW(step_vehicle(s, 0.0, 3.5, kDt), DomainError);
  EXPECT_THROW(step_vehicle(s, 0.0, 0.0, 0.0), DomainError);
  s.px = std::nan("");
  EXPECT_THROW(step_vehicle(s, 0.0, 0.0, kDt), DomainError);
}

ScenarioGrid small_grid() {
  ScenarioGrid g;
  g.ego_speeds = {15.0, 20.0};
  g.ego_lanes = {LaneId::Right, LaneId::Left};
  g.episode_duration = 10.0;
  g.traffic = {
      {"one", {{35.0, true, {{17.0, 10.0}}, 1.0, 4.0}}},
      {"two", {{35.0, true, {{17.0, 17.0}}, 0.0, 0.0}, {20.0, false, {{20.0, 20.0}}, 0.0, 0.0}}},
      {"three",
       {{35.0, true, {{17.0, 17.0}}, 0.0, 0.0},
        {40.0, false, {{18.0, 18.0}}, 0.0, 0.0},
        {-25.0, false, {{20.0, 20.0}}, 0.0, 0.0}}},
  };
  return g;
}

TEST(GenerateScenarios, ProductCount) {
  EXPECT_EQ(generate_scenarios(small_grid(), Seed{1}).size(), 12u);
}

TEST(GenerateScenarios, DeterministicInSeed) {
  EXPECT_EQ(generate_scenarios(small_grid(), Seed{9}), generate_scenarios(small_grid(), Seed{9}));
  EXPECT_NE(generate_scenarios(small_grid(), Seed{9}), generate_scenarios(small_grid(), Seed{10}));
}

TEST(GenerateScenarios, OverlappingSpawnsDropped) {
  auto g = small_grid();
  g.traffic.push_back({"clash", {{20.0, false, {{20.0, 20.0}}, 0.0, 0.0}, {20.0, false, {{18.0, 18.0}}, 0.0, 0.0}}});
  const auto specs = generate_scenarios(g, Seed{1});
  EXPECT_EQ(specs.size(), 12u);
  for (const auto& s : specs) EXPECT_FALSE(s.has_spawn_overlap());
}

TEST(GenerateScenarios, EmptyGridThrows) {
  ScenarioGrid g;
  EXPECT_THROW(generate_scenarios(g, Seed{1}), DomainError);
}

ScenarioSpec lead_spec(double init, double final, double gap = 35.0, double duration = 20.0) {
  ScenarioSpec s;
  s.scenario_id = "lead";
  s.ego_init_speed = 17.0;
  s.episode_duration = duration;
  SurroundingVehicleSpec v;
  v.init_gap_x = gap;
  v.init_speed = init;
  v.final_speed = final;
  v.speed_ramp_start = 1.0;
  v.speed_ramp_duration = init == final ? 0.0 : 4.0;
  s.surrounding = {v};
  return s;
}

TEST(RunEpisode, EqualSpeedLeadNeverTriggers) {
  DriverProfile p{"driver1", {}};
  p.params.desired_speed = 17.0;
  SurrogateDriver d(p);
  const auto t = run_episode(lead_spec(17.0, 17.0, 45.0), d, SensorConfig{}, Seed{1});
  for (const auto& r : t.records) ASSERT_EQ(r.mode, ModeLabel::LaneKeep);
  EXPECT_TRUE(t.mode_events.empty());
}

TEST(RunEpisode, BrakingLeadProducesFullManoeuvre) {
  SurrogateDriver d(DriverProfile{"driver1", {}});
  const auto t = run_episode(lead_spec(17.0, 10.0), d, SensorConfig{}, Seed{1});
  ASSERT_GE(t.mode_events.size(), 3u);
  EXPECT_EQ(t.mode_events[0].from, ModeLabel::LaneKeep);
  EXPECT_EQ(t.mode_events[0].to, ModeLabel::Prepare);
  EXPECT_EQ(t.mode_events[1].to, ModeLabel::LaneChange);
  EXPECT_EQ(t.mode_events[2].to, ModeLabel::LaneKeep);
  EXPECT_FALSE(t.collided);
}

TEST(RunEpisode, SameSeedSameBytes) {
  SurrogateDriver a(DriverProfile{"driver1", {}});
  SurrogateDriver b(DriverProfile{"driver1", {}});
  const auto ta = run_episode(lead_spec(17.0, 10.0), a, SensorConfig{}, Seed{42});
  const auto tb = run_episode(lead_spec(17.0, 10.0), b, SensorConfig{}, Seed{42});
  std::ostringstream sa, sb;
  write_trace(ta, sa);
  write_trace(tb, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(ta, tb);
}

TEST(RunEpisode, RecordCountMatchesDuration) {
  DriverProfile p{"driver1", {}};
  p.params.desired_speed = 17.0;
  SurrogateDriver d(p);
  const auto t = run_episode(lead_spec(17.0, 17.0, 45.0, 10.0), d, SensorConfig{}, Seed{2});
  EXPECT_EQ(t.records.size(), 601u);
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    EXPECT_EQ(t.records[i].time, tick_time(static_cast<std::int64_t>(i)));
  }
}

TEST(RunEpisode, FeaturesIgnoreLoggedControls) {
  SurrogateDriver d(DriverProfile{"driver1", {}});
  auto t = run_episode(lead_spec(17.0, 10.0), d, SensorConfig{}, Seed{3});
  const auto before = trace_rows(t, SensorConfig{}, LaneGeometry{});
  for (auto& r : t.records) r.ego_controls = Controls{5.0, -2.0};
  const auto after = trace_rows(t, SensorConfig{}, LaneGeometry{});
  EXPECT_EQ(before.features, after.features);
  EXPECT_EQ(before.labels, after.labels);
}

class ExplodingPolicy : public DriverPolicy {
 public:
  void begin_episode(const ScenarioSpec&, Seed) override {}
  DriverDecision decide(const PolicyInput& in) override {
    DriverDecision d;
    if (in.tick == 5) d.accel = std::nan("");
    return d;
  }
  std::string driver_id() const override { return "x"; }
};

TEST(RunEpisode, NonFiniteControlsRaisePolicyError) {
  ExplodingPolicy p;
  try {
    run_episode(lead_spec(17.0, 17.0), p, SensorConfig{}, Seed{1});
    FAIL();
  } catch (const PolicyError& e) {
    EXPECT_EQ(e.tick(), 5);
  }
}

TEST(EventsFromRecords, RebuildsTransitions) {
  const auto t = test::synthetic_trace({ModeLabel::LaneKeep, ModeLabel::Prepare, ModeLabel::Prepare,
                                        ModeLabel::LaneChange, ModeLabel::LaneKeep});
  ASSERT_EQ(t.mode_events.size(), 3u);
  EXPECT_EQ(t.mode_events[0], (ModeEvent{tick_time(1), ModeLabel::LaneKeep, ModeLabel::Prepare}));
  EXPECT_EQ(t.mode_events[2], (ModeEvent{tick_time(4), ModeLabel::LaneChange, ModeLabel::LaneKeep}));
}

}  // namespace
}  // namespace laneintent
