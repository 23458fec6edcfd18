#include <gtest/gtest.h>

#include <cmath>

#include "laneintent/evaluation.hpp"
#include "laneintent/surrogate_driver.hpp"
#include "support.hpp"

namespace laneintent {
namespace {

DriverParams no_delay() {
  DriverParams p;
  p.reaction_delay_mean = 0.0;
  p.reaction_delay_std = 0.0;
  p.label_jitter_prob = 0.0;
  return p;
}

SlotGrid lead_at_ttc(double ttc, double ego_speed) {
  SlotGrid g;
  g.ahead_same = Measurement{ttc * ego_speed, 0.0, -3.0};
  return g;
}

TEST(DecideMode, EmptySlotStaysLaneKeep) {
  ModeMachine m(no_delay());
  Rng rng(Seed{1});
  const SlotGrid g;
  const auto r = m.decide_mode(0, GuardInputs{g, 17.0, 0.0, 0.0}, SensorConfig{}, rng);
  EXPECT_EQ(r.mode, ModeLabel::LaneKeep);
  EXPECT_FALSE(r.event);
}

TEST(DecideMode, PrepareFiresBelowThreshold) {
  ModeMachine m(no_delay());
  Rng rng(Seed{1});
  const auto g = lead_at_ttc(1.30, 15.0);
  const auto r = m.decide_mode(0, GuardInputs{g, 15.0, 0.0, 0.0}, SensorConfig{}, rng);
  EXPECT_EQ(r.mode, ModeLabel::Prepare);
  EXPECT_EQ(r.event, Sigma::Prepare);
}

TEST(DecideMode, UnsafeRearGapHoldsPrepare) {
  SlotGrid g = lead_at_ttc(1.15, 15.0);
  g.behind_opposite = Measurement{-10.0, 3.5, 10.0};  // rTTC = 1.0
  const auto next = guard_transition(ModeLabel::Prepare, GuardInputs{g, 15.0, 0.0, 0.0},
                                     no_delay(), SensorConfig{});
  EXPECT_FALSE(next);
}

TEST(DecideMode, SafeGapsExecute) {
  SlotGrid g = lead_at_ttc(1.15, 15.0);
  g.behind_opposite = Measurement{-30.0, 3.5, 5.0};  // rTTC = 6
  const auto next = guard_transition(ModeLabel::Prepare, GuardInputs{g, 15.0, 0.0, 0.0},
                                     no_delay(), SensorConfig{});
  EXPECT_EQ(next, ModeLabel::LaneChange);
}

TEST(DecideMode, AbortWhenThreatRecedes) {
  const auto p = no_delay();
  const auto g = lead_at_ttc(p.ttc_prep_threshold + p.abort_hysteresis + 0.01, 15.0);
  EXPECT_EQ(guard_transition(ModeLabel::Prepare, GuardInputs{g, 15.0, 0.0, 0.0}, p, SensorConfig{}),
            ModeLabel::LaneKeep);
  const SlotGrid empty;
  EXPECT_EQ(guard_transition(ModeLabel::Prepare, GuardInputs{empty, 15.0, 0.0, 0.0}, p, SensorConfig{}),
            ModeLabel::LaneKeep);
}

TEST(DecideMode, SettleNeedsSmallErrorAndHeading) {
  const SlotGrid g;
  const auto p = no_delay();
  EXPECT_EQ(guard_transition(ModeLabel::LaneChange, GuardInputs{g, 15.0, 0.1, 0.01}, p, SensorConfig{}),
            ModeLabel::LaneKeep);
  EXPECT_FALSE(guard_transition(ModeLabel::LaneChange, GuardInputs{g, 15.0, 0.2, 0.01}, p, SensorConfig{}));
  EXPECT_FALSE(guard_transition(ModeLabel::LaneChange, GuardInputs{g, 15.0, 0.1, 0.03}, p, SensorConfig{}));
}

SlotGrid random_slots(Rng& rng) {
  SlotGrid g;
  auto maybe = [&](double lo, double hi) -> std::optional<Measurement> {
    if (rng.bernoulli(0.3)) return std::nullopt;
    return Measurement{rng.uniform(lo, hi), 0.0, rng.uniform(-8.0, 8.0)};
  };
  g.ahead_same = maybe(1.0, 50.0);
  g.ahead_opposite = maybe(1.0, 50.0);
  g.behind_opposite = maybe(-50.0, 0.0);
  return g;
}

TEST(ModeMachine, OnlyLegalEdgesUnderRandomStimuli) {
  Rng stim(Seed{11});
  for (int run = 0; run < 50; ++run) {
    ModeMachine m{DriverParams{}};
    Rng rng(derive_seed(Seed{12}, run));
    ModeLabel prev = ModeLabel::LaneKeep;
    for (std::int64_t tick = 0; tick < 2000; ++tick) {
      const auto g = random_slots(stim);
      const GuardInputs in{g, stim.uniform(10.0, 25.0), stim.uniform(-0.3, 0.3),
                           stim.uniform(-0.05, 0.05)};
      const auto r = m.decide_mode(tick, in, SensorConfig{}, rng);
      if (r.mode != prev) {
        const auto sigma = sigma_for(prev, r.mode);
        ASSERT_TRUE(sigma) << mode_name(prev) << " -> " << mode_name(r.mode);
        EXPECT_EQ(r.event, sigma);
      } else {
        EXPECT_FALSE(r.event);
      }
      prev = r.mode;
    }
  }
}

TEST(ModeMachine, ZeroDelayIsPureFunctionOfGuards) {
  Rng stim(Seed{13});
  ModeMachine m(no_delay());
  Rng rng(Seed{14});
  ModeLabel current = ModeLabel::LaneKeep;
  for (std::int64_t tick = 0; tick < 5000; ++tick) {
    const auto g = random_slots(stim);
    const GuardInputs in{g, stim.uniform(10.0, 25.0), stim.uniform(-0.3, 0.3), stim.uniform(-0.05, 0.05)};
    const auto expect = guard_transition(current, in, no_delay(), SensorConfig{}).value_or(current);
    const auto r = m.decide_mode(tick, in, SensorConfig{}, rng);
    ASSERT_EQ(r.mode, expect);
    current = r.mode;
  }
}

TEST(ControlForMode, LaneKeepAtSetpointIsIdle) {
  DriverParams p;
  VehicleState ego;
  ego.vx = p.desired_speed;
  const auto c = control_for_mode(ModeLabel::LaneKeep, ego, LaneId::Right, SlotGrid{}, p,
                                  LaneGeometry{}, std::nullopt, 0.0);
  EXPECT_NEAR(c.accel, 0.0, 1e-12);
  EXPECT_NEAR(c.lateral_rate_cmd, 0.0, 1e-12);
}

TEST(ControlForMode, PrepareBiasesTowardDivider) {
  DriverParams p;
  VehicleState ego;
  ego.vx = p.desired_speed;
  const auto c = control_for_mode(ModeLabel::Prepare, ego, LaneId::Right, SlotGrid{}, p,
                                  LaneGeometry{}, std::nullopt, 0.0);
  EXPECT_NEAR(c.lateral_rate_cmd, 1.2 * 0.3, 1e-12);
  VehicleState left = ego;
  left.py = 3.5;
  const auto l = control_for_mode(ModeLabel::Prepare, left, LaneId::Left, SlotGrid{}, p,
                                  LaneGeometry{}, std::nullopt, 0.0);
  EXPECT_NEAR(l.lateral_rate_cmd, -0.36, 1e-12);
}

TEST(LaneChangeReference, EndsAtTargetCentre) {
  const LaneChangePlan plan{0.2, 3.5, 2.5};
  EXPECT_EQ(lane_change_reference(plan, 2.5), 3.5);
  EXPECT_EQ(lane_change_reference(LaneChangePlan{0.2, 3.5, 0.0}, 2.5), 0.2);
  EXPECT_EQ(lane_change_reference(LaneChangePlan{0.2, 3.5, 9.0}, 2.5), 3.5);
}

TEST(LaneChangeReference, MonotoneBetweenEndpoints) {
  double last = 0.0;
  for (int i = 0; i <= 150; ++i) {
    const double y = lane_change_reference(LaneChangePlan{0.0, 3.5, i / 60.0}, 2.5);
    EXPECT_GE(y, last - 1e-12);
    last = y;
  }
}

Trace one_event_trace(double event_time, double end_time) {
  std::vector<ModeLabel> modes;
  const auto ev = tick_of(event_time);
  for (std::int64_t k = 0; k <= tick_of(end_time); ++k) {
    modes.push_back(k < ev ? ModeLabel::LaneKeep : ModeLabel::Prepare);
  }
  return test::synthetic_trace(modes);
}

TEST(LabelNoise, ZeroProbabilityIsIdentity) {
  DriverParams p;
  p.label_jitter_prob = 0.0;
  const auto t = one_event_trace(5.0, 10.0);
  Rng rng(Seed{1});
  EXPECT_EQ(apply_label_noise(t, p, rng), t);
}

TEST(LabelNoise, ShiftRelabelsExactlyTheMovedTicks) {
  DriverParams p;
  p.label_jitter_prob = 1.0;
  const auto t = one_event_trace(5.0, 10.0);
  bool saw_eleven = false;
  for (std::uint64_t s = 0; s < 400; ++s) {
    Rng rng(Seed{s});
    const auto out = apply_label_noise(t, p, rng);
    ASSERT_EQ(out.mode_events.size(), 1u);
    const auto shift = tick_of(out.mode_events[0].time) - tick_of(5.0);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < t.records.size(); ++i) changed += t.records[i].mode != out.records[i].mode;
    EXPECT_EQ(changed, static_cast<std::size_t>(std::abs(shift)));
    if (shift == 11) {
      saw_eleven = true;
      EXPECT_NEAR(out.mode_events[0].time, 5.0 + 11.0 / 60.0, 1e-12);
      EXPECT_NEAR(out.mode_events[0].time, 5.1833, 1e-4);
    }
  }
  EXPECT_TRUE(saw_eleven);
}

TEST(LabelNoise, KeepsEventOrder) {
  DriverParams p;
  p.label_jitter_prob = 1.0;
  p.label_jitter_std = 1.0;
  std::vector<ModeLabel> modes(600, ModeLabel::LaneKeep);
  for (std::size_t k = 300; k < 303; ++k) modes[k] = ModeLabel::Prepare;
  for (std::size_t k = 303; k < 600; ++k) modes[k] = ModeLabel::LaneChange;
  const auto t = test::synthetic_trace(modes);
  ASSERT_EQ(t.mode_events.size(), 2u);
  for (std::uint64_t s = 0; s < 500; ++s) {
    Rng rng(Seed{s});
    const auto out = apply_label_noise(t, p, rng);
    ASSERT_EQ(out.mode_events.size(), 2u);
    EXPECT_LT(out.mode_events[0].time, out.mode_events[1].time);
    EXPECT_EQ(out.mode_events, events_from_records(out.records));
  }
}

TEST(SampleProfiles, DeterministicAndValid) {
  const auto a = sample_profiles(5, Seed{11});
  EXPECT_EQ(a, sample_profiles(5, Seed{11}));
  ASSERT_EQ(a.size(), 5u);
  for (const auto& p : a) {
    EXPECT_NO_THROW(p.params.validate());
    EXPECT_LT(p.params.ttc_lc_threshold, p.params.ttc_prep_threshold);
    EXPECT_GE(p.params.desired_speed, 17.0);
    EXPECT_LE(p.params.desired_speed, 19.0);
  }
}

TEST(Surrogate, PrepareDeviatesMoreThanLaneKeep) {
  const auto specs = generate_scenarios(
      ScenarioGrid{{15.0, 17.5, 20.0},
                   {LaneId::Right, LaneId::Left},
                   {{"brake", {{35.0, true, {{17.0, 10.0}, {16.0, 11.0}}, 1.0, 4.0}}},
                    {"slow", {{50.0, true, {{12.0, 12.0}, {14.0, 14.0}}, 0.0, 0.0}}}},
                   20.0},
      Seed{1});
  DriverParams p = no_delay();
  SensorConfig sensor;
  sensor.pos_noise_std = sensor.vel_noise_std = 0.0;
  SurrogateDriver d(DriverProfile{"driver1", p});
  ModeDistributions dist;
  int episodes = 0;
  for (int pass = 0; episodes < 50; ++pass) {
    for (const auto& s : specs) {
      if (episodes >= 50) break;
      const auto t = run_episode(s, d, sensor, derive_seed(Seed{7}, pass, episodes));
      collect_distributions(t, LaneGeometry{}, sensor, dist);
      ++episodes;
    }
  }
  auto mean_abs = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s / static_cast<double>(v.size());
  };
  const auto& lk = dist.lateral[mode_index(ModeLabel::LaneKeep)];
  const auto& pr = dist.lateral[mode_index(ModeLabel::Prepare)];
  ASSERT_FALSE(pr.empty());
  EXPECT_GE(mean_abs(pr) - mean_abs(lk), 0.15);
}

TEST(Surrogate, PrepareSettlesAtLateralBias) {
  const DriverParams p;
  const LaneGeometry geo;
  for (LaneId lane : {LaneId::Right, LaneId::Left}) {
    VehicleState ego;
    ego.py = geo.center_of(lane);
    ego.vx = p.desired_speed;
    double prev_accel = 0.0;
    for (int k = 0; k < 600; ++k) {
      const auto c = control_for_mode(ModeLabel::Prepare, ego, lane, SlotGrid{}, p, geo,
                                      std::nullopt, prev_accel);
      prev_accel = c.accel;
      ego = step_vehicle(ego, c.accel, c.lateral_rate_cmd, kDt);
    }
    const double toward = lane == LaneId::Right ? 1.0 : -1.0;
    EXPECT_NEAR(toward * (ego.py - geo.center_of(lane)), p.prep_lateral_bias, 1e-3);
  }
}

}  // namespace
}  // namespace laneintent
