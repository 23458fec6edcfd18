#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "laneintent/perception.hpp"
#include "support.hpp"

namespace laneintent {
namespace {

TEST(LaneOf, BelowDividerIsRight) {
  LaneGeometry g;
  EXPECT_EQ(lane_of(0.0, g), LaneId::Right);
  EXPECT_EQ(lane_of(3.5, g), LaneId::Left);
}

TEST(LaneOf, DividerBelongsToLeft) { EXPECT_EQ(lane_of(1.75, LaneGeometry{}), LaneId::Left); }

TEST(LaneGeometryValidate, RejectsInconsistentLanes) {
  LaneGeometry g;
  g.divider_y = 5.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(TimeMetrics, WorkedExample) {
  const auto t = compute_time_metrics(30.0, 15.0, 5.0, SensorConfig{});
  EXPECT_NEAR(t.ttc, 2.0, 1e-9);
  EXPECT_NEAR(t.thw, 0.5, 1e-9);
  EXPECT_NEAR(t.rttc, 6.0, 1e-9);
  EXPECT_NEAR(t.rthw, 1.0 / 6.0, 1e-9);
  EXPECT_NEAR(t.rthw, 0.1667, 1e-4);
}

TEST(TimeMetrics, PrepareThresholdDistance) {
  EXPECT_NEAR(compute_time_metrics(23.45, 17.5, 1.0, SensorConfig{}).ttc, 1.34, 1e-9);
}

TEST(TimeMetrics, SmallRelativeSpeedCapsInverseTime) {
  const auto t = compute_time_metrics(30.0, 15.0, 0.05, SensorConfig{});
  EXPECT_EQ(t.rttc, 10.0);
  EXPECT_EQ(t.rthw, 0.0);
}

TEST(TimeMetrics, SmallDistanceZeroesHeadway) {
  const auto t = compute_time_metrics(0.05, 15.0, 3.0, SensorConfig{});
  EXPECT_NEAR(t.ttc, 0.05 / 15.0, 1e-15);
  EXPECT_EQ(t.thw, 0.0);
  EXPECT_EQ(t.rthw, 0.0);
}

TEST(TimeMetrics, StoppedEgoCapsTtc) {
  const auto t = compute_time_metrics(20.0, 0.05, 3.0, SensorConfig{});
  EXPECT_EQ(t.ttc, 10.0);
  EXPECT_EQ(t.thw, 0.0);
}

TEST(TimeMetrics, ReciprocalPairsMultiplyToOneWhenUnclamped) {
  Rng rng(Seed{17});
  const SensorConfig cfg;
  int checked = 0;
  for (int i = 0; i < 20000; ++i) {
    const double d = rng.uniform(0.5, 50.0);
    const double ve = rng.uniform(0.5, 40.0);
    const double vi = rng.uniform(-20.0, 20.0);
    const auto t = compute_time_metrics(d, ve, vi, cfg);
    if (d / ve < cfg.time_metric_cap && ve / d < cfg.time_metric_cap) {
      EXPECT_NEAR(t.ttc * t.thw, 1.0, 1e-12);
      ++checked;
    }
    const double avi = std::abs(vi);
    if (avi >= cfg.denom_epsilon && d / avi < cfg.time_metric_cap && avi / d < cfg.time_metric_cap) {
      EXPECT_NEAR(t.rttc * t.rthw, 1.0, 1e-12);
    }
  }
  EXPECT_GT(checked, 10000);
}

TEST(TimeMetrics, AlwaysWithinCap) {
  Rng rng(Seed{18});
  const SensorConfig cfg;
  for (int i = 0; i < 20000; ++i) {
    const auto t = compute_time_metrics(rng.uniform(0.0, 60.0), rng.uniform(0.0, 40.0),
                                        rng.uniform(-30.0, 30.0), cfg);
    for (double v : {t.ttc, t.thw, t.rttc, t.rthw}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, cfg.time_metric_cap);
    }
  }
}

TEST(Sense, RangeGateDropsFarVehicles) {
  SensorConfig cfg;
  cfg.pos_noise_std = cfg.vel_noise_std = 0.0;
  Rng rng(Seed{1});
  VehicleState ego;
  ego.vx = 15.0;
  VehicleState far = ego;
  far.px = 60.0;
  std::vector<VehicleState> others{far};
  EXPECT_TRUE(sense(ego, others, cfg, rng).empty());
}

TEST(Sense, NoiselessPassThrough) {
  SensorConfig cfg;
  cfg.pos_noise_std = cfg.vel_noise_std = 0.0;
  Rng rng(Seed{1});
  VehicleState ego;
  ego.vx = 15.0;
  VehicleState other;
  other.px = 30.0;
  other.vx = 13.0;
  std::vector<VehicleState> others{other};
  const auto m = sense(ego, others, cfg, rng);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0], (Measurement{30.0, 0.0, -2.0}));
}

TEST(Sense, NoiseIsUnbiased) {
  const SensorConfig cfg;
  Rng rng(Seed{99});
  VehicleState ego;
  VehicleState other;
  other.px = 25.0;
  std::vector<VehicleState> others{other};
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sense(ego, others, cfg, rng).at(0).rel_x;
  EXPECT_NEAR(sum / n, 25.0, 3.0 * cfg.pos_noise_std / std::sqrt(double(n)));
}

TEST(AssignSlots, SingleLeadFillsSlotOne) {
  VehicleState ego;
  std::vector<Measurement> m{{25.0, 0.0, -3.0}};
  const auto g = assign_slots(ego, LaneId::Right, m, LaneGeometry{});
  ASSERT_TRUE(g.ahead_same);
  EXPECT_EQ(*g.ahead_same, m[0]);
  EXPECT_FALSE(g.ahead_opposite);
  EXPECT_FALSE(g.behind_opposite);
}

TEST(AssignSlots, NearestOppositeCandidateWins) {
  VehicleState ego;
  std::vector<Measurement> m{{18.0, 3.5, 0.0}, {7.0, 3.5, 0.0}};
  const auto g = assign_slots(ego, LaneId::Right, m, LaneGeometry{});
  ASSERT_TRUE(g.ahead_opposite);
  EXPECT_EQ(g.ahead_opposite->rel_x, 7.0);
}

TEST(AssignSlots, LeftLaneMirrorsRearSlot) {
  VehicleState ego;
  ego.py = 3.5;
  std::vector<Measurement> m{{-10.0, -3.5, 0.0}};
  const auto g = assign_slots(ego, LaneId::Left, m, LaneGeometry{});
  ASSERT_TRUE(g.behind_opposite);
  EXPECT_EQ(g.behind_opposite->rel_x, -10.0);
  EXPECT_FALSE(g.ahead_same);
}

TEST(AssignSlots, SlotsMatchBruteForceOnRandomScenes) {
  const LaneGeometry geo;
  Rng rng(Seed{2024});
  for (int scene = 0; scene < 2000; ++scene) {
    VehicleState ego;
    ego.py = rng.uniform(-0.8, 4.3);
    const LaneId lane = lane_of(ego.py, geo);
    std::vector<Measurement> m(rng.index(7));
    for (auto& x : m) {
      x.rel_x = rng.uniform(-50.0, 50.0);
      x.rel_y = rng.uniform(-4.5, 4.5);
      x.rel_vx = rng.uniform(-5.0, 5.0);
    }
    const auto g = assign_slots(ego, lane, m, geo);

    std::optional<Measurement> want[3];
    for (const auto& x : m) {
      const bool same = lane_of(ego.py + x.rel_y, geo) == lane;
      int slot = -1;
      if (same && x.rel_x > 0) slot = 0;
      if (!same) slot = x.rel_x > 0 ? 1 : 2;
      if (slot < 0) continue;
      if (!want[slot] || std::abs(x.rel_x) < std::abs(want[slot]->rel_x)) want[slot] = x;
    }
    EXPECT_EQ(g.ahead_same, want[0]);
    EXPECT_EQ(g.ahead_opposite, want[1]);
    EXPECT_EQ(g.behind_opposite, want[2]);
    EXPECT_TRUE(!g.ahead_same || g.ahead_same->rel_x > 0.0);
    EXPECT_TRUE(!g.ahead_opposite || g.ahead_opposite->rel_x > 0.0);
    EXPECT_TRUE(!g.behind_opposite || g.behind_opposite->rel_x <= 0.0);
  }
}

TEST(Featurize, AllEmptyPadding) {
  VehicleState ego;
  ego.vx = 15.0;
  const auto fv = featurize(ego, LaneId::Right, SlotGrid{}, SensorConfig{}, LaneGeometry{});
  const std::array<double, kFeatureCount> want = {50, 0, 10, 0, 10, 0, 50, 0, 10, 0, 10, 0,
                                                  -50, 0, 10, 0, 10, 0, 15, 0, 0, -1};
  EXPECT_EQ(fv.values, want);
  EXPECT_EQ(fv.present, (std::array<bool, 3>{false, false, false}));
}

TEST(Featurize, SlotOneBlock) {
  VehicleState ego;
  ego.vx = 15.0;
  SlotGrid g;
  g.ahead_same = Measurement{30.0, 0.0, -2.0};
  const auto fv = featurize(ego, LaneId::Right, g, SensorConfig{}, LaneGeometry{});
  EXPECT_EQ(fv.values[0], 30.0);
  EXPECT_EQ(fv.values[1], -2.0);
  EXPECT_NEAR(fv.values[2], 2.0, 1e-12);
  EXPECT_NEAR(fv.values[3], 0.5, 1e-12);
  EXPECT_EQ(fv.values[4], 10.0);  // 30 / 2 = 15 is clamped to the cap
  EXPECT_NEAR(fv.values[5], 2.0 / 30.0, 1e-12);
}

TEST(Featurize, HeadingFlagOnlyTouchesHeading) {
  VehicleState ego;
  ego.vx = 15.0;
  ego.vy = 0.4;
  ego.theta = std::atan2(0.4, 15.0);
  ego.py = 0.3;
  SlotGrid g;
  g.ahead_same = Measurement{30.0, 0.0, -2.0};
  SensorConfig on;
  SensorConfig off;
  off.include_ego_heading = false;
  auto a = featurize(ego, LaneId::Right, g, on, LaneGeometry{});
  auto b = featurize(ego, LaneId::Right, g, off, LaneGeometry{});
  EXPECT_EQ(b.values[20], 0.0);
  EXPECT_NE(a.values[20], 0.0);
  a.values[20] = 0.0;
  EXPECT_EQ(a.values, b.values);
}

TEST(Featurize, MirroredSceneGivesSameFeatures) {
  const LaneGeometry geo;
  SensorConfig cfg;
  Rng rng(Seed{77});
  for (int scene = 0; scene < 1000; ++scene) {
    VehicleState ego = test::random_state(rng);
    ego.py = rng.uniform(-0.8, 1.7);
    std::vector<Measurement> m(rng.index(6));
    for (auto& x : m) {
      x.rel_x = rng.uniform(-50.0, 50.0);
      x.rel_y = rng.uniform(-4.0, 4.0);
      x.rel_vx = rng.uniform(-5.0, 5.0);
    }
    VehicleState mirrored = ego;
    mirrored.py = 2.0 * geo.divider_y - ego.py;
    mirrored.vy = -ego.vy;
    mirrored.theta = -ego.theta;
    std::vector<Measurement> mm = m;
    for (auto& x : mm) x.rel_y = -x.rel_y;
    // Exact boundary points would change lane under the >= rule; skip them.
    bool on_boundary = std::abs(mirrored.py - geo.divider_y) < 1e-9;
    for (const auto& x : m) on_boundary |= std::abs(ego.py + x.rel_y - geo.divider_y) < 1e-9;
    if (on_boundary) continue;

    for (bool heading : {false, true}) {
      cfg.include_ego_heading = heading;
      const auto a =
          featurize(ego, LaneId::Right, assign_slots(ego, LaneId::Right, m, geo), cfg, geo);
      const auto b = featurize(mirrored, LaneId::Left,
                               assign_slots(mirrored, LaneId::Left, mm, geo), cfg, geo);
      for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(a.values[i], b.values[i]) << i;
      EXPECT_NEAR(a.values[19], -b.values[19], 1e-12);
      EXPECT_EQ(a.values[20], -b.values[20]);
      EXPECT_EQ(a.values[21], -1.0);
      EXPECT_EQ(b.values[21], 1.0);
    }
  }
}

TEST(Normalizer, ConstantColumnBecomesZero) {
  const std::vector<double> rows = {4.0, 1.0, 4.0, 2.0, 4.0, 3.0};
  const auto n = Normalizer::fit(rows, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(n.apply(std::span<const double>(rows).subspan(r * 2, 2))[0], 0.0);
  }
}

TEST(Normalizer, TwoPointZScore) {
  const std::vector<double> rows = {0.0, 2.0};
  const auto n = Normalizer::fit(rows, 1);
  EXPECT_EQ(n.mean()[0], 1.0);
  EXPECT_EQ(n.stddev()[0], 1.0);
  EXPECT_EQ(n.apply(std::span<const double>(rows).subspan(0, 1))[0], -1.0);
  EXPECT_EQ(n.apply(std::span<const double>(rows).subspan(1, 1))[0], 1.0);
}

TEST(Normalizer, EmptyInputThrows) {
  EXPECT_THROW(Normalizer::fit(std::span<const double>{}, 3), std::exception);
}

TEST(Normalizer, TransformedTrainColumnsAreStandard) {
  Rng rng(Seed{5});
  const std::size_t cols = 7, n = 3000;
  std::vector<double> rows(cols * n);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rng.normal(double(i % cols) * 3.0, 1.0 + i % 3);
  const auto norm = Normalizer::fit(rows, cols);
  for (std::size_t r = 0; r < n; ++r) norm.apply_in_place(std::span<double>(rows).subspan(r * cols, cols));
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) s += rows[r * cols + c];
    const double mean = s / n;
    for (std::size_t r = 0; r < n; ++r) ss += (rows[r * cols + c] - mean) * (rows[r * cols + c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / n), 1.0, 1e-9);
  }
}

TEST(Normalizer, MismatchedLengthsThrow) {
  EXPECT_THROW(Normalizer({1.0, 2.0}, {1.0}), std::invalid_argument);
}

}  // namespace
}  // namespace laneintent
