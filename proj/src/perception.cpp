#include "laneintent/perception.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace laneintent {

void SensorConfig::validate() const {
  if (!(detection_radius > 0.0)) throw std::invalid_argument("sensor: detection_radius must be > 0");
  if (!(time_metric_cap > 0.0)) throw std::invalid_argument("sensor: time_metric_cap must be > 0");
  if (!(denom_epsilon > 0.0)) throw std::invalid_argument("sensor: denom_epsilon must be > 0");
  if (pos_noise_std < 0.0 || vel_noise_std < 0.0) {
    throw std::invalid_argument("sensor: noise std must be >= 0");
  }
}

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const std::array<std::string_view, kFeatureCount> names = {
      "s1_rel_x", "s1_rel_vx", "s1_ttc", "s1_thw", "s1_rttc", "s1_rthw",
      "s2_rel_x", "s2_rel_vx", "s2_ttc", "s2_thw", "s2_rttc", "s2_rthw",
      "s3_rel_x", "s3_rel_vx", "s3_ttc", "s3_thw", "s3_rttc", "s3_rthw",
      "ego_speed", "ego_lat_dev", "ego_heading", "ego_lane"};
  return names;
}

std::vector<Measurement> sense(const VehicleState& ego, std::span<const VehicleState> others,
                               const SensorConfig& cfg, Rng& rng) {
  std::vector<Measurement> out;
  out.reserve(others.size());
  for (const auto& other : others) {
    const double dx = other.px - ego.px;
    const double dy = other.py - ego.py;
    if (std::hypot(dx, dy) > cfg.detection_radius) continue;
    Measurement m{dx, dy, other.vx - ego.vx};
    if (cfg.pos_noise_std > 0.0) {
      m.rel_x += rng.normal(0.0, cfg.pos_noise_std);
      m.rel_y += rng.normal(0.0, cfg.pos_noise_std);
    }
    if (cfg.vel_noise_std > 0.0) m.rel_vx += rng.normal(0.0, cfg.vel_noise_std);
    out.push_back(m);
  }
  return out;
}

SlotGrid assign_slots(const VehicleState& ego, LaneId ego_lane,
                      std::span<const Measurement> measurements, const LaneGeometry& geometry) {
  SlotGrid grid;
  auto offer = [](std::optional<Measurement>& slot, const Measurement& m) {
    // Strict comparison: the first of equally near candidates wins.
    if (!slot || std::abs(m.rel_x) < std::abs(slot->rel_x)) slot = m;
  };
  for (const auto& m : measurements) {
    const bool same_lane = lane_of(ego.py + m.rel_y, geometry) == ego_lane;
    if (same_lane) {
      if (m.rel_x > 0.0) offer(grid.ahead_same, m);
      // Same-lane followers have no slot.
    } else if (m.rel_x > 0.0) {
      offer(grid.ahead_opposite, m);
    } else {
      offer(grid.behind_opposite, m);
    }
  }
  return grid;
}

TimeMetrics compute_time_metrics(double distance, double ego_speed, double rel_speed,
                                 const SensorConfig& cfg) {
  const double d = std::abs(distance);
  const double ve = std::abs(ego_speed);
  const double vi = std::abs(rel_speed);
  const double cap = cfg.time_metric_cap;
  const double eps = cfg.denom_epsilon;
  auto clamp = [cap](double v) { return std::clamp(v, 0.0, cap); };

  TimeMetrics t;
  t.ttc = ve < eps ? cap : clamp(d / ve);
  t.rttc = vi < eps ? cap : clamp(d / vi);
  // A near-zero speed also zeroes its inverse metric, so the pair degenerates together.
  t.thw = d < eps || ve < eps ? 0.0 : clamp(ve / d);
  t.rthw = d < eps || vi < eps ? 0.0 : clamp(vi / d);
  return t;
}

FeatureVector featurize(const VehicleState& ego, LaneId ego_lane, const SlotGrid& slots,
                        const SensorConfig& cfg, const LaneGeometry& geometry) {
  FeatureVector fv;
  const double ego_speed = std::hypot(ego.vx, ego.vy);
  constexpr std::array<double, 3> padding_sign = {1.0, 1.0, -1.0};

  const auto all = slots.slots();
  for (std::size_t s = 0; s < all.size(); ++s) {
    double* block = fv.values.data() + s * kSlotFeatureCount;
    const auto& slot = *all[s];
    fv.present[s] = slot.has_value();
    if (slot) {
      const TimeMetrics t = compute_time_metrics(slot->rel_x, ego_speed, slot->rel_vx, cfg);
      block[0] = slot->rel_x;
      block[1] = slot->rel_vx;
      block[2] = t.ttc;
      block[3] = t.thw;
      block[4] = t.rttc;
      block[5] = t.rthw;
    } else {
      block[0] = padding_sign[s] * cfg.detection_radius;
      block[1] = 0.0;
      block[2] = cfg.time_metric_cap;
      block[3] = 0.0;
      block[4] = cfg.time_metric_cap;
      block[5] = 0.0;
    }
  }

  double* ego_block = fv.values.data() + 3 * kSlotFeatureCount;
  ego_block[0] = ego_speed;
  ego_block[1] = ego.py - geometry.center_of(ego_lane);
  ego_block[2] = cfg.include_ego_heading ? ego.theta : 0.0;
  ego_block[3] = ego_lane == LaneId::Right ? -1.0 : 1.0;
  return fv;
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.size() != stddev_.size()) throw std::invalid_argument("normalizer: size mismatch");
}

Normalizer Normalizer::fit(std::span<const double> rows, std::size_t columns) {
  if (columns == 0 || rows.empty()) throw std::invalid_argument("normalizer: empty training matrix");
  if (rows.size() % columns != 0) throw std::invalid_argument("normalizer: ragged matrix");
  const std::size_t n = rows.size() / columns;

  std::vector<double> mean(columns, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < columns; ++c) mean[c] += rows[r * columns + c];
  }
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<double> var(columns, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < columns; ++c) {
      const double d = rows[r * columns + c] - mean[c];
      var[c] += d * d;
    }
  }
  std::vector<double> stddev(columns);
  for (std::size_t c = 0; c < columns; ++c) {
    const double s = std::sqrt(var[c] / static_cast<double>(n));
    stddev[c] = s < 1e-9 ? 1.0 : s;
  }
  return Normalizer(std::move(mean), std::move(stddev));
}

void Normalizer::apply_in_place(std::span<double> row) const {
  if (row.size() != mean_.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean_[c]) / stddev_[c];
}

std::vector<double> Normalizer::apply(std::span<const double> row) const {
  std::vector<double> out(row.begin(), row.end());
  apply_in_place(out);
  return out;
}

int vehicles_in_range(const VehicleState& ego, std::span<const VehicleState> others,
                      double radius) {
  int n = 0;
  for (const auto& o : others) {
    if (std::hypot(o.px - ego.px, o.py - ego.py) <= radius) ++n;
  }
  return n;
}

}  // namespace laneintent
