#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "laneintent/domain.hpp"
#include "laneintent/rng.hpp"

namespace laneintent {

struct SensorConfig {
  double detection_radius = 50.0;  // m
  double pos_noise_std = 0.1;      // m
  double vel_noise_std = 0.1;      // m/s
  double time_metric_cap = 10.0;   // s
  double denom_epsilon = 0.1;      // m/s (also applied to distances)
  bool include_ego_heading = true;

  void validate() const;
  bool operator==(const SensorConfig&) const = default;
};

/// One detected vehicle relative to the ego (other minus ego).
struct Measurement {
  double rel_x = 0.0;   // m, longitudinal
  double rel_y = 0.0;   // m, lateral
  double rel_vx = 0.0;  // m/s

  bool operator==(const Measurement&) const = default;
};

/// Three-position neighbourhood around the ego, expressed relative to the
/// ego's lane so the same slots describe the mirrored left-lane picture.
struct SlotGrid {
  std::optional<Measurement> ahead_same;       // slot 1
  std::optional<Measurement> ahead_opposite;   // slot 2
  std::optional<Measurement> behind_opposite;  // slot 3

  std::array<const std::optional<Measurement>*, 3> slots() const {
    return {&ahead_same, &ahead_opposite, &behind_opposite};
  }
  bool operator==(const SlotGrid&) const = default;
};

struct TimeMetrics {
  double ttc = 0.0;   // s
  double thw = 0.0;   // 1/s
  double rttc = 0.0;  // s
  double rthw = 0.0;  // 1/s
};

inline constexpr std::size_t kSlotFeatureCount = 6;
inline constexpr std::size_t kEgoFeatureCount = 4;
inline constexpr std::size_t kFeatureCount = 3 * kSlotFeatureCount + kEgoFeatureCount;

/// Column names in output order.
const std::array<std::string_view, kFeatureCount>& feature_names();

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  /// Occupancy of slots 1..3; metadata only, not a model input.
  std::array<bool, 3> present{};

  bool operator==(const FeatureVector&) const = default;
};

/// Range-gated, noise-corrupted relative measurements of the other vehicles.
/// The gate uses true positions; noise is added afterwards.
std::vector<Measurement> sense(const VehicleState& ego, std::span<const VehicleState> others,
                               const SensorConfig& cfg, Rng& rng);

SlotGrid assign_slots(const VehicleState& ego, LaneId ego_lane,
                      std::span<const Measurement> measurements, const LaneGeometry& geometry);

/// TTC = d/v_e, THW = v_e/d, rTTC = d/v_i, rTHW = v_i/d with d and v_i taken
/// as magnitudes. Each value is clamped to [0, cap]; a denominator below
/// denom_epsilon yields cap for the time-valued pair and 0 for the inverses.
/// A speed below denom_epsilon also sets its inverse metric to 0.
TimeMetrics compute_time_metrics(double distance, double ego_speed, double rel_speed,
                                 const SensorConfig& cfg);

/// Raw (un-normalized) feature vector for one tick. Never reads controls.
FeatureVector featurize(const VehicleState& ego, LaneId ego_lane, const SlotGrid& slots,
                        const SensorConfig& cfg, const LaneGeometry& geometry);

/// Per-column z-score fitted on training rows.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<double> mean, std::vector<double> stddev);

  /// rows is row-major with `columns` entries per row. Population std;
  /// columns with std below 1e-9 get std = 1.
  static Normalizer fit(std::span<const double> rows, std::size_t columns);

  std::size_t dimension() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  void apply_in_place(std::span<double> row) const;
  std::vector<double> apply(std::span<const double> row) const;

  bool operator==(const Normalizer&) const = default;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

/// Count of vehicles whose true centre lies within the detection radius.
int vehicles_in_range(const VehicleState& ego, std::span<const VehicleState> others,
                      double radius);

}  // namespace laneintent
