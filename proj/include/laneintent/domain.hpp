#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace laneintent {

/// Continuous state of one vehicle in road coordinates (x along the road,
/// y lateral, left positive). SI units throughout.
struct VehicleState {
  double px = 0.0;     // m
  double py = 0.0;     // m
  double vx = 0.0;     // m/s
  double vy = 0.0;     // m/s
  double theta = 0.0;  // rad, relative to the road axis

  bool operator==(const VehicleState&) const = default;
};

/// Discrete intent mode. The declared order is used only for tie-breaking.
enum class ModeLabel : std::uint8_t { LaneKeep = 0, Prepare = 1, LaneChange = 2 };

inline constexpr std::size_t kModeCount = 3;
inline constexpr std::array<ModeLabel, kModeCount> kAllModes = {
    ModeLabel::LaneKeep, ModeLabel::Prepare, ModeLabel::LaneChange};

constexpr std::size_t mode_index(ModeLabel m) { return static_cast<std::size_t>(m); }
constexpr ModeLabel mode_from_index(std::size_t i) { return static_cast<ModeLabel>(i); }

/// Short tags used in every file format: "LK", "P", "LC".
std::string_view mode_tag(ModeLabel m);
ModeLabel parse_mode_tag(std::string_view tag);
/// Human readable name ("LaneKeep", ...).
std::string_view mode_name(ModeLabel m);

/// Named discrete inputs of the mode machine.
enum class Sigma : std::uint8_t {
  Abort = 0,    // Prepare -> LaneKeep
  Prepare = 1,  // LaneKeep -> Prepare
  Execute = 2,  // Prepare -> LaneChange
  Settle = 3,   // LaneChange -> LaneKeep
};

/// The sigma naming a legal mode-machine edge, or nullopt for any other pair.
std::optional<Sigma> sigma_for(ModeLabel from, ModeLabel to);
std::string_view sigma_name(Sigma s);

enum class LaneId : std::uint8_t { Right = 0, Left = 1 };

constexpr LaneId opposite(LaneId lane) {
  return lane == LaneId::Right ? LaneId::Left : LaneId::Right;
}
std::string_view lane_name(LaneId lane);
LaneId parse_lane(std::string_view name);

/// Straight two-lane road. Right lane center at y = 0.
struct LaneGeometry {
  double lane_width = 3.5;
  double right_center_y = 0.0;
  double left_center_y = 3.5;
  double divider_y = 1.75;
  double vehicle_length = 4.5;
  double vehicle_width = 1.8;

  double center_of(LaneId lane) const {
    return lane == LaneId::Right ? right_center_y : left_center_y;
  }
  /// Throws std::invalid_argument when the lane relations do not hold.
  void validate() const;

  bool operator==(const LaneGeometry&) const = default;
};

/// Right iff py < divider_y. The divider itself belongs to the left lane.
LaneId lane_of(double py, const LaneGeometry& geometry);

struct Seed {
  std::uint64_t value = 0;
  bool operator==(const Seed&) const = default;
};

/// Simulation rate.
inline constexpr int kTicksPerSecond = 60;
inline constexpr double kDt = 1.0 / kTicksPerSecond;

constexpr double tick_time(std::int64_t tick) {
  return static_cast<double>(tick) / kTicksPerSecond;
}

/// Raised when an input violates a documented precondition.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace laneintent
