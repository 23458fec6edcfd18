#include "laneintent/domain.hpp"

#include <cmath>
#include <numbers>

#include "laneintent/rng.hpp"

namespace laneintent {

std::string_view mode_tag(ModeLabel m) {
  switch (m) {
    case ModeLabel::LaneKeep:
      return "LK";
    case ModeLabel::Prepare:
      return "P";
    case ModeLabel::LaneChange:
      return "LC";
  }
  return "?";
}

ModeLabel parse_mode_tag(std::string_view tag) {
  if (tag == "LK") return ModeLabel::LaneKeep;
  if (tag == "P") return ModeLabel::Prepare;
  if (tag == "LC") return ModeLabel::LaneChange;
  throw DomainError("unknown mode tag '" + std::string(tag) + "'");
}

std::string_view mode_name(ModeLabel m) {
  switch (m) {
    case ModeLabel::LaneKeep:
      return "LaneKeep";
    case ModeLabel::Prepare:
      return "Prepare";
    case ModeLabel::LaneChange:
      return "LaneChange";
  }
  return "?";
}

std::optional<Sigma> sigma_for(ModeLabel from, ModeLabel to) {
  using M = ModeLabel;
  if (from == M::LaneKeep && to == M::Prepare) return Sigma::Prepare;
  if (from == M::Prepare && to == M::LaneChange) return Sigma::Execute;
  if (from == M::LaneChange && to == M::LaneKeep) return Sigma::Settle;
  if (from == M::Prepare && to == M::LaneKeep) return Sigma::Abort;
  return std::nullopt;
}

std::string_view sigma_name(Sigma s) {
  switch (s) {
    case Sigma::Abort:
      return "sigma0";
    case Sigma::Prepare:
      return "sigma1";
    case Sigma::Execute:
      return "sigma2";
    case Sigma::Settle:
      return "sigma3";
  }
  return "?";
}

std::string_view lane_name(LaneId lane) { return lane == LaneId::Right ? "right" : "left"; }

LaneId parse_lane(std::string_view name) {
  if (name == "right") return LaneId::Right;
  if (name == "left") return LaneId::Left;
  throw DomainError("unknown lane '" + std::string(name) + "' (expected right|left)");
}

void LaneGeometry::validate() const {
  constexpr double tol = 1e-12;
  if (!(lane_width > 0.0) || !(vehicle_length > 0.0) || !(vehicle_width > 0.0)) {
    throw std::invalid_argument("lane geometry: dimensions must be positive");
  }
  if (std::abs(left_center_y - right_center_y - lane_width) > tol) {
    throw std::invalid_argument("lane geometry: left_center_y - right_center_y != lane_width");
  }
  if (std::abs(divider_y - 0.5 * (left_center_y + right_center_y)) > tol) {
    throw std::invalid_argument("lane geometry: divider is not midway between lane centers");
  }
}

LaneId lane_of(double py, const LaneGeometry& geometry) {
  return py < geometry.divider_y ? LaneId::Right : LaneId::Left;
}

double Rng::normal(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

}  // namespace laneintent
