#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "laneintent/perception.hpp"
#include "laneintent/simulation.hpp"
#include "laneintent/surrogate_driver.hpp"

namespace laneintent {

struct BatchConfig {
  int episodes_per_profile = 195;
  bool label_noise = true;
  double train_fraction = 0.7;
};

struct RunConfig {
  LaneGeometry geometry;
  SensorConfig sensor;
  ScenarioGrid grid;
  std::vector<DriverProfile> profiles;
  BatchConfig batch;

  /// Resolved configuration (profiles expanded) as JSON.
  nlohmann::ordered_json to_json() const;
  /// 16 hex digits of FNV-1a over to_json().dump().
  std::string digest() const;
};

/// Raised for unreadable or invalid configuration; names the offending
/// section or key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses YAML text. Sections grid, profiles, sensor and batch are required;
/// geometry is optional.
RunConfig parse_config(const std::string& yaml_text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// The shipped config/default.yaml, compiled in.
std::string_view default_config_text();
RunConfig default_config();

std::string fnv1a_hex(std::string_view bytes);

}  // namespace laneintent
