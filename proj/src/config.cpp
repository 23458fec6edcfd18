#include "laneintent/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace laneintent {

namespace {

using nlohmann::ordered_json;

struct Ctx {
  std::string source;
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config " + source + ": " + what);
  }
};

YAML::Node section(const YAML::Node& root, const char* name, const Ctx& ctx) {
  const YAML::Node n = root[name];
  if (!n) ctx.fail(std::string("missing required section '") + name + "'");
  if (!n.IsMap()) ctx.fail(std::string("section '") + name + "' must be a mapping");
  return n;
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& where, const Ctx& ctx) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    ctx.fail("bad value for '" + where + "'");
  }
}

template <typename T>
void optional(const YAML::Node& parent, const char* key, T& into, const std::string& where,
              const Ctx& ctx) {
  if (const YAML::Node n = parent[key]) into = scalar<T>(n, where + "." + key, ctx);
}

void reject_unknown(const YAML::Node& map, const std::vector<std::string>& known,
                    const std::string& where, const Ctx& ctx) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      ctx.fail("unknown key '" + where + "." + key + "'");
    }
  }
}

using ParamTable = std::map<std::string, double DriverParams::*>;

const ParamTable& driver_param_table() {
  static const ParamTable table = {
      {"ttc_prep_threshold", &DriverParams::ttc_prep_threshold},
      {"ttc_lc_threshold", &DriverParams::ttc_lc_threshold},
      {"thw_prep_reference", &DriverParams::thw_prep_reference},
      {"thw_lc_reference", &DriverParams::thw_lc_reference},
      {"abort_hysteresis", &DriverParams::abort_hysteresis},
      {"rttc_front_min", &DriverParams::rttc_front_min},
      {"rttc_rear_min", &DriverParams::rttc_rear_min},
      {"prep_lateral_bias", &DriverParams::prep_lateral_bias},
      {"lc_nominal_duration", &DriverParams::lc_nominal_duration},
      {"desired_speed", &DriverParams::desired_speed},
      {"reaction_delay_mean", &DriverParams::reaction_delay_mean},
      {"reaction_delay_std", &DriverParams::reaction_delay_std},
      {"label_jitter_prob", &DriverParams::label_jitter_prob},
      {"label_jitter_std", &DriverParams::label_jitter_std},
      {"follow_headway", &DriverParams::follow_headway},
      {"gap_gain", &DriverParams::gap_gain},
      {"speed_gain", &DriverParams::speed_gain},
      {"speed_damping", &DriverParams::speed_damping},
  };
  return table;
}

void apply_params(const YAML::Node& n, DriverParams& p, const std::string& where, const Ctx& ctx,
                  bool allow_name) {
  if (!n.IsMap()) ctx.fail("'" + where + "' must be a mapping");
  const auto& table = driver_param_table();
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (allow_name && key == "name") continue;
    const auto it = table.find(key);
    if (it == table.end()) ctx.fail("unknown driver parameter '" + where + "." + key + "'");
    p.*(it->second) = scalar<double>(kv.second, where + "." + key, ctx);
  }
}

ordered_json params_json(const DriverParams& p) {
  ordered_json j;
  for (const auto& [name, member] : driver_param_table()) j[name] = p.*member;
  return j;
}

}  // namespace

RunConfig parse_config(const std::string& yaml_text, const std::string& source) {
  const Ctx ctx{source};
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    ctx.fail(std::string("invalid YAML: ") + e.what());
  }
  if (!root.IsMap()) ctx.fail("top level must be a mapping");
  reject_unknown(root, {"geometry", "sensor", "grid", "profiles", "batch"}, "", ctx);

  // Check presence up front so the first missing section is reported even
  // when a later one is also malformed.
  for (const char* name : {"grid", "profiles", "sensor", "batch"}) section(root, name, ctx);

  RunConfig cfg;
  if (const YAML::Node g = root["geometry"]) {
    if (!g.IsMap()) ctx.fail("section 'geometry' must be a mapping");
    reject_unknown(g,
                   {"lane_width", "right_center_y", "left_center_y", "divider_y",
                    "vehicle_length", "vehicle_width"},
                   "geometry", ctx);
    optional(g, "lane_width", cfg.geometry.lane_width, "geometry", ctx);
    optional(g, "right_center_y", cfg.geometry.right_center_y, "geometry", ctx);
    optional(g, "left_center_y", cfg.geometry.left_center_y, "geometry", ctx);
    optional(g, "divider_y", cfg.geometry.divider_y, "geometry", ctx);
    optional(g, "vehicle_length", cfg.geometry.vehicle_length, "geometry", ctx);
    optional(g, "vehicle_width", cfg.geometry.vehicle_width, "geometry", ctx);
  }
  try {
    cfg.geometry.validate();
  } catch (const std::exception& e) {
    ctx.fail(std::string("geometry: ") + e.what());
  }

  const YAML::Node s = section(root, "sensor", ctx);
  reject_unknown(s,
                 {"detection_radius", "pos_noise_std", "vel_noise_std", "time_metric_cap",
                  "denom_epsilon", "include_ego_heading"},
                 "sensor", ctx);
  optional(s, "detection_radius", cfg.sensor.detection_radius, "sensor", ctx);
  optional(s, "pos_noise_std", cfg.sensor.pos_noise_std, "sensor", ctx);
  optional(s, "vel_noise_std", cfg.sensor.vel_noise_std, "sensor", ctx);
  optional(s, "time_metric_cap", cfg.sensor.time_metric_cap, "sensor", ctx);
  optional(s, "denom_epsilon", cfg.sensor.denom_epsilon, "sensor", ctx);
  optional(s, "include_ego_heading", cfg.sensor.include_ego_heading, "sensor", ctx);
  try {
    cfg.sensor.validate();
  } catch (const std::exception& e) {
    ctx.fail(std::string("sensor: ") + e.what());
  }

  const YAML::Node g = section(root, "grid", ctx);
  reject_unknown(g, {"episode_duration", "ego_speeds", "ego_lanes", "traffic"}, "grid", ctx);
  optional(g, "episode_duration", cfg.grid.episode_duration, "grid", ctx);
  if (!g["ego_speeds"] || !g["ego_lanes"] || !g["traffic"]) {
    ctx.fail("grid needs ego_speeds, ego_lanes and traffic");
  }
  cfg.grid.ego_speeds = scalar<std::vector<double>>(g["ego_speeds"], "grid.ego_speeds", ctx);
  for (const auto& lane : g["ego_lanes"]) {
    try {
      cfg.grid.ego_lanes.push_back(parse_lane(scalar<std::string>(lane, "grid.ego_lanes", ctx)));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      ctx.fail(std::string("grid.ego_lanes: ") + e.what());
    }
  }
  for (const auto& t : g["traffic"]) {
    TrafficConfig traffic;
    traffic.name = scalar<std::string>(t["name"], "grid.traffic.name", ctx);
    const std::string where = "grid.traffic[" + traffic.name + "]";
    if (!t["vehicles"] || !t["vehicles"].IsSequence()) ctx.fail(where + " needs a vehicles list");
    for (const auto& v : t["vehicles"]) {
      reject_unknown(v, {"gap_x", "lane", "speeds", "ramp_start", "ramp_duration"}, where, ctx);
      VehiclePlacement p;
      p.gap_x = scalar<double>(v["gap_x"], where + ".gap_x", ctx);
      const auto lane = scalar<std::string>(v["lane"], where + ".lane", ctx);
      if (lane != "same" && lane != "other") ctx.fail(where + ".lane must be 'same' or 'other'");
      p.same_lane = lane == "same";
      for (const auto& pair : v["speeds"]) {
        const auto sp = scalar<std::vector<double>>(pair, where + ".speeds", ctx);
        if (sp.size() != 2) ctx.fail(where + ".speeds entries are [initial, final]");
        p.speeds.emplace_back(sp[0], sp[1]);
      }
      optional(v, "ramp_start", p.ramp_start, where, ctx);
      optional(v, "ramp_duration", p.ramp_duration, where, ctx);
      traffic.vehicles.push_back(std::move(p));
    }
    cfg.grid.traffic.push_back(std::move(traffic));
  }
  try {
    (void)generate_scenarios(cfg.grid, Seed{0}, cfg.geometry);
  } catch (const std::exception& e) {
    ctx.fail(std::string("grid: ") + e.what());
  }

  const YAML::Node p = section(root, "profiles", ctx);
  reject_unknown(p, {"sample", "base", "list"}, "profiles", ctx);
  DriverParams base;
  if (const YAML::Node b = p["base"]) apply_params(b, base, "profiles.base", ctx, false);
  try {
    if (const YAML::Node sample = p["sample"]) {
      reject_unknown(sample, {"count", "seed"}, "profiles.sample", ctx);
      const int count = scalar<int>(sample["count"], "profiles.sample.count", ctx);
      const auto seed = scalar<std::uint64_t>(sample["seed"], "profiles.sample.seed", ctx);
      if (count < 1) ctx.fail("profiles.sample.count must be >= 1");
      cfg.profiles = sample_profiles(static_cast<std::size_t>(count), Seed{seed}, base);
    }
    if (const YAML::Node list = p["list"]) {
      for (const auto& entry : list) {
        DriverProfile prof;
        prof.name = scalar<std::string>(entry["name"], "profiles.list.name", ctx);
        prof.params = base;
        apply_params(entry, prof.params, "profiles.list[" + prof.name + "]", ctx, true);
        prof.params.validate();
        cfg.profiles.push_back(std::move(prof));
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    ctx.fail(std::string("profiles: ") + e.what());
  }
  if (cfg.profiles.empty()) ctx.fail("profiles: need 'sample' or a non-empty 'list'");
  for (std::size_t i = 0; i < cfg.profiles.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.profiles[i].name == cfg.profiles[j].name) {
        ctx.fail("profiles: duplicate name '" + cfg.profiles[i].name + "'");
      }
    }
  }

  const YAML::Node b = section(root, "batch", ctx);
  reject_unknown(b, {"episodes_per_profile", "label_noise", "train_fraction"}, "batch", ctx);
  optional(b, "episodes_per_profile", cfg.batch.episodes_per_profile, "batch", ctx);
  optional(b, "label_noise", cfg.batch.label_noise, "batch", ctx);
  optional(b, "train_fraction", cfg.batch.train_fraction, "batch", ctx);
  if (cfg.batch.episodes_per_profile < 1) ctx.fail("batch.episodes_per_profile must be >= 1");
  if (!(cfg.batch.train_fraction > 0.0 && cfg.batch.train_fraction < 1.0)) {
    ctx.fail("batch.train_fraction must lie in (0, 1)");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

RunConfig default_config() { return parse_config(std::string(default_config_text()), "default"); }

nlohmann::ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["geometry"] = {{"lane_width", geometry.lane_width},
                   {"right_center_y", geometry.right_center_y},
                   {"left_center_y", geometry.left_center_y},
                   {"divider_y", geometry.divider_y},
                   {"vehicle_length", geometry.vehicle_length},
                   {"vehicle_width", geometry.vehicle_width}};
  j["sensor"] = {{"detection_radius", sensor.detection_radius},
                 {"pos_noise_std", sensor.pos_noise_std},
                 {"vel_noise_std", sensor.vel_noise_std},
                 {"time_metric_cap", sensor.time_metric_cap},
                 {"denom_epsilon", sensor.denom_epsilon},
                 {"include_ego_heading", sensor.include_ego_heading}};
  ordered_json traffic = ordered_json::array();
  for (const auto& t : grid.traffic) {
    ordered_json vehicles = ordered_json::array();
    for (const auto& v : t.vehicles) {
      ordered_json speeds = ordered_json::array();
      for (const auto& [a, b] : v.speeds) speeds.push_back({a, b});
      vehicles.push_back({{"gap_x", v.gap_x},
                          {"lane", v.same_lane ? "same" : "other"},
                          {"speeds", speeds},
                          {"ramp_start", v.ramp_start},
                          {"ramp_duration", v.ramp_duration}});
    }
    traffic.push_back({{"name", t.name}, {"vehicles", vehicles}});
  }
  ordered_json lanes = ordered_json::array();
  for (auto l : grid.ego_lanes) lanes.push_back(lane_name(l));
  j["grid"] = {{"episode_duration", grid.episode_duration},
               {"ego_speeds", grid.ego_speeds},
               {"ego_lanes", lanes},
               {"traffic", traffic}};
  ordered_json profs = ordered_json::array();
  for (const auto& p : profiles) {
    ordered_json pj = params_json(p.params);
    pj["name"] = p.name;
    profs.push_back(pj);
  }
  j["profiles"] = {{"list", profs}};
  j["batch"] = {{"episodes_per_profile", batch.episodes_per_profile},
                {"label_noise", batch.label_noise},
                {"train_fraction", batch.train_fraction}};
  return j;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::digest() const { return fnv1a_hex(to_json().dump()); }

}  // namespace laneintent
