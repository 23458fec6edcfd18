#pragma once

#include <filesystem>
#include <cmath>
#include <string>

#include <unistd.h>

#include "laneintent/classifiers.hpp"
#include "laneintent/rng.hpp"
#include "laneintent/simulation.hpp"

namespace laneintent::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("laneintent_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline VehicleState random_state(Rng& rng) {
  VehicleState s;
  s.px = rng.uniform(-200.0, 200.0);
  s.py = rng.uniform(-1.0, 4.5);
  s.vx = rng.uniform(0.0, 35.0);
  s.vy = rng.uniform(-1.5, 1.5);
  s.theta = std::atan2(s.vy, s.vx);
  return s;
}

/// Gaussian blobs, one per class, in `dim` dimensions.
inline LabeledDataset blob_dataset(std::size_t per_class, std::size_t dim, double spread, Seed seed,
                                   std::size_t classes = 3) {
  Rng rng(seed);
  LabeledDataset d;
  d.dim = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t f = 0; f < dim; ++f) {
        const double centre = (f % classes == c) ? 3.0 : 0.0;
        x[f] = rng.normal(centre, spread);
      }
      d.add_row(x, mode_from_index(c), "g" + std::to_string(i % 10), "driver1", 1, 1);
    }
  }
  return d;
}

/// A straight-line trace with the given per-record modes; ego at the right
/// lane centre unless py is supplied.
inline Trace synthetic_trace(const std::vector<ModeLabel>& modes, const std::string& id = "ep") {
  Trace t;
  t.episode_id = id;
  t.scenario_id = "synthetic";
  t.driver_id = "driver1";
  t.seed = Seed{1};
  t.config_digest = "0000000000000000";
  for (std::size_t i = 0; i < modes.size(); ++i) {
    TimestepRecord r;
    r.time = tick_time(static_cast<std::int64_t>(i));
    r.ego.px = 15.0 * r.time;
    r.ego.vx = 15.0;
    r.mode = modes[i];
    t.records.push_back(r);
  }
  t.mode_events = events_from_records(t.records);
  return t;
}

}  // namespace laneintent::test
