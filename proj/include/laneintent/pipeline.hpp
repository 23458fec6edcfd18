#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "laneintent/config.hpp"
#include "laneintent/dataset_io.hpp"
#include "laneintent/evaluation.hpp"

namespace laneintent {

/// One episode of a batch: which profile drives which scenario, with what
/// seed. Fully determined by (config, batch seed).
struct EpisodePlan {
  std::string episode_id;
  std::size_t profile_index = 0;
  ScenarioSpec spec;
  Seed seed;
};

/// Per profile, episodes_per_profile episodes cycling through the scenario
/// grid; every pass over the grid uses its own seeded order.
std::vector<EpisodePlan> plan_batch(const RunConfig& config, Seed seed);

/// Runs the surrogate for one planned episode and applies label noise when
/// the config enables it.
Trace run_planned_episode(const RunConfig& config, const EpisodePlan& plan);

/// Per-profile counters gathered while generating.
struct ProfileSummary {
  std::string driver_id;
  std::size_t episodes = 0;
  std::size_t collisions = 0;
  std::size_t ticks = 0;
  std::size_t lane_changes_started = 0;    // entries into LaneChange
  std::size_t lane_changes_completed = 0;  // LaneChange settled back to LaneKeep
  std::size_t aborts = 0;
};

void tally(const Trace& trace, ProfileSummary& summary);

nlohmann::ordered_json summary_json(const std::vector<ProfileSummary>& profiles);

/// Seed stream used for the train/test split of a batch.
inline Seed split_seed(Seed batch_seed) { return derive_seed(batch_seed, 7); }

/// Split manifest for a planned batch.
SplitManifest split_for(const std::vector<EpisodePlan>& plans, const RunConfig& config,
                        Seed batch_seed);

/// Rows used by cross-validation and by the final fit. Both are row
/// strides over the (episode-ordered) training set.
struct TrainingBudget {
  std::size_t cv_stride = 12;
  std::size_t fit_stride = 4;
  int folds = kDefaultFolds;
};

struct TrainedModel {
  Model model;
  CvResult cv;
};

/// Cross-validates over default_grid(kind), then fits the winner.
TrainedModel fit_with_cv(const LabeledDataset& train, const Normalizer& normalizer, ModelKind kind,
                         Seed seed, const TrainingBudget& budget = {});

}  // namespace laneintent
