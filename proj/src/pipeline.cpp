#include "laneintent/pipeline.hpp"

#include <cstdio>
#include <numeric>

namespace laneintent {

std::vector<EpisodePlan> plan_batch(const RunConfig& config, Seed seed) {
  const auto specs = generate_scenarios(config.grid, derive_seed(seed, 3), config.geometry);
  const auto per_profile = static_cast<std::size_t>(config.batch.episodes_per_profile);
  std::vector<EpisodePlan> plans;
  plans.reserve(per_profile * config.profiles.size());
  std::vector<std::size_t> order(specs.size());
  for (std::size_t p = 0; p < config.profiles.size(); ++p) {
    for (std::size_t e = 0; e < per_profile; ++e) {
      const std::size_t pass = e / specs.size();
      if (e % specs.size() == 0) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(derive_seed(seed, 2), p, pass));
        rng.shuffle(std::span<std::size_t>(order));
      }
      char id[64];
      std::snprintf(id, sizeof id, "_e%04zu", e);
      EpisodePlan plan;
      plan.episode_id = config.profiles[p].name + id;
      plan.profile_index = p;
      plan.spec = specs[order[e % specs.size()]];
      plan.seed = derive_seed(derive_seed(seed, 1), p, e);
      plans.push_back(std::move(plan));
    }
  }
  return plans;
}

Trace run_planned_episode(const RunConfig& config, const EpisodePlan& plan) {
  const DriverProfile& profile = config.profiles.at(plan.profile_index);
  SurrogateDriver driver(profile);
  Trace trace = run_episode(plan.spec, driver, config.sensor, plan.seed, config.geometry);
  trace.episode_id = plan.episode_id;
  trace.config_digest = config.digest();
  if (config.batch.label_noise) {
    Rng rng(derive_seed(plan.seed, 3));
    trace = apply_label_noise(trace, profile.params, rng);
  }
  return trace;
}

void tally(const Trace& trace, ProfileSummary& summary) {
  if (summary.driver_id.empty()) summary.driver_id = trace.driver_id;
  ++summary.episodes;
  summary.collisions += trace.collided;
  summary.ticks += trace.records.size();
  for (const auto& e : trace.mode_events) {
    if (e.to == ModeLabel::LaneChange) ++summary.lane_changes_started;
    if (e.from == ModeLabel::LaneChange && e.to == ModeLabel::LaneKeep) {
      ++summary.lane_changes_completed;
    }
    if (e.from == ModeLabel::Prepare && e.to == ModeLabel::LaneKeep) ++summary.aborts;
  }
}

nlohmann::ordered_json summary_json(const std::vector<ProfileSummary>& profiles) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : profiles) {
    arr.push_back({{"driver_id", p.driver_id},
                   {"episodes", p.episodes},
                   {"collisions", p.collisions},
                   {"ticks", p.ticks},
                   {"lane_changes_started", p.lane_changes_started},
                   {"lane_changes_completed", p.lane_changes_completed},
                   {"aborted_preparations", p.aborts}});
  }
  return arr;
}

SplitManifest split_for(const std::vector<EpisodePlan>& plans, const RunConfig& config,
                        Seed batch_seed) {
  std::vector<EpisodeRef> refs;
  refs.reserve(plans.size());
  for (const auto& p : plans) refs.push_back({p.episode_id, config.profiles.at(p.profile_index).name});
  return make_split(std::move(refs), split_seed(batch_seed), config.batch.train_fraction);
}

TrainedModel fit_with_cv(const LabeledDataset& train, const Normalizer& normalizer, ModelKind kind,
                         Seed seed, const TrainingBudget& budget) {
  if (budget.cv_stride == 0 || budget.fit_stride == 0) throw DomainError("strides must be >= 1");
  const auto grid = default_grid(kind);
  TrainedModel out;
  out.cv = cross_validate(train.strided(budget.cv_stride), kind, grid, budget.folds,
                          derive_seed(seed, 1));
  out.model = laneintent::train(train.strided(budget.fit_stride), kind, out.cv.best,
                                derive_seed(seed, 2));
  out.model.normalizer = normalizer;
  return out;
}

}  // namespace laneintent
