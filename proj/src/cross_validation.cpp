#include <algorithm>
#include <cmath>
#include <numeric>

#include "laneintent/classifiers.hpp"

namespace laneintent {

namespace {

double population_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

std::vector<int> assign_group_folds(const LabeledDataset& data, int k, Seed seed) {
  data.validate();
  const std::size_t n_groups = data.group_names.size();
  if (k < 2) throw DomainError("cross-validation needs k >= 2");
  std::vector<std::array<double, kModeCount>> per_group(n_groups);
  std::array<double, kModeCount> per_class{};
  for (std::size_t i = 0; i < data.rows(); ++i) {
    per_group[data.groups[i]][mode_index(data.labels[i])] += 1.0;
    per_class[mode_index(data.labels[i])] += 1.0;
  }
  std::vector<std::size_t> present;
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (per_group[g][0] + per_group[g][1] + per_group[g][2] > 0) present.push_back(g);
  }
  if (present.size() < static_cast<std::size_t>(k)) {
    throw DomainError("cross-validation: " + std::to_string(present.size()) +
                      " episodes cannot fill " + std::to_string(k) + " folds");
  }

  // Seeded shuffle, then the most class-skewed groups first.
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(present));
  std::vector<double> skew(n_groups, 0.0);
  for (std::size_t g : present) skew[g] = population_std(per_group[g]);
  std::stable_sort(present.begin(), present.end(),
                   [&](std::size_t a, std::size_t b) { return skew[a] > skew[b]; });

  const auto folds = static_cast<std::size_t>(k);
  std::vector<std::array<double, kModeCount>> fold_counts(folds);
  std::vector<double> fold_size(folds, 0.0);
  std::vector<int> assignment(n_groups, -1);
  std::vector<double> fractions(folds);
  for (std::size_t g : present) {
    std::size_t best = 0;
    double best_eval = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      double eval = 0.0;
      int classes = 0;
      for (std::size_t c = 0; c < kModeCount; ++c) {
        if (per_class[c] <= 0.0) continue;
        for (std::size_t h = 0; h < folds; ++h) {
          fractions[h] = (fold_counts[h][c] + (h == f ? per_group[g][c] : 0.0)) / per_class[c];
        }
        eval += population_std(fractions);
        ++classes;
      }
      eval /= classes;
      const bool better = f == 0 || eval < best_eval - 1e-12 ||
                          (std::abs(eval - best_eval) <= 1e-12 && fold_size[f] < fold_size[best]);
      if (better) {
        best = f;
        best_eval = eval;
      }
    }
    assignment[g] = static_cast<int>(best);
    for (std::size_t c = 0; c < kModeCount; ++c) fold_counts[best][c] += per_group[g][c];
    fold_size[best] += per_group[g][0] + per_group[g][1] + per_group[g][2];
  }
  return assignment;
}

int compare_regularization(ModelKind kind, const HyperParams& a, const HyperParams& b) {
  auto cmp = [](double stronger_if_larger_a, double b_value) {
    if (stronger_if_larger_a > b_value) return -1;
    if (stronger_if_larger_a < b_value) return 1;
    return 0;
  };
  switch (kind) {
    case ModelKind::SVM: return cmp(a.lambda, b.lambda);
    case ModelKind::LR: return cmp(a.l2, b.l2);
    case ModelKind::RF: {
      if (a.max_depth != b.max_depth) return a.max_depth < b.max_depth ? -1 : 1;
      return cmp(a.min_leaf, b.min_leaf);
    }
  }
  return 0;
}

CvResult cross_validate(const LabeledDataset& data, ModelKind kind,
                        std::span<const HyperParams> grid, int k, Seed seed) {
  if (grid.empty()) throw DomainError("cross-validation: empty hyperparameter grid");
  const auto folds = assign_group_folds(data, k, seed);

  std::vector<std::vector<std::size_t>> train_idx(static_cast<std::size_t>(k));
  std::vector<std::vector<std::size_t>> test_idx(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const int f = folds[data.groups[i]];
    for (int h = 0; h < k; ++h) {
      (h == f ? test_idx : train_idx)[static_cast<std::size_t>(h)].push_back(i);
    }
  }

  CvResult result;
  std::size_t best = 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    CvPoint point;
    point.params = grid[p];
    for (int h = 0; h < k; ++h) {
      const auto& test = test_idx[static_cast<std::size_t>(h)];
      const auto& train_rows = train_idx[static_cast<std::size_t>(h)];
      if (test.empty() || train_rows.empty()) continue;
      const LabeledDataset train_set = data.subset(train_rows);
      const LabeledDataset test_set = data.subset(test);
      const Model m =
          train(train_set, kind, grid[p], derive_seed(seed, static_cast<std::uint64_t>(h)));
      point.fold_scores.push_back(accuracy(predict_all(m, test_set), test_set.labels));
    }
    point.mean_score = std::accumulate(point.fold_scores.begin(), point.fold_scores.end(), 0.0) /
                       static_cast<double>(point.fold_scores.size());
    result.points.push_back(std::move(point));

    if (p == 0) continue;
    const double mean = result.points[p].mean_score;
    const double best_mean = result.points[best].mean_score;
    if (mean > best_mean + 1e-12 ||
        (std::abs(mean - best_mean) <= 1e-12 &&
         compare_regularization(kind, grid[p], grid[best]) < 0)) {
      best = p;
    }
  }
  result.best = grid[best];
  return result;
}

std::vector<HyperParams> default_grid(ModelKind kind) {
  std::vector<HyperParams> grid;
  switch (kind) {
    case ModelKind::SVM:
      for (double lambda : {1e-4, 1e-3, 1e-2, 1e-1}) {
        HyperParams hp;
        hp.lambda = lambda;
        hp.epochs = 5;
        grid.push_back(hp);
      }
      break;
    case ModelKind::RF:
      for (int trees : {50, 100}) {
        for (int depth : {8, 12}) {
          HyperParams hp;
          hp.n_trees = trees;
          hp.max_depth = depth;
          hp.min_leaf = 5;
          grid.push_back(hp);
        }
      }
      break;
    case ModelKind::LR:
      for (double l2 : {1e-4, 1e-2, 1.0}) {
        HyperParams hp;
        hp.l2 = l2;
        hp.max_iter = 1500;
        grid.push_back(hp);
      }
      break;
  }
  return grid;
}

}  // namespace laneintent
