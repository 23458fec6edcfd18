#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "laneintent/classifiers.hpp"

namespace laneintent {

namespace {

using Counts = std::array<double, kModeCount>;

double total_of(const Counts& c) { return c[0] + c[1] + c[2]; }

bool is_pure(const Counts& c) {
  int nonzero = 0;
  for (double v : c) nonzero += v > 0.0;
  return nonzero <= 1;
}

}  // namespace

double gini(const Counts& counts) {
  const double total = total_of(counts);
  if (total <= 0.0) return 0.0;
  double sum_sq = 0.0;
  for (double v : counts) sum_sq += (v / total) * (v / total);
  return 1.0 - sum_sq;
}

SortedColumns SortedColumns::build(const LabeledDataset& data) {
  data.validate();
  SortedColumns s;
  s.rows = data.rows();
  s.dim = data.dim;
  s.values.assign(s.dim, std::vector<double>(s.rows));
  s.order.assign(s.dim, std::vector<std::uint32_t>(s.rows));
  for (std::size_t r = 0; r < s.rows; ++r) {
    const auto x = data.row(r);
    for (std::size_t f = 0; f < s.dim; ++f) s.values[f][r] = x[f];
  }
  for (std::size_t f = 0; f < s.dim; ++f) {
    auto& o = s.order[f];
    std::iota(o.begin(), o.end(), 0u);
    const auto& col = s.values[f];
    std::stable_sort(o.begin(), o.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
  return s;
}

std::vector<double> bootstrap_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) w[static_cast<std::size_t>(rng.index(n))] += 1.0;
  return w;
}

// Level-wise growth: every node on the current depth is split in one sweep
// over each feature's presorted rows.
DecisionTree grow_tree(const SortedColumns& columns, std::span<const ModeLabel> labels,
                       std::span<const double> weights, const TreeParams& params, Rng& rng) {
  const std::size_t n = columns.rows;
  const std::size_t d = columns.dim;
  if (labels.size() != n || weights.size() != n) throw DomainError("grow_tree: size mismatch");
  if (params.max_depth < 0 || params.min_leaf < 1) {
    throw DomainError("grow_tree: max_depth must be >= 0 and min_leaf >= 1");
  }
  const std::size_t mtry =
      params.max_features > 0
          ? std::min<std::size_t>(static_cast<std::size_t>(params.max_features), d)
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  const double min_leaf = params.min_leaf;

  std::vector<std::vector<std::uint32_t>> order(d);
  for (std::size_t f = 0; f < d; ++f) {
    order[f].reserve(n);
    for (std::uint32_t r : columns.order[f]) {
      if (weights[r] > 0.0) order[f].push_back(r);
    }
  }

  DecisionTree tree;
  std::vector<int> node_of(n, -1);
  TreeNode root;
  for (std::size_t r = 0; r < n; ++r) {
    if (weights[r] > 0.0) {
      node_of[r] = 0;
      root.counts[mode_index(labels[r])] += weights[r];
    }
  }
  if (total_of(root.counts) <= 0.0) throw DomainError("grow_tree: no rows with positive weight");
  tree.nodes.push_back(root);

  std::vector<int> frontier{0};
  std::vector<std::size_t> all_features(d);
  for (int depth = 0; !frontier.empty(); ++depth) {
    // Pick the nodes that may still split and draw their candidate features.
    std::vector<int> slot_of(tree.nodes.size(), -1);
    std::vector<int> open;
    std::vector<char> candidate;
    for (int node : frontier) {
      const Counts& c = tree.nodes[static_cast<std::size_t>(node)].counts;
      if (depth >= params.max_depth || is_pure(c) || total_of(c) < 2.0 * min_leaf) continue;
      slot_of[static_cast<std::size_t>(node)] = static_cast<int>(open.size());
      open.push_back(node);
      std::iota(all_features.begin(), all_features.end(), std::size_t{0});
      candidate.resize(open.size() * d, 0);
      for (std::size_t k = 0; k < mtry; ++k) {
        const auto pick = k + static_cast<std::size_t>(rng.index(d - k));
        std::swap(all_features[k], all_features[pick]);
        candidate[(open.size() - 1) * d + all_features[k]] = 1;
      }
    }
    if (open.empty()) break;

    const std::size_t m = open.size();
    std::vector<double> best_score(m, std::numeric_limits<double>::infinity());
    std::vector<int> best_feature(m, -1);
    std::vector<double> best_threshold(m, 0.0);
    std::vector<Counts> left(m);
    std::vector<double> last(m);
    std::vector<char> has_last(m);

    for (std::size_t f = 0; f < d; ++f) {
      bool any = false;
      for (std::size_t s = 0; s < m; ++s) any = any || candidate[s * d + f];
      if (!any) continue;
      std::fill(left.begin(), left.end(), Counts{});
      std::fill(has_last.begin(), has_last.end(), 0);
      const auto& col = columns.values[f];
      for (std::uint32_t r : order[f]) {
        const int slot = slot_of[static_cast<std::size_t>(node_of[r])];
        if (slot < 0) continue;
        const auto s = static_cast<std::size_t>(slot);
        if (!candidate[s * d + f]) continue;
        const double v = col[r];
        if (has_last[s] && v > last[s]) {
          const Counts& parent = tree.nodes[static_cast<std::size_t>(open[s])].counts;
          const double lw = total_of(left[s]);
          const double rw = total_of(parent) - lw;
          if (lw >= min_leaf && rw >= min_leaf) {
            Counts right{};
            for (std::size_t c = 0; c < kModeCount; ++c) right[c] = parent[c] - left[s][c];
            const double score = lw * gini(left[s]) + rw * gini(right);
            if (score < best_score[s]) {
              best_score[s] = score;
              best_feature[s] = static_cast<int>(f);
              double thr = last[s] + (v - last[s]) / 2.0;
              if (!(thr < v)) thr = last[s];
              best_threshold[s] = thr;
            }
          }
        }
        left[s][mode_index(labels[r])] += weights[r];
        last[s] = v;
        has_last[s] = 1;
      }
    }

    // Create children where the best split lowers impurity.
    std::vector<int> next;
    std::vector<int> split_left(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < m; ++s) {
      const auto node = static_cast<std::size_t>(open[s]);
      const Counts& c = tree.nodes[node].counts;
      if (best_feature[s] < 0 || !(best_score[s] < total_of(c) * gini(c) - 1e-12)) continue;
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& parent = tree.nodes[node];
      parent.feature = best_feature[s];
      parent.threshold = best_threshold[s];
      parent.left = l;
      parent.right = l + 1;
      split_left[node] = l;
      next.push_back(l);
      next.push_back(l + 1);
    }

    // Route rows to the new children; rows left in leaves drop out.
    for (std::uint32_t r : order[0]) {
      const int node = node_of[r];
      if (static_cast<std::size_t>(node) >= split_left.size() ||
          split_left[static_cast<std::size_t>(node)] < 0) {
        node_of[r] = -1;
        continue;
      }
      const TreeNode& parent = tree.nodes[static_cast<std::size_t>(node)];
      const int child =
          columns.values[static_cast<std::size_t>(parent.feature)][r] <= parent.threshold
              ? parent.left
              : parent.right;
      node_of[r] = child;
      tree.nodes[static_cast<std::size_t>(child)].counts[mode_index(labels[r])] += weights[r];
    }
    for (auto& o : order) {
      std::erase_if(o, [&](std::uint32_t r) { return node_of[r] < 0; });
    }
    frontier = std::move(next);
  }
  return tree;
}

Model train_rf(const LabeledDataset& data, int n_trees, int max_depth, int min_leaf, Seed seed,
               bool bootstrap, int max_features) {
  require_trainable(data, "train_rf");
  if (n_trees < 1) throw DomainError("train_rf: n_trees must be >= 1");
  if (max_depth < 1) throw DomainError("train_rf: max_depth must be >= 1");
  if (min_leaf < 1) throw DomainError("train_rf: min_leaf must be >= 1");
  if (max_features < 0) throw DomainError("train_rf: max_features must be >= 0");

  const SortedColumns columns = SortedColumns::build(data);
  const TreeParams params{max_depth, min_leaf, max_features};
  ForestPayload forest;
  forest.trees.reserve(static_cast<std::size_t>(n_trees));
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const std::vector<double> w =
        bootstrap ? bootstrap_weights(data.rows(), rng) : std::vector<double>(data.rows(), 1.0);
    forest.trees.push_back(grow_tree(columns, data.labels, w, params, rng));
  }

  Model model;
  model.kind = ModelKind::RF;
  model.dim = data.dim;
  model.payload = std::move(forest);
  model.hyper.n_trees = n_trees;
  model.hyper.max_depth = max_depth;
  model.hyper.min_leaf = min_leaf;
  model.hyper.bootstrap = bootstrap;
  model.hyper.max_features = max_features;
  model.seed = seed;
  return model;
}

}  // namespace laneintent
