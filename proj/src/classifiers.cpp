#include "laneintent/classifiers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace laneintent {

namespace {

std::uint32_t intern(std::vector<std::string>& names, std::string_view name) {
  // Rows arrive grouped, so the last entry is almost always the hit.
  for (std::size_t i = names.size(); i-- > 0;) {
    if (names[i] == name) return static_cast<std::uint32_t>(i);
  }
  names.emplace_back(name);
  return static_cast<std::uint32_t>(names.size() - 1);
}

void check_dim(const Model& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw DomainError("model expects " + std::to_string(model.dim) + " features, got " +
                      std::to_string(x.size()));
  }
}

std::array<double, kModeCount> linear_scores(const LinearPayload& p, std::span<const double> x) {
  std::array<double, kModeCount> s{};
  for (std::size_t c = 0; c < kModeCount; ++c) {
    if (!p.active[c]) {
      s[c] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double acc = p.bias[c];
    const auto& w = p.weights[c];
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    s[c] = acc;
  }
  return s;
}

// Strict comparison keeps the lowest label on ties.
template <typename T>
ModeLabel argmax(const std::array<T, kModeCount>& v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kModeCount; ++c) {
    if (v[c] > v[best]) best = c;
  }
  return mode_from_index(best);
}

}  // namespace

void LabeledDataset::add_row(std::span<const double> x, ModeLabel label, std::string_view group,
                             std::string_view driver, int in_range, std::uint8_t presence_bits) {
  if (x.size() != dim) {
    throw DomainError("dataset row has " + std::to_string(x.size()) + " features, expected " +
                      std::to_string(dim));
  }
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
  groups.push_back(intern(group_names, group));
  drivers.push_back(intern(driver_names, driver));
  vehicles_in_range.push_back(static_cast<std::uint8_t>(std::clamp(in_range, 0, 255)));
  presence.push_back(presence_bits);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.dim = dim;
  out.group_names = group_names;
  out.driver_names = driver_names;
  out.features.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    if (i >= rows()) throw DomainError("dataset subset index out of range");
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    out.groups.push_back(groups[i]);
    out.drivers.push_back(drivers[i]);
    out.vehicles_in_range.push_back(vehicles_in_range[i]);
    out.presence.push_back(presence[i]);
  }
  return out;
}

LabeledDataset LabeledDataset::strided(std::size_t stride) const {
  if (stride == 0) throw DomainError("stride must be positive");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows(); i += stride) idx.push_back(i);
  return subset(idx);
}

LabeledDataset LabeledDataset::for_driver(std::string_view driver) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows(); ++i) {
    if (driver_names[drivers[i]] == driver) idx.push_back(i);
  }
  return subset(idx);
}

std::array<std::size_t, kModeCount> LabeledDataset::class_counts() const {
  std::array<std::size_t, kModeCount> c{};
  for (auto l : labels) ++c[mode_index(l)];
  return c;
}

void LabeledDataset::validate() const {
  const auto n = rows();
  if (dim == 0) throw DomainError("dataset: dim must be positive");
  if (features.size() != n * dim || groups.size() != n || drivers.size() != n ||
      vehicles_in_range.size() != n || presence.size() != n) {
    throw DomainError("dataset: column lengths disagree");
  }
  for (auto g : groups) {
    if (g >= group_names.size()) throw DomainError("dataset: group index out of range");
  }
  for (auto d : drivers) {
    if (d >= driver_names.size()) throw DomainError("dataset: driver index out of range");
  }
}

void require_trainable(const LabeledDataset& data, std::string_view who) {
  data.validate();
  if (data.rows() == 0) throw DomainError(std::string(who) + ": empty dataset");
  const auto counts = data.class_counts();
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (present < 2) throw DomainError(std::string(who) + ": training data holds a single class");
}

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::SVM: return "svm";
    case ModelKind::RF: return "rf";
    case ModelKind::LR: return "lr";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "svm") return ModelKind::SVM;
  if (lower == "rf") return ModelKind::RF;
  if (lower == "lr") return ModelKind::LR;
  throw DomainError("unknown algorithm '" + std::string(name) + "' (valid: svm, rf, lr)");
}

Model train(const LabeledDataset& data, ModelKind kind, const HyperParams& hp, Seed seed) {
  switch (kind) {
    case ModelKind::SVM: return train_svm(data, hp.lambda, hp.epochs, seed);
    case ModelKind::RF:
      return train_rf(data, hp.n_trees, hp.max_depth, hp.min_leaf, seed, hp.bootstrap,
                      hp.max_features);
    case ModelKind::LR: {
      Model m = train_lr(data, hp.l2, hp.max_iter, hp.tol, hp.initial_step);
      m.seed = seed;
      return m;
    }
  }
  throw DomainError("train: bad model kind");
}

std::array<double, kModeCount> softmax(const std::array<double, kModeCount>& scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::array<double, kModeCount> p{};
  double sum = 0.0;
  for (std::size_t c = 0; c < kModeCount; ++c) {
    p[c] = std::exp(scores[c] - mx);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> x) const {
  if (nodes.empty()) throw DomainError("empty decision tree");
  const TreeNode* n = &nodes[0];
  while (n->feature >= 0) {
    n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold
                                            ? n->left
                                            : n->right)];
  }
  return *n;
}

ModeLabel DecisionTree::vote(std::span<const double> x) const { return argmax(leaf_for(x).counts); }

ModeLabel predict(const Model& model, std::span<const double> x) {
  check_dim(model, x);
  if (model.kind == ModelKind::RF) {
    const auto& forest = std::get<ForestPayload>(model.payload);
    std::array<int, kModeCount> votes{};
    for (const auto& t : forest.trees) ++votes[mode_index(t.vote(x))];
    return argmax(votes);
  }
  return argmax(linear_scores(std::get<LinearPayload>(model.payload), x));
}

std::array<double, kModeCount> predict_proba(const Model& model, std::span<const double> x) {
  check_dim(model, x);
  switch (model.kind) {
    case ModelKind::SVM:
      throw DomainError("svm models do not provide class probabilities");
    case ModelKind::LR:
      return softmax(linear_scores(std::get<LinearPayload>(model.payload), x));
    case ModelKind::RF: {
      const auto& forest = std::get<ForestPayload>(model.payload);
      std::array<double, kModeCount> p{};
      for (const auto& t : forest.trees) {
        const auto& counts = t.leaf_for(x).counts;
        const double total = counts[0] + counts[1] + counts[2];
        for (std::size_t c = 0; c < kModeCount; ++c) p[c] += counts[c] / total;
      }
      for (auto& v : p) v /= static_cast<double>(forest.trees.size());
      return p;
    }
  }
  throw DomainError("predict_proba: bad model kind");
}

std::vector<ModeLabel> predict_all(const Model& model, const LabeledDataset& data) {
  if (data.dim != model.dim) {
    throw DomainError("model expects " + std::to_string(model.dim) + " features, dataset has " +
                      std::to_string(data.dim));
  }
  std::vector<ModeLabel> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) out[i] = predict(model, data.row(i));
  return out;
}

double accuracy(std::span<const ModeLabel> predicted, std::span<const ModeLabel> truth) {
  if (predicted.size() != truth.size()) throw DomainError("accuracy: length mismatch");
  if (truth.empty()) throw DomainError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace laneintent
