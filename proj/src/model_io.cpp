#include <fstream>
#include <sstream>

#include "laneintent/classifiers.hpp"

namespace laneintent {

using nlohmann::ordered_json;

namespace {

const ordered_json& field(const ordered_json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) {
    throw DomainError(std::string(where) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

template <typename T>
T get_as(const ordered_json& j, const char* key, const char* where) {
  try {
    return field(j, key, where).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string(where) + ": bad field '" + key + "': " + e.what());
  }
}

ordered_json linear_to_json(const LinearPayload& p) {
  ordered_json j;
  ordered_json classes = ordered_json::array();
  ordered_json weights = ordered_json::array();
  ordered_json bias = ordered_json::array();
  ordered_json active = ordered_json::array();
  for (std::size_t c = 0; c < kModeCount; ++c) {
    classes.push_back(mode_tag(mode_from_index(c)));
    weights.push_back(p.weights[c]);
    bias.push_back(p.bias[c]);
    active.push_back(p.active[c]);
  }
  j["classes"] = classes;
  j["weights"] = weights;
  j["bias"] = bias;
  j["active"] = active;
  return j;
}

LinearPayload linear_from_json(const ordered_json& j, std::size_t dim) {
  constexpr const char* where = "model payload";
  LinearPayload p;
  const auto weights = get_as<std::vector<std::vector<double>>>(j, "weights", where);
  const auto bias = get_as<std::vector<double>>(j, "bias", where);
  const auto active = get_as<std::vector<bool>>(j, "active", where);
  if (weights.size() != kModeCount || bias.size() != kModeCount || active.size() != kModeCount) {
    throw DomainError("model payload: expected 3 classes");
  }
  for (std::size_t c = 0; c < kModeCount; ++c) {
    if (weights[c].size() != dim) throw DomainError("model payload: weight length != dim");
    p.weights[c] = weights[c];
    p.bias[c] = bias[c];
    p.active[c] = active[c];
  }
  return p;
}

ordered_json forest_to_json(const ForestPayload& p) {
  ordered_json trees = ordered_json::array();
  for (const auto& t : p.trees) {
    ordered_json feature = ordered_json::array(), threshold = ordered_json::array(),
                 left = ordered_json::array(), right = ordered_json::array(),
                 counts = ordered_json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      counts.push_back({n.counts[0], n.counts[1], n.counts[2]});
    }
    ordered_json tj;
    tj["feature"] = feature;
    tj["threshold"] = threshold;
    tj["left"] = left;
    tj["right"] = right;
    tj["counts"] = counts;
    trees.push_back(tj);
  }
  ordered_json j;
  j["trees"] = trees;
  return j;
}

ForestPayload forest_from_json(const ordered_json& j, std::size_t dim) {
  constexpr const char* where = "model tree";
  ForestPayload p;
  for (const auto& tj : field(j, "trees", "model payload")) {
    const auto feature = get_as<std::vector<int>>(tj, "feature", where);
    const auto threshold = get_as<std::vector<double>>(tj, "threshold", where);
    const auto left = get_as<std::vector<int>>(tj, "left", where);
    const auto right = get_as<std::vector<int>>(tj, "right", where);
    const auto counts = get_as<std::vector<std::vector<double>>>(tj, "counts", where);
    const std::size_t n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n ||
        counts.size() != n) {
      throw DomainError("model tree: node arrays disagree in length");
    }
    DecisionTree tree;
    tree.nodes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& node = tree.nodes[i];
      node.feature = feature[i];
      node.threshold = threshold[i];
      node.left = left[i];
      node.right = right[i];
      if (counts[i].size() != kModeCount) throw DomainError("model tree: counts need 3 entries");
      for (std::size_t c = 0; c < kModeCount; ++c) node.counts[c] = counts[i][c];
      if (node.feature >= 0) {
        const auto in_range = [&](int child) {
          return child > static_cast<int>(i) && child < static_cast<int>(n);
        };
        if (static_cast<std::size_t>(node.feature) >= dim || !in_range(node.left) ||
            !in_range(node.right)) {
          throw DomainError("model tree: node " + std::to_string(i) + " is malformed");
        }
      }
    }
    p.trees.push_back(std::move(tree));
  }
  if (p.trees.empty()) throw DomainError("model payload: forest has no trees");
  return p;
}

}  // namespace

ordered_json hyper_to_json(ModelKind kind, const HyperParams& hp) {
  ordered_json j;
  switch (kind) {
    case ModelKind::SVM:
      j["lambda"] = hp.lambda;
      j["epochs"] = hp.epochs;
      break;
    case ModelKind::RF:
      j["n_trees"] = hp.n_trees;
      j["max_depth"] = hp.max_depth;
      j["min_leaf"] = hp.min_leaf;
      j["bootstrap"] = hp.bootstrap;
      j["max_features"] = hp.max_features;
      break;
    case ModelKind::LR:
      j["l2"] = hp.l2;
      j["max_iter"] = hp.max_iter;
      j["tol"] = hp.tol;
      j["initial_step"] = hp.initial_step;
      break;
  }
  return j;
}

HyperParams hyper_from_json(const ordered_json& j) {
  HyperParams hp;
  if (!j.is_object()) throw DomainError("hyperparameters must be an object");
  try {
    hp.lambda = j.value("lambda", hp.lambda);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.n_trees = j.value("n_trees", hp.n_trees);
    hp.max_depth = j.value("max_depth", hp.max_depth);
    hp.min_leaf = j.value("min_leaf", hp.min_leaf);
    hp.bootstrap = j.value("bootstrap", hp.bootstrap);
    hp.max_features = j.value("max_features", hp.max_features);
    hp.l2 = j.value("l2", hp.l2);
    hp.max_iter = j.value("max_iter", hp.max_iter);
    hp.tol = j.value("tol", hp.tol);
    hp.initial_step = j.value("initial_step", hp.initial_step);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad hyperparameter: ") + e.what());
  }
  return hp;
}

ordered_json model_to_json(const Model& model) {
  ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["kind"] = model_kind_name(model.kind);
  j["dim"] = model.dim;
  if (model.dim == kFeatureCount) {
    ordered_json names = ordered_json::array();
    for (auto n : feature_names()) names.push_back(n);
    j["feature_names"] = names;
  }
  j["seed"] = model.seed.value;
  j["hyperparameters"] = hyper_to_json(model.kind, model.hyper);
  j["converged"] = model.converged;
  j["iterations"] = model.iterations;
  if (!model.driver_id.empty()) j["driver_id"] = model.driver_id;
  j["normalizer"] = {{"mean", model.normalizer.mean()}, {"std", model.normalizer.stddev()}};
  if (model.kind == ModelKind::RF) {
    j["payload"] = forest_to_json(std::get<ForestPayload>(model.payload));
  } else {
    j["payload"] = linear_to_json(std::get<LinearPayload>(model.payload));
  }
  return j;
}

Model model_from_json(const ordered_json& j) {
  constexpr const char* where = "model";
  if (get_as<std::string>(j, "format", where) != kModelFormat) {
    throw DomainError("not a model file (format field mismatch)");
  }
  const int version = get_as<int>(j, "version", where);
  if (version != kModelFormatVersion) {
    throw DomainError("unsupported model version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  Model m;
  m.kind = parse_model_kind(get_as<std::string>(j, "kind", where));
  m.dim = get_as<std::size_t>(j, "dim", where);
  if (m.dim == 0) throw DomainError("model: dim must be positive");
  m.seed = Seed{get_as<std::uint64_t>(j, "seed", where)};
  m.hyper = hyper_from_json(field(j, "hyperparameters", where));
  m.converged = get_as<bool>(j, "converged", where);
  m.iterations = get_as<int>(j, "iterations", where);
  if (j.contains("driver_id")) m.driver_id = get_as<std::string>(j, "driver_id", where);
  const auto& norm = field(j, "normalizer", where);
  auto mean = get_as<std::vector<double>>(norm, "mean", "model normalizer");
  auto sd = get_as<std::vector<double>>(norm, "std", "model normalizer");
  if (!mean.empty() && mean.size() != m.dim) throw DomainError("model normalizer: length != dim");
  m.normalizer = Normalizer(std::move(mean), std::move(sd));
  const auto& payload = field(j, "payload", where);
  if (m.kind == ModelKind::RF) {
    m.payload = forest_from_json(payload, m.dim);
  } else {
    m.payload = linear_from_json(payload, m.dim);
  }
  return m;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  out << model_to_json(model).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError("model file " + path + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace laneintent
