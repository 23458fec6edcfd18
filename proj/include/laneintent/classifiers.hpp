#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "laneintent/domain.hpp"
#include "laneintent/perception.hpp"
#include "laneintent/rng.hpp"

namespace laneintent {

/// Rows of one-tick feature vectors with labels and per-row metadata.
/// Features are row-major, `dim` columns, normalized before training.
struct LabeledDataset {
  std::size_t dim = kFeatureCount;
  std::vector<double> features;
  std::vector<ModeLabel> labels;
  /// Episode of each row, as an index into group_names.
  std::vector<std::uint32_t> groups;
  std::vector<std::string> group_names;
  /// Driver of each row, as an index into driver_names.
  std::vector<std::uint32_t> drivers;
  std::vector<std::string> driver_names;
  /// Vehicles within the detection radius (from ground truth).
  std::vector<std::uint8_t> vehicles_in_range;
  /// Slot occupancy bits (bit s = slot s+1 occupied).
  std::vector<std::uint8_t> presence;

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  /// Appends a row; group and driver names are interned.
  void add_row(std::span<const double> x, ModeLabel label, std::string_view group,
               std::string_view driver, int in_range, std::uint8_t presence_bits);

  /// Rows at the given indices, with the name tables carried over.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Every `stride`-th row.
  LabeledDataset strided(std::size_t stride) const;
  /// Rows belonging to one driver.
  LabeledDataset for_driver(std::string_view driver) const;

  std::array<std::size_t, kModeCount> class_counts() const;
  /// Throws DomainError if the parallel arrays disagree in length.
  void validate() const;
};

enum class ModelKind : std::uint8_t { SVM, RF, LR };

std::string_view model_kind_name(ModelKind kind);
/// Accepts "svm", "rf", "lr" (any case). Throws DomainError otherwise.
ModelKind parse_model_kind(std::string_view name);

/// Union of all trainer hyperparameters; each kind reads its own fields.
struct HyperParams {
  // SVM
  double lambda = 1e-3;
  int epochs = 10;
  // RF
  int n_trees = 50;
  int max_depth = 8;
  int min_leaf = 5;
  bool bootstrap = true;
  /// Candidate features per node; 0 means ceil(sqrt(dim)).
  int max_features = 0;
  // LR
  double l2 = 1e-2;
  int max_iter = 300;
  double tol = 1e-7;
  double initial_step = 1.0;

  bool operator==(const HyperParams&) const = default;
};

/// One-vs-rest or softmax linear scores: score_c = w_c . x + b_c.
struct LinearPayload {
  std::array<std::vector<double>, kModeCount> weights;
  std::array<double, kModeCount> bias{};
  /// Classes absent from the training data never win.
  std::array<bool, kModeCount> active{true, true, true};
  bool operator==(const LinearPayload&) const = default;
};

struct TreeNode {
  /// -1 for a leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Weighted class counts of the training rows reaching this node.
  std::array<double, kModeCount> counts{};
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const;
  ModeLabel vote(std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct ForestPayload {
  std::vector<DecisionTree> trees;
  bool operator==(const ForestPayload&) const = default;
};

struct Model {
  ModelKind kind = ModelKind::SVM;
  std::size_t dim = kFeatureCount;
  std::variant<LinearPayload, ForestPayload> payload;
  Normalizer normalizer;
  HyperParams hyper;
  Seed seed;
  /// LR only: false when max_iter ran out before the loss settled.
  bool converged = true;
  int iterations = 0;
  /// Subject the model was fitted for; empty for a pooled model.
  std::string driver_id;

  bool operator==(const Model&) const = default;
};

// ---------------------------------------------------------------------------
// Trainers. All are pure functions of (data, hyperparameters, seed).

/// Linear one-vs-rest SVM: L2-regularized hinge loss, stochastic
/// subgradient steps of size 1/(lambda t) over seeded per-epoch shuffles.
/// The bias rides along as a constant feature. Returns the average of the
/// iterates from the second half of training.
Model train_svm(const LabeledDataset& data, double lambda, int epochs, Seed seed);

/// Random forest of CART trees split on Gini impurity.
Model train_rf(const LabeledDataset& data, int n_trees, int max_depth, int min_leaf, Seed seed,
               bool bootstrap = true, int max_features = 0);

/// Multinomial logistic regression, L2 on weights (not biases), full-batch
/// gradient descent; a step that raises the loss is rejected and halves the
/// step size.
Model train_lr(const LabeledDataset& data, double l2, int max_iter, double tol,
               double initial_step = 1.0);

Model train(const LabeledDataset& data, ModelKind kind, const HyperParams& hp, Seed seed);

// ---------------------------------------------------------------------------
// Building blocks exposed for tests.

/// Features stored by column together with each column's row order.
struct SortedColumns {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> values;        // [feature][row]
  std::vector<std::vector<std::uint32_t>> order;  // [feature] rows by ascending value

  static SortedColumns build(const LabeledDataset& data);
};

struct TreeParams {
  int max_depth = 8;
  int min_leaf = 5;
  int max_features = 0;
};

/// Bootstrap multiplicities: n draws with replacement.
std::vector<double> bootstrap_weights(std::size_t n, Rng& rng);

/// Grows one tree on rows with positive weight.
DecisionTree grow_tree(const SortedColumns& columns, std::span<const ModeLabel> labels,
                       std::span<const double> weights, const TreeParams& params, Rng& rng);

double gini(const std::array<double, kModeCount>& counts);

/// Throws DomainError unless the data is non-empty and has at least two
/// classes. `who` prefixes the message.
void require_trainable(const LabeledDataset& data, std::string_view who);

struct LrObjective {
  double loss = 0.0;
  /// Same layout as the parameter vector: class-major, dim weights then bias.
  std::vector<double> gradient;
};

/// Mean cross-entropy plus (l2/2)||W||^2. params has kModeCount*(dim+1)
/// entries laid out per class as [w_0 .. w_{dim-1}, b].
LrObjective lr_objective(std::span<const double> params, const LabeledDataset& data, double l2);

std::array<double, kModeCount> softmax(const std::array<double, kModeCount>& scores);

// ---------------------------------------------------------------------------
// Inference. x must already be normalized with model.normalizer.

ModeLabel predict(const Model& model, std::span<const double> x);
/// Throws DomainError for SVM models.
std::array<double, kModeCount> predict_proba(const Model& model, std::span<const double> x);
std::vector<ModeLabel> predict_all(const Model& model, const LabeledDataset& data);

double accuracy(std::span<const ModeLabel> predicted, std::span<const ModeLabel> truth);

// ---------------------------------------------------------------------------
// Cross-validation

/// Fold of every group (episode). Folds are balanced on per-class row
/// fractions; no group straddles folds.
std::vector<int> assign_group_folds(const LabeledDataset& data, int k, Seed seed);

struct CvPoint {
  HyperParams params;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
};

struct CvResult {
  HyperParams best;
  std::vector<CvPoint> points;
};

/// Mean fold accuracy per grid point. Best = highest mean; ties go to the
/// stronger regularization, then to the earlier grid entry.
CvResult cross_validate(const LabeledDataset& data, ModelKind kind,
                        std::span<const HyperParams> grid, int k, Seed seed);

/// <0 when a regularizes more strongly than b, >0 when weaker, 0 if equal.
int compare_regularization(ModelKind kind, const HyperParams& a, const HyperParams& b);

inline constexpr int kDefaultFolds = 5;

/// Default search grids.
std::vector<HyperParams> default_grid(ModelKind kind);

// ---------------------------------------------------------------------------
// Serialization: self-describing JSON text.

inline constexpr std::string_view kModelFormat = "laneintent-model";
inline constexpr int kModelFormatVersion = 1;

nlohmann::ordered_json model_to_json(const Model& model);
Model model_from_json(const nlohmann::ordered_json& j);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

nlohmann::ordered_json hyper_to_json(ModelKind kind, const HyperParams& hp);
HyperParams hyper_from_json(const nlohmann::ordered_json& j);

}  // namespace laneintent
