#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "laneintent/classifiers.hpp"
#include "support.hpp"

namespace laneintent {
namespace {

constexpr ModeLabel LK = ModeLabel::LaneKeep;
constexpr ModeLabel P = ModeLabel::Prepare;
constexpr ModeLabel LC = ModeLabel::LaneChange;

LabeledDataset points(std::size_t dim, const std::vector<std::pair<std::vector<double>, ModeLabel>>& rows) {
  LabeledDataset d;
  d.dim = dim;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.add_row(rows[i].first, rows[i].second, "g" + std::to_string(i), "driver1", 0, 0);
  }
  return d;
}

LabeledDataset xor_set() {
  return points(2, {{{0, 0}, LK}, {{1, 1}, LK}, {{0, 1}, LC}, {{1, 0}, LC}});
}

// Best accuracy of any half-plane labelling, searched exhaustively over a
// fine grid of directions and offsets.
double best_linear_accuracy(const LabeledDataset& d, ModeLabel a, ModeLabel b) {
  double best = 0.0;
  for (int k = 0; k < 720; ++k) {
    const double ang = k * M_PI / 360.0;
    const double u = std::cos(ang), v = std::sin(ang);
    for (double off = -3.0; off <= 3.0; off += 0.01) {
      int hit = 0;
      for (std::size_t i = 0; i < d.rows(); ++i) {
        const auto x = d.row(i);
        const ModeLabel guess = u * x[0] + v * x[1] + off > 0 ? a : b;
        hit += guess == d.labels[i];
      }
      best = std::max(best, hit / static_cast<double>(d.rows()));
    }
  }
  return best;
}

TEST(Svm, SeparatesFourPoints) {
  const auto d = points(2, {{{-2, 0}, LK}, {{-2, 1}, LK}, {{2, 0}, LC}, {{2, 1}, LC}});
  const auto m = train_svm(d, 1e-2, 200, Seed{1});
  EXPECT_EQ(accuracy(predict_all(m, d), d.labels), 1.0);
}

TEST(Svm, SeparatesBlobs) {
  const auto d = test::blob_dataset(100, 6, 0.5, Seed{2});
  const auto m = train_svm(d, 1e-3, 10, Seed{3});
  EXPECT_GE(accuracy(predict_all(m, d), d.labels), 0.99);
}

TEST(Svm, DeterministicInSeed) {
  const auto d = test::blob_dataset(50, 4, 1.5, Seed{4});
  EXPECT_EQ(train_svm(d, 1e-3, 5, Seed{7}), train_svm(d, 1e-3, 5, Seed{7}));
  EXPECT_NE(train_svm(d, 1e-3, 5, Seed{7}), train_svm(d, 1e-3, 5, Seed{8}));
}

TEST(Svm, XorIsNotLinearlySeparable) {
  const auto d = xor_set();
  const double ceiling = best_linear_accuracy(d, LK, LC);
  EXPECT_EQ(ceiling, 0.75);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = train_svm(d, 1e-2, 50, Seed{s});
    EXPECT_LE(accuracy(predict_all(m, d), d.labels), ceiling);
  }
}

TEST(Svm, NoProbabilities) {
  const auto d = xor_set();
  const auto m = train_svm(d, 1e-2, 5, Seed{1});
  const std::vector<double> x{0.0, 0.0};
  EXPECT_THROW(predict_proba(m, x), DomainError);
}

TEST(Trainers, RejectSingleClass) {
  const auto d = points(1, {{{0}, LK}, {{1}, LK}, {{2}, LK}});
  EXPECT_THROW(train_svm(d, 1e-2, 5, Seed{1}), DomainError);
  EXPECT_THROW(train_rf(d, 3, 3, 1, Seed{1}), DomainError);
  EXPECT_THROW(train_lr(d, 1e-2, 10, 1e-7), DomainError);
  try {
    train_lr(d, 1e-2, 10, 1e-7);
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("single class"), std::string::npos);
  }
}

TEST(Trainers, RejectEmpty) {
  LabeledDataset d;
  d.dim = 2;
  EXPECT_THROW(train_svm(d, 1e-2, 5, Seed{1}), DomainError);
  EXPECT_THROW(train_rf(d, 3, 3, 1, Seed{1}), DomainError);
  EXPECT_THROW(train_lr(d, 1e-2, 10, 1e-7), DomainError);
}

TEST(Predict, WrongWidthThrows) {
  const auto d = test::blob_dataset(10, 4, 0.5, Seed{1});
  const auto m = train_lr(d, 1e-2, 20, 1e-7);
  const std::vector<double> x(3, 0.0);
  EXPECT_THROW(predict(m, x), DomainError);
}

// --- random forest ----------------------------------------------------------

struct Stump {
  double threshold = 0.0;
  std::array<double, kModeCount> left{}, right{};
  bool split = false;
};

double weighted_gini(const std::array<double, kModeCount>& c) {
  const double n = c[0] + c[1] + c[2];
  if (n <= 0) return 0.0;
  double s = 1.0;
  for (double v : c) s -= (v / n) * (v / n);
  return n * s;
}

// Exhaustive midpoint search on one feature, first minimum wins.
Stump best_stump(const std::vector<double>& x, const std::vector<ModeLabel>& y) {
  std::set<double> values(x.begin(), x.end());
  std::vector<double> v(values.begin(), values.end());
  std::array<double, kModeCount> all{};
  for (auto l : y) all[mode_index(l)] += 1;
  Stump best;
  double best_score = weighted_gini(all) - 1e-12;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    const double thr = v[k] + (v[k + 1] - v[k]) / 2.0;
    std::array<double, kModeCount> l{}, r{};
    for (std::size_t i = 0; i < x.size(); ++i) (x[i] <= thr ? l : r)[mode_index(y[i])] += 1;
    const double score = weighted_gini(l) + weighted_gini(r);
    if (score < best_score) {
      best_score = score;
      best = {thr, l, r, true};
    }
  }
  return best;
}

TEST(RandomForest, StumpMatchesExhaustiveSearch) {
  Rng rng(Seed{11});
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(30);
    std::vector<double> x(n);
    std::vector<ModeLabel> y(n);
    LabeledDataset d;
    d.dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(rng.uniform(-5.0, 5.0) * 2.0) / 2.0;
      y[i] = mode_from_index(rng.index(3));
      d.add_row(std::span<const double>(&x[i], 1), y[i], "g", "driver1", 0, 0);
    }
    if (d.class_counts()[0] == n || d.class_counts()[1] == n || d.class_counts()[2] == n) continue;
    const auto m = train_rf(d, 1, 1, 1, Seed{static_cast<std::uint64_t>(trial)}, false);
    const auto& tree = std::get<ForestPayload>(m.payload).trees.at(0);
    const Stump want = best_stump(x, y);
    if (!want.split) {
      EXPECT_EQ(tree.nodes.size(), 1u);
      continue;
    }
    ASSERT_EQ(tree.nodes.size(), 3u);
    EXPECT_EQ(tree.nodes[0].feature, 0);
    EXPECT_DOUBLE_EQ(tree.nodes[0].threshold, want.threshold);
    EXPECT_EQ(tree.nodes[static_cast<std::size_t>(tree.nodes[0].left)].counts, want.left);
    EXPECT_EQ(tree.nodes[static_cast<std::size_t>(tree.nodes[0].right)].counts, want.right);
  }
}

TEST(RandomForest, PureSplitStops) {
  const auto d = points(1, {{{0}, LK}, {{1}, LK}, {{2}, LK}, {{10}, LC}, {{11}, LC}, {{12}, LC}});
  const auto m = train_rf(d, 1, 8, 1, Seed{1}, false);
  const auto& tree = std::get<ForestPayload>(m.payload).trees.at(0);
  ASSERT_EQ(tree.nodes.size(), 3u);
  EXPECT_DOUBLE_EQ(tree.nodes[0].threshold, 6.0);
  EXPECT_EQ(accuracy(predict_all(m, d), d.labels), 1.0);
}

TEST(RandomForest, DeterministicInSeed) {
  const auto d = test::blob_dataset(60, 5, 1.5, Seed{5});
  EXPECT_EQ(train_rf(d, 5, 4, 2, Seed{3}), train_rf(d, 5, 4, 2, Seed{3}));
  EXPECT_NE(train_rf(d, 5, 4, 2, Seed{3}), train_rf(d, 5, 4, 2, Seed{4}));
}

TEST(RandomForest, TreesBeatMajorityOnTheirBootstrap) {
  const auto d = test::blob_dataset(60, 5, 2.0, Seed{6});
  const auto m = train_rf(d, 10, 4, 2, Seed{9});
  const auto& trees = std::get<ForestPayload>(m.payload).trees;
  const auto cols = SortedColumns::build(d);
  for (std::size_t t = 0; t < trees.size(); ++t) {
    Rng rng(derive_seed(Seed{9}, t));
    const auto w = bootstrap_weights(d.rows(), rng);
    const auto rebuilt = grow_tree(cols, d.labels, w, TreeParams{4, 2, 0}, rng);
    EXPECT_EQ(rebuilt, trees[t]);
    std::array<double, kModeCount> cls{};
    double hit = 0.0, total = 0.0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      cls[mode_index(d.labels[i])] += w[i];
      total += w[i];
      if (trees[t].vote(d.row(i)) == d.labels[i]) hit += w[i];
    }
    EXPECT_GE(hit / total, *std::max_element(cls.begin(), cls.end()) / total);
  }
}

TEST(RandomForest, MajorityVote) {
  auto leaf = [](ModeLabel l) {
    DecisionTree t;
    TreeNode n;
    n.counts[mode_index(l)] = 1.0;
    t.nodes.push_back(n);
    return t;
  };
  Model m;
  m.kind = ModelKind::RF;
  m.dim = 1;
  m.payload = ForestPayload{{leaf(LK), leaf(LK), leaf(LC)}};
  const std::vector<double> x{0.0};
  EXPECT_EQ(predict(m, x), LK);
  const auto p = predict_proba(m, x);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p[2], 1.0 / 3.0, 1e-12);
}

TEST(Gini, Values) {
  EXPECT_DOUBLE_EQ(gini({4, 0, 0}), 0.0);
  EXPECT_NEAR(gini({1, 1, 1}), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(gini({1, 1, 0}), 0.5, 1e-12);
}

// --- logistic regression ----------------------------------------------------

TEST(Logistic, GradientMatchesFiniteDifferences) {
  const auto d = test::blob_dataset(20, 4, 1.0, Seed{12});
  Rng rng(Seed{13});
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> w(kModeCount * (d.dim + 1));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    const auto obj = lr_objective(w, d, 0.1);
    const double h = 1e-5;
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto up = w, down = w;
      up[k] += h;
      down[k] -= h;
      const double fd = (lr_objective(up, d, 0.1).loss - lr_objective(down, d, 0.1).loss) / (2 * h);
      EXPECT_NEAR(obj.gradient[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Logistic, ZeroWeightsGiveUniformProbabilities) {
  const auto d = test::blob_dataset(5, 3, 1.0, Seed{1});
  std::vector<double> w(kModeCount * 4, 0.0);
  EXPECT_NEAR(lr_objective(w, d, 1.0).loss, std::log(3.0), 1e-12);
  const auto p = softmax({0.0, 0.0, 0.0});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Logistic, ProbabilitiesSumToOneAndArgmaxIsPrediction) {
  const auto d = test::blob_dataset(40, 5, 1.5, Seed{14});
  const auto m = train_lr(d, 1e-2, 100, 1e-9);
  Rng rng(Seed{15});
  std::vector<double> x(5);
  for (int i = 0; i < 1000; ++i) {
    for (auto& v : x) v = rng.uniform(-10.0, 10.0);
    const auto p = predict_proba(m, x);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
    const auto arg = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    EXPECT_EQ(predict(m, x), mode_from_index(arg));
  }
}

std::vector<double> flatten(const Model& m) {
  const auto& lp = std::get<LinearPayload>(m.payload);
  std::vector<double> w;
  for (std::size_t c = 0; c < kModeCount; ++c) {
    w.insert(w.end(), lp.weights[c].begin(), lp.weights[c].end());
    w.push_back(lp.bias[c]);
  }
  return w;
}

TEST(Logistic, LossNonIncreasingInIterations) {
  const auto d = test::blob_dataset(30, 4, 2.0, Seed{16});
  double prev = std::log(3.0) + 1e-12;
  for (int iters = 1; iters <= 60; ++iters) {
    const auto m = train_lr(d, 1e-2, iters, 1e-300);
    const double loss = lr_objective(flatten(m), d, 1e-2).loss;
    EXPECT_LE(loss, prev);
    prev = loss;
  }
}

TEST(Logistic, ReportsNonConvergence) {
  const auto d = test::blob_dataset(30, 4, 2.0, Seed{17});
  const auto short_run = train_lr(d, 1e-2, 3, 1e-12);
  EXPECT_FALSE(short_run.converged);
  EXPECT_EQ(short_run.iterations, 3);
  const auto long_run = train_lr(d, 1e-2, 5000, 1e-6);
  EXPECT_TRUE(long_run.converged);
  EXPECT_LT(long_run.iterations, 5000);
}

TEST(Logistic, LearnsBlobs) {
  const auto d = test::blob_dataset(100, 6, 0.7, Seed{18});
  const auto m = train_lr(d, 1e-3, 300, 1e-8);
  EXPECT_GE(accuracy(predict_all(m, d), d.labels), 0.98);
}

// --- cross-validation -------------------------------------------------------

TEST(CrossValidation, SingletonGridIsChosen) {
  const auto d = test::blob_dataset(30, 3, 1.0, Seed{1});
  HyperParams hp;
  hp.l2 = 0.5;
  hp.max_iter = 50;
  const std::vector<HyperParams> grid{hp};
  const auto r = cross_validate(d, ModelKind::LR, grid, 5, Seed{2});
  EXPECT_EQ(r.best, hp);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.points[0].fold_scores.size(), 5u);
}

TEST(CrossValidation, PerfectDataScoresOne) {
  const auto d = test::blob_dataset(30, 6, 0.1, Seed{3});
  const auto grid = default_grid(ModelKind::RF);
  const auto r = cross_validate(d, ModelKind::RF, grid, 5, Seed{4});
  for (const auto& p : r.points) EXPECT_EQ(p.mean_score, 1.0);
}

TEST(CrossValidation, TiesGoToStrongerRegularization) {
  const auto d = test::blob_dataset(30, 6, 0.1, Seed{3});
  std::vector<HyperParams> grid(3);
  grid[0].l2 = 1e-4;
  grid[1].l2 = 1e-1;
  grid[2].l2 = 1e-2;
  for (auto& g : grid) g.max_iter = 100;
  const auto r = cross_validate(d, ModelKind::LR, grid, 5, Seed{4});
  for (const auto& p : r.points) ASSERT_EQ(p.mean_score, 1.0);
  EXPECT_EQ(r.best.l2, 1e-1);
}

TEST(CrossValidation, EmptyGridThrows) {
  const auto d = test::blob_dataset(10, 3, 1.0, Seed{1});
  EXPECT_THROW(cross_validate(d, ModelKind::LR, std::vector<HyperParams>{}, 5, Seed{1}), DomainError);
}

TEST(CrossValidation, TooFewGroupsThrows) {
  const auto d = points(1, {{{0}, LK}, {{1}, LC}, {{2}, LK}});
  EXPECT_THROW(assign_group_folds(d, 5, Seed{1}), DomainError);
}

TEST(CrossValidation, GroupsNeverStraddleFolds) {
  Rng rng(Seed{21});
  for (int trial = 0; trial < 30; ++trial) {
    LabeledDataset d;
    d.dim = 1;
    const std::size_t groups = 5 + rng.index(20);
    const std::size_t n = 50 + rng.index(200);
    std::vector<std::size_t> group_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      group_of[i] = i < groups ? i : rng.index(groups);
      const double x = rng.uniform(0.0, 1.0);
      d.add_row(std::span<const double>(&x, 1), mode_from_index(rng.index(3)),
                "ep" + std::to_string(group_of[i]), "driver1", 0, 0);
    }
    const auto folds = assign_group_folds(d, 5, Seed{static_cast<std::uint64_t>(trial)});
    ASSERT_EQ(folds.size(), d.group_names.size());
    std::map<std::string, std::set<int>> seen;
    std::set<int> used;
    for (std::size_t i = 0; i < n; ++i) {
      const int f = folds[d.groups[i]];
      ASSERT_GE(f, 0);
      ASSERT_LT(f, 5);
      seen[d.group_names[d.groups[i]]].insert(f);
      used.insert(f);
    }
    for (const auto& [g, fs] : seen) EXPECT_EQ(fs.size(), 1u) << g;
    EXPECT_EQ(used.size(), 5u);
  }
}

TEST(CompareRegularization, Ordering) {
  HyperParams a, b;
  a.lambda = 1e-1;
  b.lambda = 1e-3;
  EXPECT_LT(compare_regularization(ModelKind::SVM, a, b), 0);
  EXPECT_GT(compare_regularization(ModelKind::SVM, b, a), 0);
  a.max_depth = 4;
  b.max_depth = 8;
  EXPECT_LT(compare_regularization(ModelKind::RF, a, b), 0);
  EXPECT_EQ(compare_regularization(ModelKind::LR, a, a), 0);
}

// --- serialization ----------------------------------------------------------

void expect_round_trip(const Model& m, std::size_t dim) {
  const auto j = model_to_json(m);
  const Model back = model_from_json(nlohmann::ordered_json::parse(j.dump()));
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_to_json(back).dump(), j.dump());
  Rng rng(Seed{99});
  std::vector<double> x(dim);
  for (int i = 0; i < 1000; ++i) {
    for (auto& v : x) v = rng.uniform(-5.0, 5.0);
    ASSERT_EQ(predict(back, x), predict(m, x));
  }
}

TEST(ModelIo, RoundTripsAllKinds) {
  const auto d = test::blob_dataset(40, 5, 1.5, Seed{30});
  auto svm = train_svm(d, 1e-3, 3, Seed{1});
  svm.normalizer = Normalizer{{0.1, 0.2, 0.3, 0.4, 0.5}, {1.0, 2.0, 3.0, 4.0, 5.0}};
  expect_round_trip(svm, 5);
  auto rf = train_rf(d, 7, 5, 2, Seed{2});
  rf.driver_id = "driver2";
  expect_round_trip(rf, 5);
  expect_round_trip(train_lr(d, 1e-2, 30, 1e-9), 5);
}

TEST(ModelIo, FileRoundTrip) {
  test::TempDir dir("model");
  const auto d = test::blob_dataset(20, 3, 1.0, Seed{31});
  const auto m = train_rf(d, 3, 3, 2, Seed{3});
  const auto path = (dir / "m.json").string();
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  EXPECT_THROW(load_model((dir / "missing.json").string()), std::runtime_error);
}

std::string error_of(const nlohmann::ordered_json& j) {
  try {
    model_from_json(j);
  } catch (const DomainError& e) {
    return e.what();
  }
  return "";
}

TEST(ModelIo, ErrorsNameTheProblem) {
  const auto d = test::blob_dataset(20, 3, 1.0, Seed{32});
  const auto good = model_to_json(train_lr(d, 1e-2, 10, 1e-9));

  auto wrong_version = good;
  wrong_version["version"] = 99;
  EXPECT_NE(error_of(wrong_version).find("version 99"), std::string::npos);

  auto wrong_format = good;
  wrong_format["format"] = "something-else";
  EXPECT_NE(error_of(wrong_format).find("format"), std::string::npos);

  auto missing = good;
  missing.erase("dim");
  EXPECT_NE(error_of(missing).find("'dim'"), std::string::npos);

  auto bad_type = good;
  bad_type["dim"] = "three";
  EXPECT_NE(error_of(bad_type).find("'dim'"), std::string::npos);
}

TEST(ModelKindNames, ParseAndReject) {
  EXPECT_EQ(parse_model_kind("SVM"), ModelKind::SVM);
  EXPECT_EQ(parse_model_kind("rf"), ModelKind::RF);
  EXPECT_EQ(model_kind_name(ModelKind::LR), "lr");
  try {
    parse_model_kind("knn");
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(std::string(e.what()), "unknown algorithm 'knn' (valid: svm, rf, lr)");
  }
}

TEST(Dataset, SubsetStrideDriver) {
  LabeledDataset d;
  d.dim = 1;
  for (int i = 0; i < 10; ++i) {
    const double x = i;
    d.add_row(std::span<const double>(&x, 1), i % 2 ? LK : P, "g" + std::to_string(i / 5),
              i < 4 ? "driver1" : "driver2", 0, 0);
  }
  d.validate();
  EXPECT_EQ(d.strided(3).rows(), 4u);
  EXPECT_EQ(d.strided(3).row(1)[0], 3.0);
  EXPECT_EQ(d.for_driver("driver2").rows(), 6u);
  EXPECT_EQ(d.for_driver("driver2").row(0)[0], 4.0);
  const std::vector<std::size_t> idx{9, 0};
  const auto s = d.subset(idx);
  EXPECT_EQ(s.row(0)[0], 9.0);
  EXPECT_EQ(s.labels[1], P);
  EXPECT_EQ(d.class_counts()[0], 5u);
  EXPECT_THROW(d.strided(0), DomainError);
}

}  // namespace
}  // namespace laneintent
