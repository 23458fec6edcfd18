#include <numeric>

#include "laneintent/classifiers.hpp"

namespace laneintent {

Model train_svm(const LabeledDataset& data, double lambda, int epochs, Seed seed) {
  require_trainable(data, "train_svm");
  if (!(lambda > 0.0)) throw DomainError("train_svm: lambda must be > 0");
  if (epochs < 1) throw DomainError("train_svm: epochs must be >= 1");

  const std::size_t n = data.rows();
  const std::size_t d = data.dim;
  const auto counts = data.class_counts();

  // One visiting order per epoch, shared by the per-class problems.
  std::vector<std::vector<std::uint32_t>> orders(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    auto& o = orders[static_cast<std::size_t>(e)];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    rng.shuffle(std::span<std::uint32_t>(o));
  }

  const std::uint64_t total = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(epochs);
  const std::uint64_t avg_from = total / 2 + 1;

  LinearPayload payload;
  for (std::size_t c = 0; c < kModeCount; ++c) {
    payload.weights[c].assign(d, 0.0);
    payload.active[c] = counts[c] > 0;
    if (!payload.active[c]) continue;

    // w[d] is the bias, paired with a constant 1 feature.
    std::vector<double> w(d + 1, 0.0);
    std::vector<double> avg(d + 1, 0.0);
    std::uint64_t t = 0;
    for (const auto& order : orders) {
      for (std::uint32_t i : order) {
        ++t;
        const auto x = data.row(i);
        const double y = mode_index(data.labels[i]) == c ? 1.0 : -1.0;
        double margin = w[d];
        for (std::size_t j = 0; j < d; ++j) margin += w[j] * x[j];
        margin *= y;

        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double shrink = 1.0 - eta * lambda;
        for (auto& v : w) v *= shrink;
        if (margin < 1.0) {
          for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * x[j];
          w[d] += eta * y;
        }
        if (t >= avg_from) {
          for (std::size_t j = 0; j <= d; ++j) avg[j] += w[j];
        }
      }
    }
    const double m = static_cast<double>(total - avg_from + 1);
    for (std::size_t j = 0; j < d; ++j) payload.weights[c][j] = avg[j] / m;
    payload.bias[c] = avg[d] / m;
  }

  Model model;
  model.kind = ModelKind::SVM;
  model.dim = d;
  model.payload = std::move(payload);
  model.hyper.lambda = lambda;
  model.hyper.epochs = epochs;
  model.seed = seed;
  model.iterations = static_cast<int>(std::min<std::uint64_t>(total, 0x7fffffff));
  return model;
}

}  // namespace laneintent
