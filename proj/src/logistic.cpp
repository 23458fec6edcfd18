#include <cmath>

#include "laneintent/classifiers.hpp"

namespace laneintent {

LrObjective lr_objective(std::span<const double> params, const LabeledDataset& data, double l2) {
  const std::size_t d = data.dim;
  const std::size_t stride = d + 1;
  if (params.size() != kModeCount * stride) throw DomainError("lr_objective: bad parameter size");
  if (data.rows() == 0) throw DomainError("lr_objective: empty dataset");

  LrObjective out;
  out.gradient.assign(params.size(), 0.0);
  double nll = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    std::array<double, kModeCount> s{};
    for (std::size_t c = 0; c < kModeCount; ++c) {
      const double* w = params.data() + c * stride;
      double acc = w[d];
      for (std::size_t j = 0; j < d; ++j) acc += w[j] * x[j];
      s[c] = acc;
    }
    const auto p = softmax(s);
    const std::size_t y = mode_index(data.labels[i]);
    nll -= std::log(std::max(p[y], 1e-300));
    for (std::size_t c = 0; c < kModeCount; ++c) {
      const double r = p[c] - (c == y ? 1.0 : 0.0);
      double* g = out.gradient.data() + c * stride;
      for (std::size_t j = 0; j < d; ++j) g[j] += r * x[j];
      g[d] += r;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(data.rows());
  double reg = 0.0;
  for (std::size_t c = 0; c < kModeCount; ++c) {
    for (std::size_t j = 0; j < stride; ++j) {
      const std::size_t k = c * stride + j;
      out.gradient[k] *= inv_n;
      if (j < d) {
        reg += params[k] * params[k];
        out.gradient[k] += l2 * params[k];
      }
    }
  }
  out.loss = nll * inv_n + 0.5 * l2 * reg;
  return out;
}

Model train_lr(const LabeledDataset& data, double l2, int max_iter, double tol,
               double initial_step) {
  require_trainable(data, "train_lr");
  if (l2 < 0.0) throw DomainError("train_lr: l2 must be >= 0");
  if (max_iter < 1) throw DomainError("train_lr: max_iter must be >= 1");
  if (!(tol > 0.0) || !(initial_step > 0.0)) {
    throw DomainError("train_lr: tol and initial_step must be > 0");
  }

  const std::size_t d = data.dim;
  std::vector<double> w(kModeCount * (d + 1), 0.0);
  LrObjective cur = lr_objective(w, data, l2);
  double step = initial_step;
  bool converged = false;
  int iter = 0;
  std::vector<double> trial(w.size());
  while (iter < max_iter) {
    ++iter;
    for (std::size_t k = 0; k < w.size(); ++k) trial[k] = w[k] - step * cur.gradient[k];
    LrObjective next = lr_objective(trial, data, l2);
    if (!(next.loss <= cur.loss)) {
      step /= 2.0;
      if (step < 1e-12) break;
      continue;
    }
    const double drop = cur.loss - next.loss;
    w.swap(trial);
    cur = std::move(next);
    if (drop < tol) {
      converged = true;
      break;
    }
  }

  LinearPayload payload;
  for (std::size_t c = 0; c < kModeCount; ++c) {
    payload.weights[c].assign(w.begin() + static_cast<std::ptrdiff_t>(c * (d + 1)),
                              w.begin() + static_cast<std::ptrdiff_t>(c * (d + 1) + d));
    payload.bias[c] = w[c * (d + 1) + d];
  }

  Model model;
  model.kind = ModelKind::LR;
  model.dim = d;
  model.payload = std::move(payload);
  model.hyper.l2 = l2;
  model.hyper.max_iter = max_iter;
  model.hyper.tol = tol;
  model.hyper.initial_step = initial_step;
  model.converged = converged;
  model.iterations = iter;
  return model;
}

}  // namespace laneintent
