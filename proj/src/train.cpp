#include <algorithm>
#include <cmath>
#include <random>

#include "hod/heads.hpp"
#include "hod/metrics.hpp"
#include "hod/scoring.hpp"

namespace hod {

namespace {

bool usable_for_training(const ClassifierHead& head, const TrainExample& ex) {
  switch (head.loss_kind) {
    case LossKind::ce_inlier_only:
      return !ex.is_outlier;
    case LossKind::oe:
    case LossKind::reject_bucket:
      return true;
    case LossKind::fine_only:
    case LossKind::hod:
      return head.layout.contains(ex.condition_id);
  }
  return false;
}

double validation_auroc(const ClassifierHead& head,
                        const std::vector<TrainExample>& val) {
  std::vector<double> in, out;
  for (const auto& ex : val) {
    const double u = ood_score(head, ex.feature);
    if (ex.is_outlier) out.push_back(u);
    else in.push_back(u);
  }
  if (in.empty() || out.empty()) return 0.5;
  return auroc(in, out);
}

}  // namespace

TrainedHead train_head(const ClassifierHead& initial,
                       const std::vector<TrainExample>& train,
                       const std::vector<TrainExample>& val,
                       const TrainConfig& cfg) {
  cfg.validate();
  initial.validate();

  std::vector<const TrainExample*> pool;
  for (const auto& ex : train)
    if (usable_for_training(initial, ex)) pool.push_back(&ex);
  if (pool.empty()) throw InvalidInput("no usable training examples for this head");

  ClassifierHead head = initial;
  TrainedHead result;
  result.head = initial;
  result.trace.best_step = 0;
  result.trace.best_val_auroc = validation_auroc(head, val);
  result.trace.eval_steps.push_back(0);
  result.trace.val_aurocs.push_back(result.trace.best_val_auroc);
  result.head.val_auroc = result.trace.best_val_auroc;

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  size_t cursor = 0;

  std::vector<double> vel_w(head.weights.size(), 0.0);
  std::vector<double> vel_b(head.biases.size(), 0.0);
  std::vector<double> grad_w(head.weights.size());
  std::vector<double> grad_b(head.biases.size());

  for (int step = 1; step <= cfg.steps; ++step) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {  // epoch boundary: reshuffle
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const TrainExample& ex = *pool[order[cursor++]];
      const auto fwd = forward(head, ex.feature);
      batch_loss += loss_value(head, fwd.probs, ex.condition_id, ex.is_outlier);
      const auto g = loss_gradient(head, ex.feature, ex.condition_id, ex.is_outlier);
      for (size_t i = 0; i < grad_w.size(); ++i) grad_w[i] += g.weights[i];
      for (size_t i = 0; i < grad_b.size(); ++i) grad_b[i] += g.biases[i];
    }
    batch_loss /= cfg.batch_size;
    if (!std::isfinite(batch_loss)) throw TrainingDiverged(step);
    result.trace.batch_losses.push_back(batch_loss);

    const double lr =
        cfg.initial_lr *
        std::pow(cfg.decay_factor, static_cast<double>(step) / cfg.steps);
    const double inv_batch = 1.0 / cfg.batch_size;
    for (size_t i = 0; i < head.weights.size(); ++i) {
      vel_w[i] = cfg.momentum * vel_w[i] + grad_w[i] * inv_batch;
      head.weights[i] -= lr * vel_w[i];
    }
    for (size_t i = 0; i < head.biases.size(); ++i) {
      vel_b[i] = cfg.momentum * vel_b[i] + grad_b[i] * inv_batch;
      head.biases[i] -= lr * vel_b[i];
    }

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double va = validation_auroc(head, val);
      result.trace.eval_steps.push_back(step);
      result.trace.val_aurocs.push_back(va);
      if (va > result.trace.best_val_auroc) {
        result.trace.best_val_auroc = va;
        result.trace.best_step = step;
        result.head = head;
        result.head.val_auroc = va;
      }
    }
  }
  return result;
}

}  // namespace hod
