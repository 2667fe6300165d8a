#include "hod/heads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace hod {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::ce_inlier_only: return "ce_inlier_only";
    case LossKind::oe: return "oe";
    case LossKind::reject_bucket: return "reject_bucket";
    case LossKind::fine_only: return "fine_only";
    case LossKind::hod: return "hod";
  }
  throw InvalidInput("bad loss kind");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ce_inlier_only") return LossKind::ce_inlier_only;
  if (s == "oe") return LossKind::oe;
  if (s == "reject_bucket") return LossKind::reject_bucket;
  if (s == "fine_only") return LossKind::fine_only;
  if (s == "hod") return LossKind::hod;
  throw InvalidInput("unknown loss kind: " + s);
}

int ClassLayout::index_of(int condition_id) const {
  for (size_t i = 0; i < inlier_ids.size(); ++i)
    if (inlier_ids[i] == condition_id) return static_cast<int>(i);
  for (size_t i = 0; i < outlier_ids.size(); ++i)
    if (outlier_ids[i] == condition_id)
      return static_cast<int>(inlier_ids.size() + i);
  throw UnknownLabel("condition " + std::to_string(condition_id) +
                     " not in class layout");
}

bool ClassLayout::contains(int condition_id) const {
  auto in = [&](const std::vector<int>& v) {
    return std::find(v.begin(), v.end(), condition_id) != v.end();
  };
  return in(inlier_ids) || in(outlier_ids);
}

void ClassifierHead::validate() const {
  if (layout.inlier_ids.empty()) throw InvalidInput("empty inlier block");
  const size_t out = layout.outlier_ids.size();
  switch (loss_kind) {
    case LossKind::ce_inlier_only:
    case LossKind::oe:
      if (out != 0) throw InvalidInput("inlier-only loss requires no outlier block");
      break;
    case LossKind::reject_bucket:
      if (out != 1) throw InvalidInput("reject bucket requires outlier block of size 1");
      break;
    case LossKind::fine_only:
    case LossKind::hod:
      if (out == 0) throw InvalidInput("hod/fine_only require a non-empty outlier block");
      break;
  }
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  const size_t n = static_cast<size_t>(layout.num_classes());
  if (weights.size() != n * feature_dim || biases.size() != n)
    throw InvalidInput("weight/bias shape mismatch");
}

ClassifierHead init_head(ClassLayout layout, int feature_dim, LossKind kind,
                         double lambda, int view_id, std::uint64_t init_seed) {
  ClassifierHead h;
  h.layout = std::move(layout);
  h.feature_dim = feature_dim;
  h.loss_kind = kind;
  h.lambda = lambda;
  h.view_id = view_id;
  h.init_seed = init_seed;
  const size_t n = static_cast<size_t>(h.layout.num_classes());
  h.weights.resize(n * feature_dim);
  h.biases.assign(n, 0.0);
  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> w_dist(0.0, 0.01);
  for (double& w : h.weights) w = w_dist(rng);
  h.validate();
  return h;
}

ForwardResult forward(const ClassifierHead& head, const std::vector<double>& feature) {
  if (static_cast<int>(feature.size()) != head.feature_dim)
    throw InvalidInput("feature dimension mismatch");
  for (double v : feature)
    if (!std::isfinite(v)) throw NumericalError("non-finite feature");
  const int n = head.layout.num_classes();
  ForwardResult r;
  r.logits.resize(n);
  for (int c = 0; c < n; ++c) {
    double z = head.biases[c];
    const double* row = &head.weights[static_cast<size_t>(c) * head.feature_dim];
    for (int k = 0; k < head.feature_dim; ++k) z += row[k] * feature[k];
    r.logits[c] = z;
  }
  const double zmax = *std::max_element(r.logits.begin(), r.logits.end());
  if (!std::isfinite(zmax)) throw NumericalError("non-finite logits");
  r.probs.resize(n);
  double denom = 0.0;
  for (int c = 0; c < n; ++c) {
    r.probs[c] = std::exp(r.logits[c] - zmax);
    denom += r.probs[c];
  }
  for (int c = 0; c < n; ++c) r.probs[c] /= denom;
  return r;
}

double hod_loss(const ProbabilityVector& probs, const ClassLayout& layout,
                int label_condition_id, double lambda) {
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  const int idx = layout.index_of(label_condition_id);
  const bool inlier = layout.is_inlier_index(idx);
  double group = 0.0;
  const size_t in_sz = layout.inlier_ids.size();
  const size_t lo = inlier ? 0 : in_sz;
  const size_t hi = inlier ? in_sz : probs.size();
  for (size_t i = lo; i < hi; ++i) group += probs[i];
  return -std::log(probs[idx]) - lambda * std::log(group);
}

double reject_bucket_loss(const ProbabilityVector& probs, const ClassLayout& layout,
                          int label_condition_id) {
  if (layout.outlier_ids.size() != 1)
    throw InvalidInput("reject bucket requires outlier block of size 1");
  auto in = std::find(layout.inlier_ids.begin(), layout.inlier_ids.end(),
                      label_condition_id);
  const int idx = in != layout.inlier_ids.end()
                      ? static_cast<int>(in - layout.inlier_ids.begin())
                      : static_cast<int>(layout.inlier_ids.size());
  return -std::log(probs[idx]);
}

double oe_loss(const ProbabilityVector& probs, const ClassLayout& layout,
               int label_condition_id, bool is_outlier, double lambda_oe) {
  if (!layout.outlier_ids.empty())
    throw InvalidInput("outlier exposure requires an inlier-only head");
  if (!is_outlier) return -std::log(probs[layout.index_of(label_condition_id)]);
  double sum = 0.0;
  for (double p : probs) sum += std::log(p);
  return lambda_oe * (-sum / static_cast<double>(probs.size()));
}

double loss_value(const ClassifierHead& head, const ProbabilityVector& probs,
                  int label_condition_id, bool is_outlier) {
  switch (head.loss_kind) {
    case LossKind::hod:
      return hod_loss(probs, head.layout, label_condition_id, head.lambda);
    case LossKind::fine_only:
      return hod_loss(probs, head.layout, label_condition_id, 0.0);
    case LossKind::reject_bucket:
      return reject_bucket_loss(probs, head.layout, label_condition_id);
    case LossKind::ce_inlier_only:
      return -std::log(probs[head.layout.index_of(label_condition_id)]);
    case LossKind::oe:
      return oe_loss(probs, head.layout, label_condition_id, is_outlier, head.lambda);
  }
  throw InvalidInput("bad loss kind");
}

namespace {

// Gradient of the configured loss w.r.t. the logits.
std::vector<double> logit_gradient(const ClassifierHead& head,
                                   const ProbabilityVector& probs,
                                   int label_condition_id, bool is_outlier) {
  const auto& layout = head.layout;
  const int n = layout.num_classes();
  std::vector<double> g(probs.begin(), probs.end());
  switch (head.loss_kind) {
    case LossKind::ce_inlier_only: {
      g[layout.index_of(label_condition_id)] -= 1.0;
      break;
    }
    case LossKind::oe: {
      if (!is_outlier) {
        g[layout.index_of(label_condition_id)] -= 1.0;
      } else {
        const double u = 1.0 / n;
        for (int c = 0; c < n; ++c) g[c] = head.lambda * (probs[c] - u);
      }
      break;
    }
    case LossKind::reject_bucket: {
      auto in = std::find(layout.inlier_ids.begin(), layout.inlier_ids.end(),
                          label_condition_id);
      const int idx = in != layout.inlier_ids.end()
                          ? static_cast<int>(in - layout.inlier_ids.begin())
                          : static_cast<int>(layout.inlier_ids.size());
      g[idx] -= 1.0;
      break;
    }
    case LossKind::fine_only:
    case LossKind::hod: {
      const int idx = layout.index_of(label_condition_id);
      g[idx] -= 1.0;
      const double lambda =
          head.loss_kind == LossKind::hod ? head.lambda : 0.0;
      if (lambda > 0.0) {
        // Coarse term: p - q, where q spreads the group indicator over the
        // group proportionally to within-group probabilities.
        const bool inlier = layout.is_inlier_index(idx);
        const size_t in_sz = layout.inlier_ids.size();
        const size_t lo = inlier ? 0 : in_sz;
        const size_t hi = inlier ? in_sz : probs.size();
        double group = 0.0;
        for (size_t i = lo; i < hi; ++i) group += probs[i];
        for (int c = 0; c < n; ++c) {
          const bool member = static_cast<size_t>(c) >= lo &&
                              static_cast<size_t>(c) < hi;
          const double q = member ? probs[c] / group : 0.0;
          g[c] += lambda * (probs[c] - q);
        }
      }
      break;
    }
  }
  for (double v : g)
    if (!std::isfinite(v)) throw NumericalError("non-finite gradient");
  return g;
}

}  // namespace

Gradient loss_gradient(const ClassifierHead& head, const std::vector<double>& feature,
                       int label_condition_id, bool is_outlier) {
  const auto fwd = forward(head, feature);
  const auto g = logit_gradient(head, fwd.probs, label_condition_id, is_outlier);
  Gradient grad;
  const int n = head.layout.num_classes();
  grad.weights.resize(static_cast<size_t>(n) * head.feature_dim);
  grad.biases.resize(n);
  for (int c = 0; c < n; ++c) {
    grad.biases[c] = g[c];
    double* row = &grad.weights[static_cast<size_t>(c) * head.feature_dim];
    for (int k = 0; k < head.feature_dim; ++k) row[k] = g[c] * feature[k];
  }
  return grad;
}

Gradient finite_diff_grad(const ClassifierHead& head, const std::vector<double>& feature,
                          int label_condition_id, bool is_outlier, double epsilon) {
  if (epsilon <= 0.0) throw InvalidInput("epsilon must be positive");
  ClassifierHead probe = head;
  auto eval = [&]() {
    return loss_value(probe, forward(probe, feature).probs, label_condition_id,
                      is_outlier);
  };
  Gradient grad;
  grad.weights.resize(head.weights.size());
  grad.biases.resize(head.biases.size());
  for (size_t i = 0; i < head.weights.size(); ++i) {
    probe.weights[i] = head.weights[i] + epsilon;
    const double hi = eval();
    probe.weights[i] = head.weights[i] - epsilon;
    const double lo = eval();
    probe.weights[i] = head.weights[i];
    grad.weights[i] = (hi - lo) / (2.0 * epsilon);
  }
  for (size_t i = 0; i < head.biases.size(); ++i) {
    probe.biases[i] = head.biases[i] + epsilon;
    const double hi = eval();
    probe.biases[i] = head.biases[i] - epsilon;
    const double lo = eval();
    probe.biases[i] = head.biases[i];
    grad.biases[i] = (hi - lo) / (2.0 * epsilon);
  }
  return grad;
}

void TrainConfig::validate() const {
  if (steps <= 0 || batch_size <= 0 || eval_every <= 0)
    throw ConfigError("steps, batch_size, eval_every must be positive");
  if (initial_lr < 0.0 || momentum < 0.0)
    throw ConfigError("learning rate and momentum must be non-negative");
  if (decay_factor <= 0.0 || decay_factor > 1.0)
    throw ConfigError("decay_factor must lie in (0,1]");
}

void write_head(const std::string& path, const ClassifierHead& head) {
  ordered_json j;
  j["class_layout"] = {{"inlier_ids", head.layout.inlier_ids},
                       {"outlier_ids", head.layout.outlier_ids}};
  j["loss_kind"] = to_string(head.loss_kind);
  j["lambda"] = head.lambda;
  j["view_id"] = head.view_id;
  j["init_seed"] = head.init_seed;
  j["feature_dim"] = head.feature_dim;
  j["weights"] = head.weights;
  j["biases"] = head.biases;
  if (head.val_auroc) j["val_auroc"] = *head.val_auroc;
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << j.dump() << "\n";
}

ClassifierHead read_head(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  json j = json::parse(in);
  ClassifierHead h;
  h.layout.inlier_ids = j.at("class_layout").at("inlier_ids").get<std::vector<int>>();
  h.layout.outlier_ids = j.at("class_layout").at("outlier_ids").get<std::vector<int>>();
  h.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
  h.lambda = j.at("lambda").get<double>();
  h.view_id = j.at("view_id").get<int>();
  h.init_seed = j.at("init_seed").get<std::uint64_t>();
  h.feature_dim = j.at("feature_dim").get<int>();
  h.weights = j.at("weights").get<std::vector<double>>();
  h.biases = j.at("biases").get<std::vector<double>>();
  if (j.contains("val_auroc")) h.val_auroc = j.at("val_auroc").get<double>();
  h.validate();
  return h;
}

}  // namespace hod
