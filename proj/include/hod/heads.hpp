#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hod/core.hpp"

// Softmax classifier heads over case features. The loss menu covers plain
// inlier cross-entropy, outlier exposure, a single reject bucket, fine-grained
// outlier classes, and the hierarchical loss combining fine-grained
// cross-entropy with a lambda-weighted coarse inlier-vs-outlier term.

namespace hod {

// Synthetic class id of the reject bucket / aggregated outlier prediction.
inline constexpr int kOutClassId = -1;

enum class LossKind { ce_inlier_only, oe, reject_bucket, fine_only, hod };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

// Ordered output layout: inlier block first, then the outlier block.
struct ClassLayout {
  std::vector<int> inlier_ids;
  std::vector<int> outlier_ids;  // {kOutClassId} for a reject bucket

  int num_classes() const {
    return static_cast<int>(inlier_ids.size() + outlier_ids.size());
  }
  // Index into the full output vector; throws UnknownLabel when absent.
  int index_of(int condition_id) const;
  bool contains(int condition_id) const;
  bool is_inlier_index(int idx) const {
    return idx < static_cast<int>(inlier_ids.size());
  }
};

struct ClassifierHead {
  ClassLayout layout;
  int feature_dim = 0;
  LossKind loss_kind = LossKind::hod;
  double lambda = 0.1;  // coarse weight for hod, exposure weight for oe
  int view_id = 0;
  std::uint64_t init_seed = 0;
  std::vector<double> weights;  // num_classes x feature_dim, row-major
  std::vector<double> biases;   // num_classes
  std::optional<double> val_auroc;

  void validate() const;
};

ClassifierHead init_head(ClassLayout layout, int feature_dim, LossKind kind,
                         double lambda, int view_id, std::uint64_t init_seed);

struct ForwardResult {
  std::vector<double> logits;
  ProbabilityVector probs;
};

// Max-subtracted stable softmax. Throws NumericalError on non-finite input.
ForwardResult forward(const ClassifierHead& head, const std::vector<double>& feature);

// L_fine + lambda * L_coarse over the layout's inlier/outlier blocks.
double hod_loss(const ProbabilityVector& probs, const ClassLayout& layout,
                int label_condition_id, double lambda);

// Cross-entropy with all outlier labels collapsed onto the reject bucket.
double reject_bucket_loss(const ProbabilityVector& probs, const ClassLayout& layout,
                          int label_condition_id);

// Outlier exposure: inlier cross-entropy, uniform-target cross-entropy
// weighted by lambda_oe for outlier samples.
double oe_loss(const ProbabilityVector& probs, const ClassLayout& layout,
               int label_condition_id, bool is_outlier, double lambda_oe);

// The head's configured loss on one example.
double loss_value(const ClassifierHead& head, const ProbabilityVector& probs,
                  int label_condition_id, bool is_outlier);

struct Gradient {
  std::vector<double> weights;
  std::vector<double> biases;
};

// Analytic gradient of the configured loss w.r.t. weights and biases.
Gradient loss_gradient(const ClassifierHead& head, const std::vector<double>& feature,
                       int label_condition_id, bool is_outlier);

// Central finite differences, the oracle for loss_gradient.
Gradient finite_diff_grad(const ClassifierHead& head, const std::vector<double>& feature,
                          int label_condition_id, bool is_outlier, double epsilon);

struct TrainConfig {
  int steps = 2000;
  int batch_size = 16;
  double initial_lr = 0.5;
  double decay_factor = 0.01;
  double momentum = 0.9;
  int eval_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainExample {
  std::vector<double> feature;
  int condition_id = 0;
  bool is_outlier = false;
};

struct TrainingTrace {
  std::vector<double> batch_losses;   // one entry per step
  std::vector<int> eval_steps;
  std::vector<double> val_aurocs;
  int best_step = 0;
  double best_val_auroc = 0.0;
};

struct TrainedHead {
  ClassifierHead head;  // checkpoint with the best validation OOD AUROC
  TrainingTrace trace;
};

// Mini-batch SGD with momentum and exponential learning-rate decay;
// checkpoint selection by validation OOD AUROC every eval_every steps.
TrainedHead train_head(const ClassifierHead& head,
                       const std::vector<TrainExample>& train,
                       const std::vector<TrainExample>& val,
                       const TrainConfig& cfg);

void write_head(const std::string& path, const ClassifierHead& head);
ClassifierHead read_head(const std::string& path);

}  // namespace hod
