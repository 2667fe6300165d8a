#pragma once

#include <string>
#include <vector>

#include "hod/core.hpp"
#include "hod/heads.hpp"

// OOD scores, confidence, top-1 predictions, and the Mahalanobis baseline.

namespace hod {

struct ScoreSet {
  std::vector<int> case_ids;
  std::vector<double> ood;         // U(x)
  std::vector<double> confidence;  // C(x)
  std::vector<int> top1;           // condition id or kOutClassId
  std::vector<int> inlier_class_ids;
  std::vector<std::vector<double>> inlier_probs;  // aligned to inlier_class_ids

  size_t size() const { return case_ids.size(); }
};

// Sum of the outlier-block probabilities. Requires a head with an outlier
// block (hod, fine_only, reject_bucket); otherwise throws WrongScorer.
double ood_score_hod(const ClassifierHead& head, const std::vector<double>& feature);

// 1 - max softmax probability; with an outlier block present, the inlier
// probabilities are renormalized over the inlier block first.
double ood_score_msp(const ClassifierHead& head, const std::vector<double>& feature);

// Dispatch by the head's loss kind: hod-style heads use the outlier block,
// inlier-only heads use max-of-softmax.
double ood_score(const ClassifierHead& head, const std::vector<double>& feature);

// argmax over {inlier class probabilities} + {U(x)}; exact ties go to the
// lowest inlier class id, then to OUT. Inlier-only heads never predict OUT.
int top1(const ClassifierHead& head, const std::vector<double>& feature);

// Shared argmax rule used by top1 and by ensembles averaging probabilities.
int top1_from_probs(const std::vector<int>& inlier_class_ids,
                    const std::vector<double>& inlier_probs, double ood);

struct ScoredCase {
  int case_id = 0;
  std::vector<double> feature;
};

ScoreSet score_cases(const ClassifierHead& head, const std::vector<ScoredCase>& cases);

// Class-conditional Gaussians with a single pooled covariance plus ridge.
struct GaussianBank {
  std::vector<int> class_ids;
  std::vector<std::vector<double>> means;
  std::vector<double> covariance;  // d x d, row-major, after ridge
  std::vector<double> cholesky;    // lower-triangular factor of covariance
  int dim = 0;
};

// Pooled within-class covariance (divisor N - K) plus ridge * I.
// Throws DegenerateClass if any class has fewer than 2 samples.
GaussianBank fit_gaussians(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, double ridge);

// Min over classes of the squared Mahalanobis distance to the class mean.
double ood_score_mahalanobis(const GaussianBank& bank,
                             const std::vector<double>& feature);

// Mahalanobis ScoreSet: unbounded scores, confidence = -U, top1 = nearest
// class mean, no probability columns.
ScoreSet score_cases_mahalanobis(const GaussianBank& bank,
                                 const std::vector<ScoredCase>& cases);

void write_scoreset_csv(const std::string& path, const ScoreSet& scores);

}  // namespace hod
