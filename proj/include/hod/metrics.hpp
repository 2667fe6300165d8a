#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hod/core.hpp"
#include "hod/scoring.hpp"

// Ranking and decision metrics. Conventions: outliers are the positive class
// for the OOD metrics; a case is "predicted" iff C(x) > tau (boundary cases
// abstain); AUROC ties get half credit.

namespace hod {

struct CostMatrix {
  double correct_inlier = 0.0;
  double wrong_inlier = 1.0;
  double abstain_inlier = 0.5;
  double predict_outlier_as_inlier = 1.0;
  double abstain_outlier = 0.0;
};

// Per-case ground truth aligned with a ScoreSet.
struct EvalLabels {
  std::vector<int> condition_id;
  std::vector<bool> is_outlier;
  std::vector<RiskLevel> risk;      // risk of the case's condition
  std::vector<SkinType> skin_type;

  size_t size() const { return condition_id.size(); }
};

// Mann-Whitney AUROC: P(U_out > U_in) + 0.5 P(tie), via sort-and-rank.
double auroc(const std::vector<double>& inlier_scores,
             const std::vector<double>& outlier_scores);

// FPR at the largest threshold t (rule: outlier iff U >= t) with TPR >= target.
double fpr_at_tpr(const std::vector<double>& inlier_scores,
                  const std::vector<double>& outlier_scores,
                  double tpr_target = 0.95);

// Average precision with inliers positive at confidence 1 - U; tied
// confidences are processed as one block.
double aupr_in(const std::vector<double>& inlier_scores,
               const std::vector<double>& outlier_scores);

// Fraction of inlier cases whose argmax inlier probability hits the label.
double inlier_accuracy(const ScoreSet& scores, const EvalLabels& labels);

// A(tau): inlier accuracy over predicted cases, any predicted outlier counts
// as wrong. Empty prediction set -> nullopt.
std::optional<double> selective_accuracy(const ScoreSet& scores,
                                         const EvalLabels& labels, double tau);

// Fraction of outlier cases abstained (C <= tau).
double outlier_recall(const ScoreSet& scores, const EvalLabels& labels, double tau);

double cost(const ScoreSet& scores, const EvalLabels& labels, double tau,
            const CostMatrix& cm);

struct MetricReport {
  double auroc = 0.0;
  double fpr_at_95_tpr = 0.0;
  double aupr_in = 0.0;
  double inlier_accuracy = 0.0;

  std::string to_json() const;
};

MetricReport compute_report(const ScoreSet& scores, const EvalLabels& labels);

struct CurvePoint {
  double tau = 0.0;
  double outlier_recall = 0.0;
  std::optional<double> accuracy;
  double cost = 0.0;
};

// 101 evenly spaced taus in [0,1] plus every distinct observed confidence.
std::vector<CurvePoint> threshold_curve(const ScoreSet& scores,
                                        const EvalLabels& labels,
                                        const CostMatrix& cm);
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

enum class SubgroupKind { risk, skin_type };

struct SubgroupRow {
  std::string name;
  long num_inliers = 0;
  long num_outliers = 0;
  std::optional<double> auroc;  // nullopt when a side is empty
};

// Risk rows compare the full inlier set against the outliers of each risk
// level; skin rows restrict both sides to the subgroup.
std::vector<SubgroupRow> subgroup_report(const ScoreSet& scores,
                                         const EvalLabels& labels,
                                         SubgroupKind kind);
void write_subgroup_csv(const std::string& path, const std::vector<SubgroupRow>& rows);

// Helper: split a ScoreSet's OOD scores by ground truth.
void split_scores(const ScoreSet& scores, const EvalLabels& labels,
                  std::vector<double>& inlier_scores,
                  std::vector<double>& outlier_scores);

}  // namespace hod
