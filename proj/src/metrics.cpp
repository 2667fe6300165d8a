#include "hod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace hod {

using nlohmann::ordered_json;

namespace {

void require_both_sides(const std::vector<double>& in, const std::vector<double>& out) {
  if (in.empty() || out.empty())
    throw UndefinedMetric("metric undefined with an empty inlier or outlier side");
}

int argmax_inlier(const std::vector<int>& class_ids, const std::vector<double>& probs) {
  if (probs.empty()) throw InvalidInput("scoreset has no inlier probabilities");
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best] ||
        (probs[i] == probs[best] && class_ids[i] < class_ids[best]))
      best = i;
  return class_ids[best];
}

bool predicted(double confidence, double tau) { return confidence > tau; }

}  // namespace

double auroc(const std::vector<double>& inlier_scores,
             const std::vector<double>& outlier_scores) {
  require_both_sides(inlier_scores, outlier_scores);
  // Merge, sort, walk equal-value blocks; outliers above inliers score full
  // credit, ties half.
  struct Item { double score; bool is_outlier; };
  std::vector<Item> items;
  items.reserve(inlier_scores.size() + outlier_scores.size());
  for (double s : inlier_scores) items.push_back({s, false});
  for (double s : outlier_scores) items.push_back({s, true});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  double wins = 0.0;
  long inliers_below = 0;
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    long block_in = 0, block_out = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      if (items[j].is_outlier) ++block_out;
      else ++block_in;
      ++j;
    }
    wins += static_cast<double>(block_out) * inliers_below +
            0.5 * static_cast<double>(block_out) * block_in;
    inliers_below += block_in;
    i = j;
  }
  return wins / (static_cast<double>(inlier_scores.size()) *
                 static_cast<double>(outlier_scores.size()));
}

double fpr_at_tpr(const std::vector<double>& inlier_scores,
                  const std::vector<double>& outlier_scores, double tpr_target) {
  require_both_sides(inlier_scores, outlier_scores);
  // Largest t with TPR(t) >= target, where TPR(t) = frac of outliers >= t.
  // That threshold is the k-th largest outlier score, k = ceil(target * n).
  const long n = static_cast<long>(outlier_scores.size());
  long k = static_cast<long>(std::ceil(tpr_target * static_cast<double>(n)));
  k = std::clamp(k, 1L, n);
  std::vector<double> sorted = outlier_scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double threshold = sorted[k - 1];
  long fp = 0;
  for (double s : inlier_scores)
    if (s >= threshold) ++fp;
  return static_cast<double>(fp) / static_cast<double>(inlier_scores.size());
}

double aupr_in(const std::vector<double>& inlier_scores,
               const std::vector<double>& outlier_scores) {
  require_both_sides(inlier_scores, outlier_scores);
  struct Item { double confidence; bool is_inlier; };
  std::vector<Item> items;
  for (double s : inlier_scores) items.push_back({1.0 - s, true});
  for (double s : outlier_scores) items.push_back({1.0 - s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.confidence > b.confidence; });
  const double total_pos = static_cast<double>(inlier_scores.size());
  double ap = 0.0, tp = 0.0, seen = 0.0, prev_recall = 0.0;
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    while (j < items.size() && items[j].confidence == items[i].confidence) {
      if (items[j].is_inlier) tp += 1.0;
      seen += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / seen;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double inlier_accuracy(const ScoreSet& scores, const EvalLabels& labels) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  long correct = 0, total = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels.is_outlier[i]) continue;
    ++total;
    if (argmax_inlier(scores.inlier_class_ids, scores.inlier_probs[i]) ==
        labels.condition_id[i])
      ++correct;
  }
  if (total == 0) throw UndefinedMetric("no inlier cases");
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::optional<double> selective_accuracy(const ScoreSet& scores,
                                         const EvalLabels& labels, double tau) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  long num_predicted = 0, correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!predicted(scores.confidence[i], tau)) continue;
    ++num_predicted;
    if (!labels.is_outlier[i] &&
        argmax_inlier(scores.inlier_class_ids, scores.inlier_probs[i]) ==
            labels.condition_id[i])
      ++correct;
  }
  if (num_predicted == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(num_predicted);
}

double outlier_recall(const ScoreSet& scores, const EvalLabels& labels, double tau) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  long outliers = 0, abstained = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels.is_outlier[i]) continue;
    ++outliers;
    if (!predicted(scores.confidence[i], tau)) ++abstained;
  }
  if (outliers == 0) throw UndefinedMetric("no outlier cases");
  return static_cast<double>(abstained) / static_cast<double>(outliers);
}

double cost(const ScoreSet& scores, const EvalLabels& labels, double tau,
            const CostMatrix& cm) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  if (scores.size() == 0) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (predicted(scores.confidence[i], tau)) {
      if (labels.is_outlier[i]) {
        total += cm.predict_outlier_as_inlier;
      } else if (argmax_inlier(scores.inlier_class_ids, scores.inlier_probs[i]) ==
                 labels.condition_id[i]) {
        total += cm.correct_inlier;
      } else {
        total += cm.wrong_inlier;
      }
    } else {
      total += labels.is_outlier[i] ? cm.abstain_outlier : cm.abstain_inlier;
    }
  }
  return total / static_cast<double>(scores.size());
}

std::string MetricReport::to_json() const {
  ordered_json j;
  j["auroc"] = auroc;
  j["fpr_at_95_tpr"] = fpr_at_95_tpr;
  j["aupr_in"] = aupr_in;
  j["inlier_accuracy"] = inlier_accuracy;
  return j.dump(2);
}

void split_scores(const ScoreSet& scores, const EvalLabels& labels,
                  std::vector<double>& inlier_scores,
                  std::vector<double>& outlier_scores) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  inlier_scores.clear();
  outlier_scores.clear();
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels.is_outlier[i]) outlier_scores.push_back(scores.ood[i]);
    else inlier_scores.push_back(scores.ood[i]);
  }
}

MetricReport compute_report(const ScoreSet& scores, const EvalLabels& labels) {
  std::vector<double> in, out;
  split_scores(scores, labels, in, out);
  MetricReport r;
  r.auroc = auroc(in, out);
  r.fpr_at_95_tpr = fpr_at_tpr(in, out, 0.95);
  r.aupr_in = aupr_in(in, out);
  r.inlier_accuracy = inlier_accuracy(scores, labels);
  return r;
}

std::vector<CurvePoint> threshold_curve(const ScoreSet& scores,
                                        const EvalLabels& labels,
                                        const CostMatrix& cm) {
  std::set<double> taus;
  for (int i = 0; i <= 100; ++i) taus.insert(static_cast<double>(i) / 100.0);
  for (double c : scores.confidence) taus.insert(c);
  std::vector<CurvePoint> curve;
  for (double tau : taus) {
    CurvePoint p;
    p.tau = tau;
    p.outlier_recall = outlier_recall(scores, labels, tau);
    p.accuracy = selective_accuracy(scores, labels, tau);
    p.cost = cost(scores, labels, tau, cm);
    curve.push_back(p);
  }
  return curve;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << "tau,outlier_recall,accuracy,cost\n";
  out.precision(17);
  for (const auto& p : curve) {
    out << p.tau << "," << p.outlier_recall << ",";
    if (p.accuracy) out << *p.accuracy;
    else out << "undefined";
    out << "," << p.cost << "\n";
  }
}

std::vector<SubgroupRow> subgroup_report(const ScoreSet& scores,
                                         const EvalLabels& labels,
                                         SubgroupKind kind) {
  if (scores.size() != labels.size()) throw InvalidInput("scores/labels mismatch");
  std::vector<SubgroupRow> rows;
  if (kind == SubgroupKind::risk) {
    std::vector<double> all_inliers;
    for (size_t i = 0; i < scores.size(); ++i)
      if (!labels.is_outlier[i]) all_inliers.push_back(scores.ood[i]);
    for (int r = 0; r < kNumRiskLevels; ++r) {
      SubgroupRow row;
      row.name = to_string(static_cast<RiskLevel>(r)) + "_risk";
      row.num_inliers = static_cast<long>(all_inliers.size());
      std::vector<double> group_outliers;
      for (size_t i = 0; i < scores.size(); ++i)
        if (labels.is_outlier[i] && labels.risk[i] == static_cast<RiskLevel>(r))
          group_outliers.push_back(scores.ood[i]);
      row.num_outliers = static_cast<long>(group_outliers.size());
      if (!all_inliers.empty() && !group_outliers.empty())
        row.auroc = auroc(all_inliers, group_outliers);
      rows.push_back(std::move(row));
    }
  } else {
    for (int t = 0; t < kNumSkinTypes; ++t) {
      const auto skin = static_cast<SkinType>(t);
      if (skin == SkinType::unknown) continue;  // no subgroup for missing labels
      SubgroupRow row;
      row.name = "skin_" + to_string(skin);
      std::vector<double> in, out;
      for (size_t i = 0; i < scores.size(); ++i) {
        if (labels.skin_type[i] != skin) continue;
        if (labels.is_outlier[i]) out.push_back(scores.ood[i]);
        else in.push_back(scores.ood[i]);
      }
      row.num_inliers = static_cast<long>(in.size());
      row.num_outliers = static_cast<long>(out.size());
      if (!in.empty() && !out.empty()) row.auroc = auroc(in, out);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_subgroup_csv(const std::string& path, const std::vector<SubgroupRow>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << "subgroup,num_inliers,num_outliers,auroc\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.name << "," << r.num_inliers << "," << r.num_outliers << ",";
    if (r.auroc) out << *r.auroc;
    else out << "undefined";
    out << "\n";
  }
}

}  // namespace hod
