#include "hod/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace hod {

double ood_score_hod(const ClassifierHead& head, const std::vector<double>& feature) {
  if (head.layout.outlier_ids.empty())
    throw WrongScorer("head has no outlier block");
  const auto fwd = forward(head, feature);
  double u = 0.0;
  for (size_t i = head.layout.inlier_ids.size(); i < fwd.probs.size(); ++i)
    u += fwd.probs[i];
  return u;
}

double ood_score_msp(const ClassifierHead& head, const std::vector<double>& feature) {
  const auto fwd = forward(head, feature);
  const size_t in_sz = head.layout.inlier_ids.size();
  double best = 0.0, mass = 0.0;
  for (size_t i = 0; i < in_sz; ++i) {
    best = std::max(best, fwd.probs[i]);
    mass += fwd.probs[i];
  }
  if (head.layout.outlier_ids.empty()) return 1.0 - best;
  return 1.0 - best / mass;  // renormalized over the inlier block
}

double ood_score(const ClassifierHead& head, const std::vector<double>& feature) {
  return head.layout.outlier_ids.empty() ? ood_score_msp(head, feature)
                                         : ood_score_hod(head, feature);
}

int top1_from_probs(const std::vector<int>& inlier_class_ids,
                    const std::vector<double>& inlier_probs, double ood) {
  if (inlier_class_ids.empty()) throw InvalidInput("no inlier classes");
  size_t best = 0;
  for (size_t i = 1; i < inlier_probs.size(); ++i) {
    // strict >: ties stay on the lowest inlier class id
    if (inlier_probs[i] > inlier_probs[best] ||
        (inlier_probs[i] == inlier_probs[best] &&
         inlier_class_ids[i] < inlier_class_ids[best]))
      best = i;
  }
  // exact inlier-vs-OUT ties go to the inlier
  if (ood > inlier_probs[best]) return kOutClassId;
  return inlier_class_ids[best];
}

int top1(const ClassifierHead& head, const std::vector<double>& feature) {
  const auto fwd = forward(head, feature);
  const size_t in_sz = head.layout.inlier_ids.size();
  std::vector<double> inlier_probs(fwd.probs.begin(), fwd.probs.begin() + in_sz);
  const double u = head.layout.outlier_ids.empty()
                       ? 0.0
                       : ood_score_hod(head, feature);
  return top1_from_probs(head.layout.inlier_ids, inlier_probs, u);
}

ScoreSet score_cases(const ClassifierHead& head, const std::vector<ScoredCase>& cases) {
  ScoreSet s;
  s.inlier_class_ids = head.layout.inlier_ids;
  for (const auto& c : cases) {
    const auto fwd = forward(head, c.feature);
    const size_t in_sz = head.layout.inlier_ids.size();
    std::vector<double> inlier_probs(fwd.probs.begin(), fwd.probs.begin() + in_sz);
    const double u = ood_score(head, c.feature);
    s.case_ids.push_back(c.case_id);
    s.ood.push_back(u);
    s.confidence.push_back(1.0 - u);
    const double u_for_top1 = head.layout.outlier_ids.empty() ? 0.0 : u;
    s.top1.push_back(top1_from_probs(s.inlier_class_ids, inlier_probs, u_for_top1));
    s.inlier_probs.push_back(std::move(inlier_probs));
  }
  return s;
}

namespace {

// Lower Cholesky factor; throws NumericalError if not positive definite.
std::vector<double> cholesky_lower(const std::vector<double>& a, int d) {
  std::vector<double> l(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<size_t>(i) * d + j];
      for (int k = 0; k < j; ++k)
        sum -= l[static_cast<size_t>(i) * d + k] * l[static_cast<size_t>(j) * d + k];
      if (i == j) {
        if (sum <= 0.0)
          throw NumericalError("covariance not positive definite after ridge");
        l[static_cast<size_t>(i) * d + i] = std::sqrt(sum);
      } else {
        l[static_cast<size_t>(i) * d + j] = sum / l[static_cast<size_t>(j) * d + j];
      }
    }
  }
  return l;
}

// Solves L y = b in place.
void forward_solve(const std::vector<double>& l, int d, std::vector<double>& b) {
  for (int i = 0; i < d; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= l[static_cast<size_t>(i) * d + k] * b[k];
    b[i] = sum / l[static_cast<size_t>(i) * d + i];
  }
}

}  // namespace

GaussianBank fit_gaussians(const std::vector<std::vector<double>>& features,
                           const std::vector<int>& labels, double ridge) {
  if (features.size() != labels.size() || features.empty())
    throw InvalidInput("features/labels mismatch");
  const int d = static_cast<int>(features.front().size());

  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(features[i].size()) != d)
      throw InvalidInput("inconsistent feature dimensions");
    by_class[labels[i]].push_back(i);
  }
  for (const auto& [cls, idx] : by_class)
    if (idx.size() < 2)
      throw DegenerateClass("class " + std::to_string(cls) +
                            " has fewer than 2 samples");

  GaussianBank bank;
  bank.dim = d;
  std::vector<double> scatter(static_cast<size_t>(d) * d, 0.0);
  for (const auto& [cls, idx] : by_class) {
    std::vector<double> mean(d, 0.0);
    for (size_t i : idx)
      for (int k = 0; k < d; ++k) mean[k] += features[i][k];
    for (int k = 0; k < d; ++k) mean[k] /= static_cast<double>(idx.size());
    for (size_t i : idx) {
      for (int a = 0; a < d; ++a) {
        const double da = features[i][a] - mean[a];
        for (int b = 0; b < d; ++b)
          scatter[static_cast<size_t>(a) * d + b] += da * (features[i][b] - mean[b]);
      }
    }
    bank.class_ids.push_back(cls);
    bank.means.push_back(std::move(mean));
  }
  const double denom =
      static_cast<double>(features.size()) - static_cast<double>(by_class.size());
  bank.covariance.resize(scatter.size());
  for (size_t i = 0; i < scatter.size(); ++i)
    bank.covariance[i] = denom > 0.0 ? scatter[i] / denom : 0.0;
  for (int k = 0; k < d; ++k)
    bank.covariance[static_cast<size_t>(k) * d + k] += ridge;
  bank.cholesky = cholesky_lower(bank.covariance, d);
  return bank;
}

double ood_score_mahalanobis(const GaussianBank& bank,
                             const std::vector<double>& feature) {
  if (static_cast<int>(feature.size()) != bank.dim)
    throw InvalidInput("feature dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> diff(bank.dim);
  for (const auto& mean : bank.means) {
    for (int k = 0; k < bank.dim; ++k) diff[k] = feature[k] - mean[k];
    forward_solve(bank.cholesky, bank.dim, diff);
    double dist2 = 0.0;
    for (double v : diff) dist2 += v * v;
    best = std::min(best, dist2);
  }
  return best;
}

ScoreSet score_cases_mahalanobis(const GaussianBank& bank,
                                 const std::vector<ScoredCase>& cases) {
  ScoreSet s;
  std::vector<double> diff(bank.dim);
  for (const auto& c : cases) {
    double best = std::numeric_limits<double>::infinity();
    int best_cls = kOutClassId;
    for (size_t m = 0; m < bank.means.size(); ++m) {
      for (int k = 0; k < bank.dim; ++k) diff[k] = c.feature[k] - bank.means[m][k];
      forward_solve(bank.cholesky, bank.dim, diff);
      double dist2 = 0.0;
      for (double v : diff) dist2 += v * v;
      if (dist2 < best) {
        best = dist2;
        best_cls = bank.class_ids[m];
      }
    }
    s.case_ids.push_back(c.case_id);
    s.ood.push_back(best);
    s.confidence.push_back(-best);
    s.top1.push_back(best_cls);
    s.inlier_probs.emplace_back();
  }
  return s;
}

void write_scoreset_csv(const std::string& path, const ScoreSet& scores) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << "case_id,ood_score,confidence,top1";
  for (int cid : scores.inlier_class_ids) out << ",p_" << cid;
  out << "\n";
  out.precision(17);
  for (size_t i = 0; i < scores.size(); ++i) {
    out << scores.case_ids[i] << "," << scores.ood[i] << ","
        << scores.confidence[i] << ",";
    if (scores.top1[i] == kOutClassId) out << "OUT";
    else out << scores.top1[i];
    for (double p : scores.inlier_probs[i]) out << "," << p;
    out << "\n";
  }
}

}  // namespace hod
