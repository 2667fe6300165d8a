#include "hod/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace hod {

using nlohmann::ordered_json;

namespace {

void check_aligned(const ScoreSet& a, const ScoreSet& b) {
  if (a.case_ids != b.case_ids)
    throw AlignmentError("score sets cover different case orderings");
}

}  // namespace

ScoreSet average_scores(const std::vector<const ScoreSet*>& members) {
  if (members.empty()) throw InvalidInput("empty ensemble");
  const ScoreSet& first = *members.front();
  for (const ScoreSet* m : members) {
    check_aligned(first, *m);
    if (m->inlier_class_ids != first.inlier_class_ids)
      throw AlignmentError("score sets cover different inlier class sets");
  }
  ScoreSet out;
  out.case_ids = first.case_ids;
  out.inlier_class_ids = first.inlier_class_ids;
  const double inv = 1.0 / static_cast<double>(members.size());
  for (size_t i = 0; i < first.size(); ++i) {
    double u = 0.0;
    std::vector<double> probs(first.inlier_class_ids.size(), 0.0);
    for (const ScoreSet* m : members) {
      u += m->ood[i];
      for (size_t k = 0; k < probs.size(); ++k) probs[k] += m->inlier_probs[i][k];
    }
    u *= inv;
    for (double& p : probs) p *= inv;
    out.ood.push_back(u);
    out.confidence.push_back(1.0 - u);
    out.top1.push_back(top1_from_probs(out.inlier_class_ids, probs, u));
    out.inlier_probs.push_back(std::move(probs));
  }
  return out;
}

double diversity(const ScoreSet& a, const ScoreSet& b) {
  check_aligned(a, b);
  if (a.size() == 0) throw InvalidInput("empty score sets");
  long agree = 0;
  for (size_t i = 0; i < a.size(); ++i)
    if (a.top1[i] == b.top1[i]) ++agree;
  return 1.0 - static_cast<double>(agree) / static_cast<double>(a.size());
}

std::vector<std::vector<double>> diversity_matrix(
    const std::vector<const ScoreSet*>& pool) {
  const size_t n = pool.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      m[i][j] = m[j][i] = diversity(*pool[i], *pool[j]);
  return m;
}

std::vector<WardMerge> ward_dendrogram(const std::vector<std::vector<double>>& matrix) {
  const int n = static_cast<int>(matrix.size());
  if (n < 2) throw InvalidMatrix("need at least 2 points");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(matrix[i].size()) != n)
      throw InvalidMatrix("matrix is not square");
    if (matrix[i][i] != 0.0) throw InvalidMatrix("nonzero diagonal");
    for (int j = 0; j < n; ++j) {
      if (matrix[i][j] < 0.0) throw InvalidMatrix("negative distance");
      if (matrix[i][j] != matrix[j][i]) throw InvalidMatrix("matrix is not symmetric");
    }
  }

  // Lance-Williams on squared distances; active clusters carry sizes.
  std::vector<std::vector<double>> d2(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d2[i][j] = matrix[i][j] * matrix[i][j];
  std::vector<int> label(n), size(n, 1);
  for (int i = 0; i < n; ++i) label[i] = i;
  std::vector<bool> active(n, true);

  std::vector<WardMerge> merges;
  int next_label = n;
  for (int step = 0; step < n - 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (d2[i][j] < best) {
          best = d2[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    WardMerge m;
    m.left = std::min(label[bi], label[bj]);
    m.right = std::max(label[bi], label[bj]);
    m.height = std::sqrt(best);
    m.size = size[bi] + size[bj];
    merges.push_back(m);

    // merged cluster replaces slot bi
    const double ni = size[bi], nj = size[bj];
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double nk = size[k];
      d2[bi][k] = d2[k][bi] =
          ((ni + nk) * d2[bi][k] + (nj + nk) * d2[bj][k] - nk * d2[bi][bj]) /
          (ni + nj + nk);
    }
    size[bi] += size[bj];
    label[bi] = next_label++;
    active[bj] = false;
  }
  return merges;
}

void write_dendrogram_json(const std::string& path,
                           const std::vector<WardMerge>& merges) {
  ordered_json j = ordered_json::array();
  for (const auto& m : merges)
    j.push_back({{"left", m.left},
                 {"right", m.right},
                 {"height", m.height},
                 {"size", m.size}});
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

void write_matrix_csv(const std::string& path,
                      const std::vector<std::vector<double>>& matrix) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out.precision(17);
  for (const auto& row : matrix) {
    for (size_t j = 0; j < row.size(); ++j) {
      if (j) out << ",";
      out << row[j];
    }
    out << "\n";
  }
}

double ood_criterion(const ScoreSet& scores, const EvalLabels& labels) {
  std::vector<double> in, out;
  split_scores(scores, labels, in, out);
  return (auroc(in, out) + (1.0 - fpr_at_tpr(in, out, 0.95)) + aupr_in(in, out)) / 3.0;
}

EnsembleSelection greedy_select(const std::vector<const ScoreSet*>& val_pool,
                                const EvalLabels& val_labels, int size) {
  if (val_pool.empty()) throw InvalidInput("empty model pool");
  if (size < 1) throw InvalidInput("ensemble size must be >= 1");
  EnsembleSelection sel;
  std::vector<const ScoreSet*> current;
  for (int step = 0; step < size; ++step) {
    double best = -std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (int cand = 0; cand < static_cast<int>(val_pool.size()); ++cand) {
      current.push_back(val_pool[cand]);
      const double crit = ood_criterion(average_scores(current), val_labels);
      current.pop_back();
      if (crit > best) {  // strict >: ties stay on the lowest index
        best = crit;
        best_idx = cand;
      }
    }
    current.push_back(val_pool[best_idx]);
    sel.member_indices.push_back(best_idx);
    sel.per_step_criterion.push_back(best);
  }
  return sel;
}

void write_selection_json(const std::string& path, const EnsembleSelection& sel) {
  ordered_json j;
  j["size"] = sel.member_indices.size();
  j["member_ids"] = sel.member_indices;
  j["per_step_criterion"] = sel.per_step_criterion;
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace hod
