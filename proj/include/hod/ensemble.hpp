#pragma once

#include <string>
#include <vector>

#include "hod/metrics.hpp"
#include "hod/scoring.hpp"

// Probability-averaging ensembles, pairwise diversity, Ward dendrograms, and
// greedy with-replacement ensemble selection on a validation criterion.

namespace hod {

// Mean OOD score and mean inlier probabilities; confidence and top-1 are
// recomputed from the averages. Members must be scored on identical case
// orderings (AlignmentError otherwise).
ScoreSet average_scores(const std::vector<const ScoreSet*>& members);

// D = 1 - mean top-1 agreement over the shared case set.
double diversity(const ScoreSet& a, const ScoreSet& b);

std::vector<std::vector<double>> diversity_matrix(
    const std::vector<const ScoreSet*>& pool);

struct WardMerge {
  int left = 0;   // cluster index; originals are 0..n-1, merges are n, n+1, ...
  int right = 0;
  double height = 0.0;
  int size = 0;   // members of the merged cluster
};

// Agglomerative merges under Ward linkage via the Lance-Williams update on
// squared distances; returns n-1 merges. Throws InvalidMatrix for a
// non-symmetric, negative, or nonzero-diagonal input.
std::vector<WardMerge> ward_dendrogram(const std::vector<std::vector<double>>& matrix);

void write_dendrogram_json(const std::string& path,
                           const std::vector<WardMerge>& merges);
void write_matrix_csv(const std::string& path,
                      const std::vector<std::vector<double>>& matrix);

// Mean of AUROC, 1 - FPR@95%TPR, AUPR-in on one scored split.
double ood_criterion(const ScoreSet& scores, const EvalLabels& labels);

struct EnsembleSelection {
  std::vector<int> member_indices;       // selection order, repetition allowed
  std::vector<double> per_step_criterion;
};

// Grows an ensemble of `size` members with replacement, appending at each
// step the candidate maximizing the criterion on validation; ties go to the
// lowest model index. Step 1 therefore picks the pool's best single model.
EnsembleSelection greedy_select(const std::vector<const ScoreSet*>& val_pool,
                                const EvalLabels& val_labels, int size);

void write_selection_json(const std::string& path, const EnsembleSelection& sel);

}  // namespace hod
