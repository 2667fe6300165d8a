#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hod/ensemble.hpp"
#include "hod/heads.hpp"
#include "hod/metrics.hpp"
#include "hod/scoring.hpp"
#include "hod/splitter.hpp"
#include "hod/synth.hpp"

// End-to-end experiment runner: generate -> split -> train pool -> score ->
// evaluate -> ensemble -> summary, every stage guarded by an input-hash
// manifest so reruns with unchanged inputs skip the work.

namespace hod {

struct PoolEntry {
  int view_id = 0;
  LossKind loss_kind = LossKind::hod;
  double lambda = 0.1;
  int num_seeds = 1;
};

struct ExperimentConfig {
  SynthConfig synth;
  SplitConfig split;
  std::vector<PoolEntry> pool = {{0, LossKind::hod, 0.1, 3},
                                 {0, LossKind::reject_bucket, 0.1, 3},
                                 {1, LossKind::hod, 0.1, 3},
                                 {1, LossKind::reject_bucket, 0.1, 3}};
  TrainConfig train;
  int ensemble_size = 5;
  std::vector<double> heterogeneity_fractions = {0.25, 0.5, 0.75, 1.0};
  int heterogeneity_seeds = 3;
  std::string out_dir = "experiment";
  std::uint64_t master_seed = 0;

  void validate() const;  // ConfigError on bad view ids or fractions
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
};

// Pipeline stages in execution order.
enum class Stage { generate, split, train, score, evaluate, ensemble, summary };
std::string to_string(Stage s);

struct PipelineResult {
  std::string out_dir;
  std::string summary_path;
  std::vector<std::string> stages_run;  // stages whose inputs were stale
};

// Runs every stage up to and including `stop_after`. Stage failures abort
// with the stage name prepended; artifacts written so far are kept.
PipelineResult run_pipeline(const ExperimentConfig& cfg,
                            Stage stop_after = Stage::summary);

// --- building blocks shared with the CLI and the acceptance harness ---

// Output layout for one loss kind: all inlier classes, plus the train-split
// outlier conditions (hod, fine_only) or the single reject bucket.
ClassLayout layout_for(const ConditionTable& table, const BenchmarkSplit& split,
                       LossKind kind);

// Case-level examples of one split part in one encoded view.
std::vector<TrainExample> make_examples(const Dataset& view_ds,
                                        const ConditionTable& table,
                                        const std::vector<int>& case_ids);

std::vector<ScoredCase> collect_features(const Dataset& view_ds,
                                         const std::vector<int>& case_ids);

EvalLabels labels_for(const Dataset& ds, const std::vector<int>& case_ids);

struct PoolModel {
  std::string name;   // "view{v}_{loss}_s{k}"
  std::string group;  // "view{v}_{loss}"
  int view_id = 0;
  LossKind loss_kind = LossKind::hod;
  int seed_index = 0;
  ClassifierHead head;
};

// Trains the whole pool (data-independent models run in parallel).
std::vector<PoolModel> train_pool(const Dataset& latent, const BenchmarkSplit& split,
                                  const ExperimentConfig& cfg);

struct HeterogeneityRow {
  double fraction = 0.0;
  int num_outlier_classes = 0;
  std::vector<double> per_seed_auroc;
  double mean_auroc = 0.0;
};

// Heterogeneity ablation: nested random subsets of the train-outlier classes
// (seeded shuffle, prefix per fraction), HOD heads on one view, test AUROC
// per training seed.
std::vector<HeterogeneityRow> heterogeneity_ablation(
    const Dataset& latent, const BenchmarkSplit& split, const SynthConfig& synth,
    const TrainConfig& train, const std::vector<double>& fractions, int num_seeds,
    double lambda, int view_id, std::uint64_t seed);

// Tables as CSV plus, for format "svg", accuracy-vs-recall and
// cost-vs-recall polyline charts. Throws IncompleteExperiment when the
// pipeline has not produced its summary yet.
void emit_report(const std::string& experiment_dir, const std::string& format);

struct CompareReport {
  std::string group_a;
  std::string group_b;
  std::vector<double> deltas;  // per seed index, A minus B test AUROC
  int positive = 0;
  int n = 0;
  double p_bound = 1.0;  // one-sided exact sign-test bound
  std::string to_json() const;
};

// Per-seed test-AUROC deltas between one model group of each summary, with an
// exact binomial sign test. Defaults to the first group of each file.
// Throws IncomparableRuns when the benchmark seeds differ.
CompareReport compare(const std::string& summary_path_a,
                      const std::string& summary_path_b,
                      const std::string& group_a = "",
                      const std::string& group_b = "");

}  // namespace hod
