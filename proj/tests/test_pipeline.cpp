#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hod/pipeline.hpp"

using namespace hod;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.pool = {{0, LossKind::hod, 0.1, 2}, {1, LossKind::reject_bucket, 0.1, 2}};
  cfg.train.steps = 60;
  cfg.train.eval_every = 30;
  cfg.ensemble_size = 3;
  cfg.heterogeneity_fractions = {0.5, 1.0};
  cfg.heterogeneity_seeds = 1;
  cfg.out_dir = out_dir;
  cfg.master_seed = 0;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("experiment config json round trip and validation") {
  auto cfg = small_experiment("x");
  const auto restored = ExperimentConfig::from_json(cfg.to_json());
  CHECK(restored.to_json() == cfg.to_json());

  cfg.pool[0].view_id = 7;  // only 2 views exist
  CHECK_THROWS_AS(ExperimentConfig::from_json(cfg.to_json()), ConfigError);
  cfg = small_experiment("x");
  cfg.heterogeneity_fractions = {0.0, 1.0};
  CHECK_THROWS_AS(ExperimentConfig::from_json(cfg.to_json()), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{nope"), ConfigError);
}

TEST_CASE("layout per loss kind follows the split") {
  ConditionTable table;
  table.n_min = 3;
  table.conditions = {{0, "a", ConditionStatus::inlier, RiskLevel::low, 5},
                      {1, "b", ConditionStatus::inlier, RiskLevel::low, 4},
                      {2, "c", ConditionStatus::outlier, RiskLevel::low, 2},
                      {3, "d", ConditionStatus::outlier, RiskLevel::low, 1},
                      {4, "e", ConditionStatus::outlier, RiskLevel::low, 1}};
  BenchmarkSplit split;
  split.outlier_assignment = {{2, SplitPart::train},
                              {3, SplitPart::val},
                              {4, SplitPart::train}};
  CHECK(layout_for(table, split, LossKind::ce_inlier_only).outlier_ids.empty());
  CHECK(layout_for(table, split, LossKind::oe).outlier_ids.empty());
  CHECK(layout_for(table, split, LossKind::reject_bucket).outlier_ids ==
        std::vector<int>{kOutClassId});
  CHECK(layout_for(table, split, LossKind::hod).outlier_ids ==
        std::vector<int>{2, 4});
  CHECK(layout_for(table, split, LossKind::hod).inlier_ids ==
        std::vector<int>{0, 1});
}

TEST_CASE("pipeline runs, is deterministic, and reruns are no-ops") {
  const std::string dir_a = "pipe_test_a", dir_b = "pipe_test_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  const auto first = run_pipeline(small_experiment(dir_a));
  CHECK(first.stages_run.size() == 7);
  const auto again = run_pipeline(small_experiment(dir_a));
  CHECK(again.stages_run.empty());

  const auto other = run_pipeline(small_experiment(dir_b));
  CHECK(slurp(first.summary_path) == slurp(other.summary_path));

  // changed training config invalidates train and everything downstream,
  // but not the dataset or the split
  auto cfg = small_experiment(dir_a);
  cfg.train.steps = 80;
  const auto retrained = run_pipeline(cfg);
  CHECK(std::find(retrained.stages_run.begin(), retrained.stages_run.end(),
                  "generate") == retrained.stages_run.end());
  CHECK(std::find(retrained.stages_run.begin(), retrained.stages_run.end(),
                  "train") != retrained.stages_run.end());
}

TEST_CASE("emit_report writes tables and honors the format") {
  const std::string dir = "pipe_test_a";  // produced by the previous test
  run_pipeline(small_experiment(dir));
  emit_report(dir, "csv");
  CHECK(fs::exists(dir + "/report/metrics.csv"));
  CHECK(fs::exists(dir + "/report/scatter.csv"));
  CHECK_FALSE(fs::exists(dir + "/report/cost_vs_recall.svg"));
  emit_report(dir, "svg");
  CHECK(fs::exists(dir + "/report/cost_vs_recall.svg"));
  CHECK(fs::exists(dir + "/report/accuracy_vs_recall.svg"));

  const auto metrics = slurp(dir + "/report/metrics.csv");
  CHECK(metrics.find("greedy_diverse,auroc,") != std::string::npos);
  CHECK(metrics.find("mahalanobis,auroc,") != std::string::npos);
  const auto scatter = slurp(dir + "/report/scatter.csv");
  CHECK(scatter.find("case_id,u_best_vanilla,u_greedy") != std::string::npos);

  CHECK_THROWS_AS(emit_report("no_such_dir", "csv"), IncompleteExperiment);
  CHECK_THROWS_AS(emit_report(dir, "pdf"), ConfigError);
}

TEST_CASE("compare: identity, sign test, and seed mismatch") {
  const std::string summary = "pipe_test_a/summary.json";
  const auto self = compare(summary, summary);
  for (double d : self.deltas) CHECK(d == 0.0);
  CHECK(self.positive == 0);

  // hand-written summaries: 5 seeds, A beats B everywhere
  const char* a_text = R"({"benchmark_seed": 11,
    "groups": [{"name": "ga", "per_seed_test_auroc": [0.9,0.91,0.92,0.93,0.94]}]})";
  const char* b_text = R"({"benchmark_seed": 11,
    "groups": [{"name": "gb", "per_seed_test_auroc": [0.8,0.81,0.82,0.83,0.84]}]})";
  std::ofstream("cmp_a.json") << a_text;
  std::ofstream("cmp_b.json") << b_text;
  const auto r = compare("cmp_a.json", "cmp_b.json");
  CHECK(r.n == 5);
  CHECK(r.positive == 5);
  CHECK(r.p_bound == doctest::Approx(1.0 / 32.0).epsilon(1e-15));
  CHECK(r.to_json().find("\"p_bound_fraction\": \"1/32\"") != std::string::npos);

  const char* c_text = R"({"benchmark_seed": 12,
    "groups": [{"name": "gc", "per_seed_test_auroc": [0.5]}]})";
  std::ofstream("cmp_c.json") << c_text;
  CHECK_THROWS_AS(compare("cmp_a.json", "cmp_c.json"), IncomparableRuns);
}

TEST_CASE("heterogeneity ablation rows are nested and shaped") {
  SynthConfig sc;
  sc.seed = mix_seed(0, 1);
  const Dataset ds = generate_longtail_dataset(sc);
  SplitConfig spc;
  spc.seed = mix_seed(0, 2);
  const auto split = build_benchmark(ds, spc);
  TrainConfig tc;
  tc.steps = 40;
  tc.eval_every = 20;
  const auto rows = heterogeneity_ablation(ds, split, sc, tc, {0.25, 0.5, 1.0}, 2,
                                           0.1, 0, 99);
  REQUIRE(rows.size() == 3);
  long total_train_outliers = 0;
  for (const auto& [cid, part] : split.outlier_assignment)
    if (part == SplitPart::train) ++total_train_outliers;
  CHECK(rows[0].num_outlier_classes <= rows[1].num_outlier_classes);
  CHECK(rows[2].num_outlier_classes == total_train_outliers);
  for (const auto& row : rows) {
    CHECK(row.per_seed_auroc.size() == 2);
    CHECK(row.mean_auroc > 0.0);
    CHECK(row.mean_auroc <= 1.0);
  }
}

TEST_CASE("pool of 4 views x 2 losses x 5 seeds trains 40 heads") {
  ExperimentConfig cfg;
  cfg.synth.num_views = 4;
  cfg.synth.seed = mix_seed(5, 1);
  cfg.train.steps = 10;
  cfg.train.eval_every = 10;
  cfg.pool.clear();
  for (int v = 0; v < 4; ++v)
    for (LossKind k : {LossKind::hod, LossKind::reject_bucket})
      cfg.pool.push_back({v, k, 0.1, 5});
  cfg.master_seed = 5;
  const Dataset ds = generate_longtail_dataset(cfg.synth);
  SplitConfig spc;
  spc.seed = mix_seed(5, 2);
  const auto split = build_benchmark(ds, spc);
  const auto models = train_pool(ds, split, cfg);
  CHECK(models.size() == 40);
  std::set<std::string> names;
  for (const auto& m : models) names.insert(m.name);
  CHECK(names.size() == 40);
}
