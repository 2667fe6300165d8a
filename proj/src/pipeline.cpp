#include "hod/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace hod {

namespace {

std::string fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

ordered_json synth_to_json(const SynthConfig& c) {
  ordered_json j;
  j["num_inlier_classes"] = c.num_inlier_classes;
  j["num_outlier_classes"] = c.num_outlier_classes;
  j["zipf_exponent"] = c.zipf_exponent;
  j["inlier_min_count"] = c.inlier_min_count;
  j["latent_dim"] = c.latent_dim;
  j["feature_dim"] = c.feature_dim;
  j["class_separation"] = c.class_separation;
  j["instance_noise"] = c.instance_noise;
  j["num_views"] = c.num_views;
  j["seed"] = c.seed;
  return j;
}

ordered_json split_to_json(const SplitConfig& c) {
  ordered_json j;
  j["inlier_ratios"] = c.inlier_ratios;
  j["outlier_target_fractions"] = c.outlier_target_fractions;
  j["w_samples"] = c.w_samples;
  j["w_classes"] = c.w_classes;
  j["w_risk"] = c.w_risk;
  j["w_skin"] = c.w_skin;
  j["tolerance"] = c.tolerance;
  j["seed"] = c.seed;
  return j;
}

ordered_json train_to_json(const TrainConfig& c) {
  ordered_json j;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["initial_lr"] = c.initial_lr;
  j["decay_factor"] = c.decay_factor;
  j["momentum"] = c.momentum;
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  return j;
}

template <typename T, typename J>
void maybe(const J& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).template get<T>();
}

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteExperiment("missing artifact: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Manifest guard: a stage is fresh when its recorded input hash matches and
// every listed output still exists.
struct StageGuard {
  std::string dir;
  std::string name;
  std::string input_hash;
  std::vector<std::string> outputs;

  std::string manifest_path() const { return dir + "/manifests/" + name + ".json"; }

  bool fresh() const {
    std::ifstream in(manifest_path());
    if (!in) return false;
    ordered_json j;
    try {
      in >> j;
    } catch (...) {
      return false;
    }
    if (j.value("input_hash", std::string()) != input_hash) return false;
    for (const auto& o : j.value("outputs", std::vector<std::string>()))
      if (!fs::exists(o)) return false;
    return true;
  }

  void commit() const {
    ordered_json j;
    j["stage"] = name;
    j["input_hash"] = input_hash;
    j["outputs"] = outputs;
    write_text(manifest_path(), j.dump(2) + "\n");
  }
};

ordered_json report_json(const MetricReport& r) {
  ordered_json j;
  j["auroc"] = r.auroc;
  j["fpr_at_95_tpr"] = r.fpr_at_95_tpr;
  j["aupr_in"] = r.aupr_in;
  j["inlier_accuracy"] = r.inlier_accuracy;
  return j;
}

struct RankingMetrics {
  double auroc = 0.0;
  double fpr = 0.0;
  double aupr = 0.0;
};

RankingMetrics ranking_metrics(const ScoreSet& scores, const EvalLabels& labels) {
  std::vector<double> in, out;
  split_scores(scores, labels, in, out);
  return {auroc(in, out), fpr_at_tpr(in, out), aupr_in(in, out)};
}

std::string polyline_svg(const std::string& title, const std::vector<double>& xs,
                         const std::vector<double>& ys) {
  const double w = 480, h = 320, pad = 40;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  for (double y : ys) ymax = std::max(ymax, y);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\">\n";
  os << "<text x=\"" << pad << "\" y=\"20\">" << title << "</text>\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << w - 2 * pad
     << "\" height=\"" << h - 2 * pad << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    const double px = pad + (xs[i] - xmin) / (xmax - xmin) * (w - 2 * pad);
    const double py = h - pad - (ys[i] - ymin) / (ymax - ymin) * (h - 2 * pad);
    os << px << "," << py << " ";
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::generate: return "generate";
    case Stage::split: return "split";
    case Stage::train: return "train";
    case Stage::score: return "score";
    case Stage::evaluate: return "evaluate";
    case Stage::ensemble: return "ensemble";
    case Stage::summary: return "summary";
  }
  throw InvalidInput("bad stage");
}

void ExperimentConfig::validate() const {
  synth.validate();
  split.validate();
  train.validate();
  if (pool.empty()) throw ConfigError("empty model pool");
  for (const auto& e : pool) {
    if (e.view_id < 0 || e.view_id >= synth.num_views)
      throw ConfigError("pool view_id out of range");
    if (e.num_seeds < 1) throw ConfigError("pool num_seeds must be >= 1");
    if (e.lambda < 0.0) throw ConfigError("negative lambda");
  }
  if (ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
  if (heterogeneity_seeds < 1) throw ConfigError("heterogeneity_seeds must be >= 1");
  for (double f : heterogeneity_fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("heterogeneity fractions must lie in (0, 1]");
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["synth"] = synth_to_json(synth);
  j["split"] = split_to_json(split);
  j["pool"] = ordered_json::array();
  for (const auto& e : pool) {
    ordered_json je;
    je["view_id"] = e.view_id;
    je["loss_kind"] = hod::to_string(e.loss_kind);
    je["lambda"] = e.lambda;
    je["num_seeds"] = e.num_seeds;
    j["pool"].push_back(je);
  }
  j["train"] = train_to_json(train);
  j["ensemble_size"] = ensemble_size;
  j["heterogeneity_fractions"] = heterogeneity_fractions;
  j["heterogeneity_seeds"] = heterogeneity_seeds;
  j["out_dir"] = out_dir;
  j["master_seed"] = master_seed;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    maybe(s, "num_inlier_classes", cfg.synth.num_inlier_classes);
    maybe(s, "num_outlier_classes", cfg.synth.num_outlier_classes);
    maybe(s, "zipf_exponent", cfg.synth.zipf_exponent);
    maybe(s, "inlier_min_count", cfg.synth.inlier_min_count);
    maybe(s, "latent_dim", cfg.synth.latent_dim);
    maybe(s, "feature_dim", cfg.synth.feature_dim);
    maybe(s, "class_separation", cfg.synth.class_separation);
    maybe(s, "instance_noise", cfg.synth.instance_noise);
    maybe(s, "num_views", cfg.synth.num_views);
    maybe(s, "seed", cfg.synth.seed);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    maybe(s, "inlier_ratios", cfg.split.inlier_ratios);
    maybe(s, "outlier_target_fractions", cfg.split.outlier_target_fractions);
    maybe(s, "w_samples", cfg.split.w_samples);
    maybe(s, "w_classes", cfg.split.w_classes);
    maybe(s, "w_risk", cfg.split.w_risk);
    maybe(s, "w_skin", cfg.split.w_skin);
    maybe(s, "tolerance", cfg.split.tolerance);
    maybe(s, "seed", cfg.split.seed);
  }
  if (j.contains("pool")) {
    cfg.pool.clear();
    for (const auto& je : j["pool"]) {
      PoolEntry e;
      maybe(je, "view_id", e.view_id);
      if (je.contains("loss_kind"))
        e.loss_kind = loss_kind_from_string(je["loss_kind"].get<std::string>());
      maybe(je, "lambda", e.lambda);
      maybe(je, "num_seeds", e.num_seeds);
      cfg.pool.push_back(e);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    maybe(t, "steps", cfg.train.steps);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "initial_lr", cfg.train.initial_lr);
    maybe(t, "decay_factor", cfg.train.decay_factor);
    maybe(t, "momentum", cfg.train.momentum);
    maybe(t, "eval_every", cfg.train.eval_every);
    maybe(t, "seed", cfg.train.seed);
  }
  maybe(j, "ensemble_size", cfg.ensemble_size);
  maybe(j, "heterogeneity_fractions", cfg.heterogeneity_fractions);
  maybe(j, "heterogeneity_seeds", cfg.heterogeneity_seeds);
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "master_seed", cfg.master_seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  return from_json(read_text(path));
}

ClassLayout layout_for(const ConditionTable& table, const BenchmarkSplit& split,
                       LossKind kind) {
  ClassLayout layout;
  layout.inlier_ids = table.inlier_ids();
  switch (kind) {
    case LossKind::ce_inlier_only:
    case LossKind::oe:
      break;
    case LossKind::reject_bucket:
      layout.outlier_ids = {kOutClassId};
      break;
    case LossKind::fine_only:
    case LossKind::hod:
      for (const auto& [cid, part] : split.outlier_assignment)
        if (part == SplitPart::train) layout.outlier_ids.push_back(cid);
      std::sort(layout.outlier_ids.begin(), layout.outlier_ids.end());
      if (layout.outlier_ids.empty())
        throw InsufficientOutliers("no train-split outlier conditions");
      break;
  }
  return layout;
}

std::vector<TrainExample> make_examples(const Dataset& view_ds,
                                        const ConditionTable& table,
                                        const std::vector<int>& case_ids) {
  std::vector<TrainExample> out;
  out.reserve(case_ids.size());
  for (int id : case_ids) {
    const auto& c = view_ds.case_by_id(id);
    TrainExample ex;
    ex.feature = case_feature(c);
    ex.condition_id = c.condition_id;
    ex.is_outlier = table.by_id(c.condition_id).status == ConditionStatus::outlier;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<ScoredCase> collect_features(const Dataset& view_ds,
                                         const std::vector<int>& case_ids) {
  std::vector<ScoredCase> out;
  out.reserve(case_ids.size());
  for (int id : case_ids)
    out.push_back({id, case_feature(view_ds.case_by_id(id))});
  return out;
}

EvalLabels labels_for(const Dataset& ds, const std::vector<int>& case_ids) {
  EvalLabels labels;
  for (int id : case_ids) {
    const auto& c = ds.case_by_id(id);
    const auto& cond = ds.table.by_id(c.condition_id);
    labels.condition_id.push_back(c.condition_id);
    labels.is_outlier.push_back(cond.status == ConditionStatus::outlier);
    labels.risk.push_back(cond.risk);
    labels.skin_type.push_back(c.skin_type);
  }
  return labels;
}

std::vector<PoolModel> train_pool(const Dataset& latent, const BenchmarkSplit& split,
                                  const ExperimentConfig& cfg) {
  // one encoded dataset and example set per distinct view
  std::vector<int> views;
  for (const auto& e : cfg.pool)
    if (std::find(views.begin(), views.end(), e.view_id) == views.end())
      views.push_back(e.view_id);
  std::vector<std::vector<TrainExample>> train_ex(cfg.synth.num_views);
  std::vector<std::vector<TrainExample>> val_ex(cfg.synth.num_views);
  for (int v : views) {
    const Dataset view_ds = encode_view(latent, make_view_encoder(cfg.synth, v));
    train_ex[v] = make_examples(view_ds, latent.table, split.train);
    val_ex[v] = make_examples(view_ds, latent.table, split.val);
  }

  struct Job {
    PoolModel meta;
    ClassifierHead init;
    TrainConfig tcfg;
  };
  std::vector<Job> jobs;
  int index = 0;
  for (const auto& e : cfg.pool) {
    const ClassLayout layout = layout_for(latent.table, split, e.loss_kind);
    for (int k = 0; k < e.num_seeds; ++k, ++index) {
      const std::string group =
          "view" + std::to_string(e.view_id) + "_" + hod::to_string(e.loss_kind);
      Job job;
      job.meta = {group + "_s" + std::to_string(k), group, e.view_id,
                  e.loss_kind, k, {}};
      job.init = init_head(layout, cfg.synth.feature_dim, e.loss_kind, e.lambda,
                           e.view_id, mix_seed(cfg.master_seed, 0x1217, index));
      job.tcfg = cfg.train;
      job.tcfg.seed = mix_seed(cfg.master_seed, 0x7a11, index);
      jobs.push_back(std::move(job));
    }
  }

  std::vector<std::future<ClassifierHead>> futures;
  futures.reserve(jobs.size());
  for (const auto& job : jobs)
    futures.push_back(std::async(std::launch::async, [&job, &train_ex, &val_ex] {
      const auto trained = train_head(job.init, train_ex[job.meta.view_id],
                                      val_ex[job.meta.view_id], job.tcfg);
      return trained.head;
    }));
  std::vector<PoolModel> models;
  for (size_t i = 0; i < jobs.size(); ++i) {
    PoolModel m = jobs[i].meta;
    m.head = futures[i].get();
    models.push_back(std::move(m));
  }
  return models;
}

std::vector<HeterogeneityRow> heterogeneity_ablation(
    const Dataset& latent, const BenchmarkSplit& split, const SynthConfig& synth,
    const TrainConfig& train, const std::vector<double>& fractions, int num_seeds,
    double lambda, int view_id, std::uint64_t seed) {
  std::vector<int> train_outliers;
  for (const auto& [cid, part] : split.outlier_assignment)
    if (part == SplitPart::train) train_outliers.push_back(cid);
  if (train_outliers.empty())
    throw InsufficientOutliers("no train-split outlier conditions");
  std::mt19937_64 rng(mix_seed(seed, 0xab1e));
  std::shuffle(train_outliers.begin(), train_outliers.end(), rng);

  const Dataset view_ds = encode_view(latent, make_view_encoder(synth, view_id));
  const auto train_examples = make_examples(view_ds, latent.table, split.train);
  const auto val_examples = make_examples(view_ds, latent.table, split.val);
  const auto test_features = collect_features(view_ds, split.test);
  const auto test_labels = labels_for(latent, split.test);

  std::vector<HeterogeneityRow> rows;
  for (const double f : fractions) {
    const int m = std::max(
        1, static_cast<int>(std::ceil(f * static_cast<double>(train_outliers.size()))));
    ClassLayout layout;
    layout.inlier_ids = latent.table.inlier_ids();
    layout.outlier_ids.assign(train_outliers.begin(), train_outliers.begin() + m);
    std::sort(layout.outlier_ids.begin(), layout.outlier_ids.end());

    HeterogeneityRow row;
    row.fraction = f;
    row.num_outlier_classes = m;
    for (int k = 0; k < num_seeds; ++k) {
      auto head = init_head(layout, synth.feature_dim, LossKind::hod, lambda,
                            view_id, mix_seed(seed, 0x1217, k));
      TrainConfig tcfg = train;
      tcfg.seed = mix_seed(seed, 0x7a11, k);
      const auto trained = train_head(head, train_examples, val_examples, tcfg);
      const auto scores = score_cases(trained.head, test_features);
      row.per_seed_auroc.push_back(ranking_metrics(scores, test_labels).auroc);
    }
    row.mean_auroc =
        std::accumulate(row.per_seed_auroc.begin(), row.per_seed_auroc.end(), 0.0) /
        row.per_seed_auroc.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct ModelRecord {
  std::string name;
  std::string group;
  int view_id = 0;
  std::string loss;
  int seed_index = 0;
  double val_auroc = 0.0;
  MetricReport test;
};

ordered_json model_record_json(const ModelRecord& m) {
  ordered_json j;
  j["name"] = m.name;
  j["group"] = m.group;
  j["view_id"] = m.view_id;
  j["loss"] = m.loss;
  j["seed_index"] = m.seed_index;
  j["val_auroc"] = m.val_auroc;
  j["test"] = report_json(m.test);
  return j;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, Stage stop_after) {
  cfg.validate();
  const std::string dir = cfg.out_dir;
  fs::create_directories(dir);
  PipelineResult result;
  result.out_dir = dir;
  result.summary_path = dir + "/summary.json";

  const auto after = [&](Stage s) {
    return static_cast<int>(stop_after) >= static_cast<int>(s);
  };
  const auto run_stage = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw Error("stage " + name + ": " + e.what());
    }
  };

  // master seed overrides the nested generator seeds
  SynthConfig synth_cfg = cfg.synth;
  synth_cfg.seed = mix_seed(cfg.master_seed, 1);
  SplitConfig split_cfg = cfg.split;
  split_cfg.seed = mix_seed(cfg.master_seed, 2);

  // generate
  Dataset latent;
  const std::string h_gen = fnv1a("generate/" + synth_to_json(synth_cfg).dump());
  run_stage("generate", [&] {
    StageGuard g{dir, "generate", h_gen,
                 {dir + "/dataset/cases.jsonl", dir + "/dataset/conditions.json",
                  dir + "/dataset/meta.json"}};
    if (g.fresh()) {
      latent = read_dataset(dir + "/dataset");
    } else {
      latent = generate_longtail_dataset(synth_cfg);
      fs::create_directories(dir + "/dataset");
      write_dataset(dir + "/dataset", latent);
      g.commit();
      result.stages_run.push_back("generate");
    }
  });
  if (!after(Stage::split)) return result;

  // split
  BenchmarkSplit split;
  const std::string h_split =
      fnv1a("split/" + h_gen + split_to_json(split_cfg).dump());
  run_stage("split", [&] {
    StageGuard g{dir, "split", h_split,
                 {dir + "/split.json", dir + "/split_report.json"}};
    if (g.fresh()) {
      split = read_split(dir + "/split.json");
    } else {
      split = build_benchmark(latent, split_cfg);
      write_split(dir + "/split.json", split, split_cfg);
      write_text(dir + "/split_report.json",
                 validate_split(latent, split, split_cfg).to_json() + "\n");
      g.commit();
      result.stages_run.push_back("split");
    }
  });
  if (!after(Stage::train)) return result;

  // train
  std::vector<PoolModel> models;
  ordered_json pool_json = ordered_json::parse(cfg.to_json())["pool"];
  const std::string h_train = fnv1a("train/" + h_split + pool_json.dump() +
                                    train_to_json(cfg.train).dump() +
                                    std::to_string(cfg.master_seed));
  run_stage("train", [&] {
    std::vector<std::string> names;
    for (const auto& e : cfg.pool)
      for (int k = 0; k < e.num_seeds; ++k)
        names.push_back("view" + std::to_string(e.view_id) + "_" +
                        hod::to_string(e.loss_kind) + "_s" + std::to_string(k));
    StageGuard g{dir, "train", h_train, {}};
    for (const auto& n : names) g.outputs.push_back(dir + "/heads/" + n + ".json");
    if (g.fresh()) {
      size_t i = 0;
      for (const auto& e : cfg.pool)
        for (int k = 0; k < e.num_seeds; ++k, ++i) {
          PoolModel m;
          m.name = names[i];
          m.group = "view" + std::to_string(e.view_id) + "_" +
                    hod::to_string(e.loss_kind);
          m.view_id = e.view_id;
          m.loss_kind = e.loss_kind;
          m.seed_index = k;
          m.head = read_head(dir + "/heads/" + names[i] + ".json");
          models.push_back(std::move(m));
        }
    } else {
      models = train_pool(latent, split, cfg);
      fs::create_directories(dir + "/heads");
      for (const auto& m : models)
        write_head(dir + "/heads/" + m.name + ".json", m.head);
      g.commit();
      result.stages_run.push_back("train");
    }
  });
  if (!after(Stage::score)) return result;

  // score: per-model val/test score sets, plus the Mahalanobis baseline.
  // Cheap enough to recompute in memory; files are only rewritten when stale.
  std::vector<ScoreSet> val_scores(models.size()), test_scores(models.size());
  ScoreSet maha_scores;
  const auto val_labels = labels_for(latent, split.val);
  const auto test_labels = labels_for(latent, split.test);
  const std::string h_score = fnv1a("score/" + h_train);
  run_stage("score", [&] {
    std::vector<std::vector<ScoredCase>> val_feats(cfg.synth.num_views);
    std::vector<std::vector<ScoredCase>> test_feats(cfg.synth.num_views);
    for (const auto& m : models)
      if (val_feats[m.view_id].empty()) {
        const Dataset view_ds =
            encode_view(latent, make_view_encoder(cfg.synth, m.view_id));
        val_feats[m.view_id] = collect_features(view_ds, split.val);
        test_feats[m.view_id] = collect_features(view_ds, split.test);
      }
    for (size_t i = 0; i < models.size(); ++i) {
      val_scores[i] = score_cases(models[i].head, val_feats[models[i].view_id]);
      test_scores[i] = score_cases(models[i].head, test_feats[models[i].view_id]);
    }
    {
      const int v = models.front().view_id;
      const Dataset view_ds = encode_view(latent, make_view_encoder(cfg.synth, v));
      std::vector<std::vector<double>> feats;
      std::vector<int> labels;
      for (int id : split.train) {
        const auto& c = view_ds.case_by_id(id);
        if (latent.table.by_id(c.condition_id).status == ConditionStatus::inlier) {
          feats.push_back(case_feature(c));
          labels.push_back(c.condition_id);
        }
      }
      const auto bank = fit_gaussians(feats, labels, 1e-3);
      maha_scores = score_cases_mahalanobis(bank, test_feats[v]);
    }
    StageGuard g{dir, "score", h_score, {}};
    for (const auto& m : models) {
      g.outputs.push_back(dir + "/scores/" + m.name + "_val.csv");
      g.outputs.push_back(dir + "/scores/" + m.name + "_test.csv");
    }
    g.outputs.push_back(dir + "/scores/mahalanobis_test.csv");
    if (!g.fresh()) {
      fs::create_directories(dir + "/scores");
      for (size_t i = 0; i < models.size(); ++i) {
        write_scoreset_csv(dir + "/scores/" + models[i].name + "_val.csv",
                           val_scores[i]);
        write_scoreset_csv(dir + "/scores/" + models[i].name + "_test.csv",
                           test_scores[i]);
      }
      write_scoreset_csv(dir + "/scores/mahalanobis_test.csv", maha_scores);
      g.commit();
      result.stages_run.push_back("score");
    }
  });
  if (!after(Stage::evaluate)) return result;

  // evaluate: per-model test metrics and the heterogeneity ablation
  std::vector<ModelRecord> records;
  std::vector<HeterogeneityRow> het_rows;
  const std::string h_eval =
      fnv1a("evaluate/" + h_score +
            ordered_json(cfg.heterogeneity_fractions).dump() +
            std::to_string(cfg.heterogeneity_seeds));
  run_stage("evaluate", [&] {
    StageGuard g{dir, "evaluate", h_eval,
                 {dir + "/model_metrics.json", dir + "/heterogeneity.json",
                  dir + "/heterogeneity.csv"}};
    if (g.fresh()) {
      for (const auto& jm :
           ordered_json::parse(read_text(dir + "/model_metrics.json"))) {
        ModelRecord r;
        r.name = jm["name"];
        r.group = jm["group"];
        r.view_id = jm["view_id"];
        r.loss = jm["loss"];
        r.seed_index = jm["seed_index"];
        r.val_auroc = jm["val_auroc"];
        r.test.auroc = jm["test"]["auroc"];
        r.test.fpr_at_95_tpr = jm["test"]["fpr_at_95_tpr"];
        r.test.aupr_in = jm["test"]["aupr_in"];
        r.test.inlier_accuracy = jm["test"]["inlier_accuracy"];
        records.push_back(std::move(r));
      }
      for (const auto& jr :
           ordered_json::parse(read_text(dir + "/heterogeneity.json"))) {
        HeterogeneityRow row;
        row.fraction = jr["fraction"];
        row.num_outlier_classes = jr["num_outlier_classes"];
        row.per_seed_auroc = jr["per_seed_auroc"].get<std::vector<double>>();
        row.mean_auroc = jr["mean_auroc"];
        het_rows.push_back(std::move(row));
      }
    } else {
      ordered_json jmodels = ordered_json::array();
      for (size_t i = 0; i < models.size(); ++i) {
        ModelRecord r;
        r.name = models[i].name;
        r.group = models[i].group;
        r.view_id = models[i].view_id;
        r.loss = hod::to_string(models[i].loss_kind);
        r.seed_index = models[i].seed_index;
        r.val_auroc = models[i].head.val_auroc.value_or(0.0);
        r.test = compute_report(test_scores[i], test_labels);
        jmodels.push_back(model_record_json(r));
        records.push_back(std::move(r));
      }
      write_text(dir + "/model_metrics.json", jmodels.dump(2) + "\n");

      double het_lambda = 0.1;
      for (const auto& e : cfg.pool)
        if (e.loss_kind == LossKind::hod) {
          het_lambda = e.lambda;
          break;
        }
      het_rows = heterogeneity_ablation(
          latent, split, synth_cfg, cfg.train, cfg.heterogeneity_fractions,
          cfg.heterogeneity_seeds, het_lambda, models.front().view_id,
          mix_seed(cfg.master_seed, 3));
      ordered_json jh = ordered_json::array();
      std::ostringstream csv;
      csv << "fraction,num_outlier_classes,mean_auroc\n";
      for (const auto& row : het_rows) {
        ordered_json jr;
        jr["fraction"] = row.fraction;
        jr["num_outlier_classes"] = row.num_outlier_classes;
        jr["per_seed_auroc"] = row.per_seed_auroc;
        jr["mean_auroc"] = row.mean_auroc;
        jh.push_back(jr);
        csv << row.fraction << "," << row.num_outlier_classes << ","
            << row.mean_auroc << "\n";
      }
      write_text(dir + "/heterogeneity.json", jh.dump(2) + "\n");
      write_text(dir + "/heterogeneity.csv", csv.str());
      g.commit();
      result.stages_run.push_back("evaluate");
    }
  });
  if (!after(Stage::ensemble)) return result;

  // ensemble: vanilla per group, greedy diverse over the pool, diversity
  // artifacts, subgroup tables, threshold curves
  ordered_json jens;
  const std::string h_ens =
      fnv1a("ensemble/" + h_score + std::to_string(cfg.ensemble_size));
  run_stage("ensemble", [&] {
    StageGuard g{dir, "ensemble", h_ens,
                 {dir + "/ensembles.json", dir + "/diversity.csv",
                  dir + "/dendrogram.json", dir + "/selection.json",
                  dir + "/subgroup_risk.csv", dir + "/subgroup_skin.csv",
                  dir + "/curve_greedy.csv", dir + "/curve_best_vanilla.csv",
                  dir + "/scatter.csv"}};
    if (g.fresh()) {
      jens = ordered_json::parse(read_text(dir + "/ensembles.json"));
      return;
    }
    std::vector<std::string> groups;
    for (const auto& m : models)
      if (std::find(groups.begin(), groups.end(), m.group) == groups.end())
        groups.push_back(m.group);

    jens["vanilla"] = ordered_json::array();
    int best_vanilla = -1;
    double best_vanilla_crit = -1.0;
    std::vector<ScoreSet> vanilla_test(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
      std::vector<const ScoreSet*> val_members, test_members;
      std::vector<std::string> names;
      for (size_t i = 0; i < models.size(); ++i)
        if (models[i].group == groups[gi]) {
          val_members.push_back(&val_scores[i]);
          test_members.push_back(&test_scores[i]);
          names.push_back(models[i].name);
        }
      const ScoreSet avg_val = average_scores(val_members);
      vanilla_test[gi] = average_scores(test_members);
      const double crit = ood_criterion(avg_val, val_labels);
      ordered_json jv;
      jv["name"] = "vanilla_" + groups[gi];
      jv["members"] = names;
      jv["val_criterion"] = crit;
      jv["test"] = report_json(compute_report(vanilla_test[gi], test_labels));
      jens["vanilla"].push_back(jv);
      if (crit > best_vanilla_crit) {
        best_vanilla_crit = crit;
        best_vanilla = static_cast<int>(gi);
      }
    }

    std::vector<const ScoreSet*> val_pool, test_pool;
    for (size_t i = 0; i < models.size(); ++i) {
      val_pool.push_back(&val_scores[i]);
      test_pool.push_back(&test_scores[i]);
    }
    const auto selection = greedy_select(val_pool, val_labels, cfg.ensemble_size);
    std::vector<const ScoreSet*> greedy_members;
    std::vector<std::string> greedy_names;
    for (int idx : selection.member_indices) {
      greedy_members.push_back(test_pool[idx]);
      greedy_names.push_back(models[idx].name);
    }
    const ScoreSet greedy_test = average_scores(greedy_members);
    ordered_json jg;
    jg["name"] = "greedy_diverse";
    jg["members"] = greedy_names;
    jg["member_indices"] = selection.member_indices;
    jg["val_criterion"] = selection.per_step_criterion.back();
    jg["test"] = report_json(compute_report(greedy_test, test_labels));
    jens["greedy"] = jg;

    const auto matrix = diversity_matrix(val_pool);
    write_matrix_csv(dir + "/diversity.csv", matrix);
    write_dendrogram_json(dir + "/dendrogram.json", ward_dendrogram(matrix));
    write_selection_json(dir + "/selection.json", selection);
    write_subgroup_csv(dir + "/subgroup_risk.csv",
                       subgroup_report(greedy_test, test_labels, SubgroupKind::risk));
    write_subgroup_csv(
        dir + "/subgroup_skin.csv",
        subgroup_report(greedy_test, test_labels, SubgroupKind::skin_type));
    const CostMatrix cm;
    write_curve_csv(dir + "/curve_greedy.csv",
                    threshold_curve(greedy_test, test_labels, cm));
    write_curve_csv(dir + "/curve_best_vanilla.csv",
                    threshold_curve(vanilla_test[best_vanilla], test_labels, cm));
    {
      // baseline U vs candidate U per test case
      std::ostringstream os;
      os << "case_id,u_best_vanilla,u_greedy,is_outlier\n";
      const auto& base = vanilla_test[best_vanilla];
      for (size_t i = 0; i < greedy_test.size(); ++i)
        os << greedy_test.case_ids[i] << "," << base.ood[i] << ","
           << greedy_test.ood[i] << "," << (test_labels.is_outlier[i] ? 1 : 0)
           << "\n";
      write_text(dir + "/scatter.csv", os.str());
    }
    write_text(dir + "/ensembles.json", jens.dump(2) + "\n");
    g.commit();
    result.stages_run.push_back("ensemble");
  });
  if (!after(Stage::summary)) return result;

  // summary
  const std::string h_sum =
      fnv1a("summary/" + h_eval + h_ens + fnv1a(cfg.to_json()));
  run_stage("summary", [&] {
    StageGuard g{dir, "summary", h_sum, {dir + "/summary.json"}};
    if (g.fresh()) return;
    ordered_json j;
    j["master_seed"] = cfg.master_seed;
    j["benchmark_seed"] = split_cfg.seed;
    j["config"] = ordered_json::parse(cfg.to_json());
    j["config"].erase("out_dir");  // output location is not experiment identity
    j["models"] = ordered_json::array();
    for (const auto& r : records) j["models"].push_back(model_record_json(r));
    j["groups"] = ordered_json::array();
    std::vector<std::string> groups;
    for (const auto& r : records)
      if (std::find(groups.begin(), groups.end(), r.group) == groups.end())
        groups.push_back(r.group);
    for (const auto& gname : groups) {
      ordered_json jg;
      jg["name"] = gname;
      std::vector<double> per_seed;
      for (const auto& r : records)
        if (r.group == gname) per_seed.push_back(r.test.auroc);
      jg["per_seed_test_auroc"] = per_seed;
      jg["mean_test_auroc"] =
          std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / per_seed.size();
      j["groups"].push_back(jg);
    }
    {
      const auto rm = ranking_metrics(maha_scores, test_labels);
      ordered_json jb;
      jb["auroc"] = rm.auroc;
      jb["fpr_at_95_tpr"] = rm.fpr;
      jb["aupr_in"] = rm.aupr;
      j["baselines"]["mahalanobis"] = jb;
    }
    j["ensembles"] = jens;
    j["heterogeneity"] = ordered_json::parse(read_text(dir + "/heterogeneity.json"));
    write_text(dir + "/summary.json", j.dump(2) + "\n");
    g.commit();
    result.stages_run.push_back("summary");
  });
  return result;
}

void emit_report(const std::string& experiment_dir, const std::string& format) {
  if (format != "csv" && format != "json" && format != "svg")
    throw ConfigError("format must be csv, json, or svg");
  const std::string summary_path = experiment_dir + "/summary.json";
  if (!fs::exists(summary_path))
    throw IncompleteExperiment("missing " + summary_path + "; run the pipeline first");
  const ordered_json summary = ordered_json::parse(read_text(summary_path));
  const std::string rdir = experiment_dir + "/report";
  fs::create_directories(rdir);

  // one row per (model-or-ensemble, metric)
  std::ostringstream os;
  os << "name,metric,value\n";
  const auto emit_rows = [&os](const std::string& name, const ordered_json& metrics) {
    for (const auto& [k, v] : metrics.items())
      os << name << "," << k << "," << v.get<double>() << "\n";
  };
  for (const auto& jm : summary["models"]) emit_rows(jm["name"], jm["test"]);
  for (const auto& jv : summary["ensembles"]["vanilla"])
    emit_rows(jv["name"], jv["test"]);
  emit_rows("greedy_diverse", summary["ensembles"]["greedy"]["test"]);
  emit_rows("mahalanobis", summary["baselines"]["mahalanobis"]);
  write_text(rdir + "/metrics.csv", os.str());

  // scatter data was produced by the ensemble stage; surface it in the report
  const std::string scatter = experiment_dir + "/scatter.csv";
  if (!fs::exists(scatter))
    throw IncompleteExperiment("missing " + scatter);
  write_text(rdir + "/scatter.csv", read_text(scatter));

  if (format == "json") write_text(rdir + "/summary.json", summary.dump(2) + "\n");

  if (format == "svg") {
    // accuracy-vs-recall and cost-vs-recall from the greedy ensemble curve
    std::istringstream curve(read_text(experiment_dir + "/curve_greedy.csv"));
    std::string line;
    std::getline(curve, line);  // header
    std::vector<double> recall, acc_x, acc, costv;
    while (std::getline(curve, line)) {
      std::istringstream row(line);
      std::string tau, rec, a, c;
      std::getline(row, tau, ',');
      std::getline(row, rec, ',');
      std::getline(row, a, ',');
      std::getline(row, c, ',');
      recall.push_back(std::stod(rec));
      costv.push_back(std::stod(c));
      if (!a.empty() && a != "undefined") {
        acc_x.push_back(recall.back());
        acc.push_back(std::stod(a));
      }
    }
    write_text(rdir + "/accuracy_vs_recall.svg",
               polyline_svg("selective accuracy vs outlier recall", acc_x, acc));
    write_text(rdir + "/cost_vs_recall.svg",
               polyline_svg("cost vs outlier recall", recall, costv));
  }
}

std::string CompareReport::to_json() const {
  ordered_json j;
  j["metric"] = "test_auroc";
  j["group_a"] = group_a;
  j["group_b"] = group_b;
  j["deltas"] = deltas;
  j["positive"] = positive;
  j["n"] = n;
  j["p_bound"] = p_bound;
  // reduced tail fraction, e.g. 1/32 for 5 of 5 positive
  long num = 0;
  for (int i = positive; i <= n; ++i) {
    long c = 1;
    for (int k = 0; k < i; ++k) c = c * (n - k) / (k + 1);
    num += c;
  }
  long den = 1L << n;
  const long g = std::gcd(num, den);
  j["p_bound_fraction"] = std::to_string(num / g) + "/" + std::to_string(den / g);
  return j.dump(2);
}

CompareReport compare(const std::string& summary_path_a,
                      const std::string& summary_path_b,
                      const std::string& group_a, const std::string& group_b) {
  const ordered_json a = ordered_json::parse(read_text(summary_path_a));
  const ordered_json b = ordered_json::parse(read_text(summary_path_b));
  if (a.value("benchmark_seed", 0ull) != b.value("benchmark_seed", 0ull))
    throw IncomparableRuns("summaries come from different benchmark seeds");

  const auto find_group = [](const ordered_json& j, const std::string& name) {
    if (j["groups"].empty()) throw InvalidInput("summary has no model groups");
    if (name.empty()) return j["groups"][0];
    for (const auto& g : j["groups"])
      if (g["name"] == name) return g;
    throw InvalidInput("no model group named " + name);
  };
  const auto ga = find_group(a, group_a);
  const auto gb = find_group(b, group_b);
  const auto sa = ga["per_seed_test_auroc"].get<std::vector<double>>();
  const auto sb = gb["per_seed_test_auroc"].get<std::vector<double>>();

  CompareReport r;
  r.group_a = ga["name"];
  r.group_b = gb["name"];
  const size_t n = std::min(sa.size(), sb.size());
  for (size_t i = 0; i < n; ++i) r.deltas.push_back(sa[i] - sb[i]);
  r.n = static_cast<int>(n);
  for (double d : r.deltas)
    if (d > 0.0) ++r.positive;
  // one-sided exact binomial tail at p = 1/2
  double tail = 0.0;
  for (int i = r.positive; i <= r.n; ++i) {
    double c = 1.0;
    for (int k = 0; k < i; ++k) c = c * (r.n - k) / (k + 1);
    tail += c;
  }
  r.p_bound = r.n == 0 ? 1.0 : tail / std::pow(2.0, r.n);
  return r;
}

}  // namespace hod
