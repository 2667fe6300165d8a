#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "hod/pipeline.hpp"

namespace {

hod::ExperimentConfig load_config(const std::string& config_path,
                                  const std::string& out_override,
                                  std::uint64_t seed_override, bool seed_set) {
  hod::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = hod::ExperimentConfig::from_json_file(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_set) cfg.master_seed = seed_override;
  return cfg;
}

int run_stage_command(const std::string& config_path, const std::string& out,
                      std::uint64_t seed, bool seed_set, hod::Stage stop_after) {
  const auto cfg = load_config(config_path, out, seed, seed_set);
  const auto result = hod::run_pipeline(cfg, stop_after);
  if (result.stages_run.empty()) {
    std::printf("up to date: %s\n", result.out_dir.c_str());
  } else {
    for (const auto& s : result.stages_run)
      std::printf("ran stage %s\n", s.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-tail OOD detection benchmark runner"};
  app.require_subcommand(1);
  app.fallthrough();  // accept the global flags after the subcommand too

  std::string config_path, out_dir, format = "csv";
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "experiment config JSON file");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--seed", seed, "master seed override")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--format", format, "report format: csv, json, or svg");

  const struct {
    const char* name;
    const char* help;
    hod::Stage stage;
  } stage_cmds[] = {
      {"generate", "generate the synthetic dataset", hod::Stage::generate},
      {"split", "build and validate the benchmark split", hod::Stage::split},
      {"train", "train the model pool", hod::Stage::train},
      {"score", "score validation and test cases", hod::Stage::score},
      {"evaluate", "per-model metrics and the heterogeneity ablation",
       hod::Stage::evaluate},
      {"ensemble", "vanilla and greedy-diverse ensembles", hod::Stage::ensemble},
  };
  for (const auto& c : stage_cmds) app.add_subcommand(c.name, c.help);
  auto* run_cmd = app.add_subcommand("run", "full pipeline through the summary");

  auto* report_cmd = app.add_subcommand("report", "emit report tables and charts");
  auto* compare_cmd =
      app.add_subcommand("compare", "per-seed deltas between two run summaries");
  std::string summary_a, summary_b, group_a, group_b;
  compare_cmd->add_option("summary_a", summary_a, "first summary.json")->required();
  compare_cmd->add_option("summary_b", summary_b, "second summary.json")->required();
  compare_cmd->add_option("--group-a", group_a, "model group in the first summary");
  compare_cmd->add_option("--group-b", group_b, "model group in the second summary");

  CLI11_PARSE(app, argc, argv);

  std::string stage_name = "startup";
  try {
    for (const auto& c : stage_cmds)
      if (app.got_subcommand(c.name)) {
        stage_name = c.name;
        return run_stage_command(config_path, out_dir, seed, seed_set, c.stage);
      }
    if (app.got_subcommand(run_cmd)) {
      stage_name = "run";
      return run_stage_command(config_path, out_dir, seed, seed_set,
                               hod::Stage::summary);
    }
    if (app.got_subcommand(report_cmd)) {
      stage_name = "report";
      const auto cfg = load_config(config_path, out_dir, seed, seed_set);
      hod::emit_report(cfg.out_dir, format);
      std::printf("report written to %s/report\n", cfg.out_dir.c_str());
      return 0;
    }
    if (app.got_subcommand(compare_cmd)) {
      stage_name = "compare";
      const auto report = hod::compare(summary_a, summary_b, group_a, group_b);
      std::printf("%s\n", report.to_json().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s failed: %s\n", stage_name.c_str(), e.what());
    return 1;
  }
  return 1;
}
