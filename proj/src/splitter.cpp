#include "hod/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include <json.hpp>

namespace hod {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<SplitPart, 3> kParts = {SplitPart::train, SplitPart::val,
                                             SplitPart::test};

double pairwise_l1_max(const std::array<std::vector<double>, 3>& dists,
                       const std::array<bool, 3>& nonempty) {
  double worst = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      if (!nonempty[a] && !nonempty[b]) continue;
      if (!nonempty[a] || !nonempty[b]) {
        // an empty part is maximally distant, never a loophole
        worst = std::max(worst, 2.0);
        continue;
      }
      double l1 = 0.0;
      for (size_t k = 0; k < dists[a].size(); ++k)
        l1 += std::abs(dists[a][k] - dists[b][k]);
      worst = std::max(worst, l1);
    }
  }
  return worst;
}

std::vector<double> normalize(const std::vector<long>& counts) {
  long total = 0;
  for (long c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total > 0)
    for (size_t k = 0; k < counts.size(); ++k)
      out[k] = static_cast<double>(counts[k]) / total;
  return out;
}

}  // namespace

void SplitConfig::validate() const {
  double s = inlier_ratios[0] + inlier_ratios[1] + inlier_ratios[2];
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("inlier_ratios must sum to 1");
  s = outlier_target_fractions[0] + outlier_target_fractions[1] +
      outlier_target_fractions[2];
  if (std::abs(s - 1.0) > 1e-9)
    throw ConfigError("outlier_target_fractions must sum to 1");
  for (double w : {w_samples, w_classes, w_risk, w_skin})
    if (w < 0.0) throw ConfigError("balance weights must be non-negative");
  if (tolerance <= 0.0) throw ConfigError("tolerance must be positive");
}

std::vector<OutlierConditionStats> collect_outlier_stats(
    const ConditionTable& table, const std::vector<LabeledCase>& cases) {
  std::vector<OutlierConditionStats> stats;
  std::unordered_map<int, size_t> index;
  for (const auto& cond : table.conditions) {
    if (cond.status != ConditionStatus::outlier) continue;
    OutlierConditionStats s;
    s.condition_id = cond.id;
    s.risk = cond.risk;
    index[cond.id] = stats.size();
    stats.push_back(s);
  }
  for (const auto& c : cases) {
    auto it = index.find(c.condition_id);
    if (it == index.end()) continue;
    auto& s = stats[it->second];
    ++s.sample_count;
    ++s.skin_histogram[static_cast<int>(c.skin_type)];
  }
  return stats;
}

double outlier_assignment_objective(const std::vector<OutlierConditionStats>& stats,
                                    const std::vector<SplitPart>& assignment,
                                    const SplitConfig& cfg) {
  if (assignment.size() != stats.size())
    throw InvalidInput("assignment/stats size mismatch");
  std::array<long, 3> samples = {};
  std::array<long, 3> classes = {};
  std::array<std::vector<long>, 3> risk;
  std::array<std::vector<long>, 3> skin;
  for (int p = 0; p < 3; ++p) {
    risk[p].assign(kNumRiskLevels, 0);
    skin[p].assign(kNumSkinTypes, 0);
  }
  for (size_t i = 0; i < stats.size(); ++i) {
    const int p = static_cast<int>(assignment[i]);
    samples[p] += stats[i].sample_count;
    classes[p] += 1;
    risk[p][static_cast<int>(stats[i].risk)] += 1;  // risk attaches to conditions
    for (int k = 0; k < kNumSkinTypes; ++k)
      skin[p][k] += stats[i].skin_histogram[k];
  }
  const long total_samples = samples[0] + samples[1] + samples[2];
  const long total_classes = classes[0] + classes[1] + classes[2];

  double sample_dev = 0.0, class_dev = 0.0;
  for (int p = 0; p < 3; ++p) {
    const double target = cfg.outlier_target_fractions[p];
    if (total_samples > 0)
      sample_dev += std::abs(static_cast<double>(samples[p]) / total_samples - target);
    if (total_classes > 0)
      class_dev += std::abs(static_cast<double>(classes[p]) / total_classes - target);
  }

  std::array<std::vector<double>, 3> risk_dist, skin_dist;
  std::array<bool, 3> nonempty = {};
  for (int p = 0; p < 3; ++p) {
    nonempty[p] = samples[p] > 0;
    risk_dist[p] = normalize(risk[p]);
    skin_dist[p] = normalize(skin[p]);
  }
  const double risk_l1 = pairwise_l1_max(risk_dist, nonempty);
  const double skin_l1 = pairwise_l1_max(skin_dist, nonempty);

  return cfg.w_samples * sample_dev + cfg.w_classes * class_dev +
         cfg.w_risk * risk_l1 + cfg.w_skin * skin_l1;
}

std::vector<std::pair<int, SplitPart>> assign_outlier_conditions(
    const ConditionTable& table, const std::vector<LabeledCase>& cases,
    const SplitConfig& cfg) {
  cfg.validate();
  auto stats = collect_outlier_stats(table, cases);
  if (stats.size() < 3)
    throw InsufficientOutliers("need at least 3 outlier conditions, have " +
                               std::to_string(stats.size()));

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xa551u));
  // Seeded shuffle first so equal-count ties get a random but reproducible
  // order, then a stable sort by descending sample count.
  std::vector<size_t> order(stats.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return stats[a].sample_count > stats[b].sample_count;
  });

  // Partial assignments evaluated over the prefix processed so far.
  std::vector<OutlierConditionStats> placed_stats;
  std::vector<SplitPart> placed;
  std::vector<SplitPart> full(stats.size(), SplitPart::train);
  for (size_t idx : order) {
    placed_stats.push_back(stats[idx]);
    placed.push_back(SplitPart::train);
    double best = 0.0;
    std::vector<SplitPart> tied;
    for (SplitPart p : kParts) {
      placed.back() = p;
      const double obj = outlier_assignment_objective(placed_stats, placed, cfg);
      if (tied.empty() || obj < best - 1e-12) {
        best = obj;
        tied = {p};
      } else if (obj <= best + 1e-12) {
        tied.push_back(p);
      }
    }
    std::uniform_int_distribution<size_t> pick(0, tied.size() - 1);
    placed.back() = tied[pick(rng)];
    full[idx] = placed.back();
  }

  std::vector<std::pair<int, SplitPart>> assignment;
  for (size_t i = 0; i < stats.size(); ++i)
    assignment.emplace_back(stats[i].condition_id, full[i]);
  std::sort(assignment.begin(), assignment.end());
  return assignment;
}

InlierSplitResult split_inliers(const std::vector<LabeledCase>& cases,
                                const SplitConfig& cfg) {
  cfg.validate();
  struct PatientGroup {
    int patient_id;
    std::vector<int> case_ids;
    std::map<int, long> cases_per_condition;
    std::array<long, kNumSkinTypes> skin = {};
  };
  std::map<int, PatientGroup> by_patient;
  std::map<int, long> condition_totals;
  std::array<long, kNumSkinTypes> skin_totals = {};
  std::map<int, std::set<int>> condition_patients;
  for (const auto& c : cases) {
    auto& g = by_patient[c.patient_id];
    g.patient_id = c.patient_id;
    g.case_ids.push_back(c.case_id);
    ++g.cases_per_condition[c.condition_id];
    ++g.skin[static_cast<int>(c.skin_type)];
    ++condition_totals[c.condition_id];
    ++skin_totals[static_cast<int>(c.skin_type)];
    condition_patients[c.condition_id].insert(c.patient_id);
  }

  InlierSplitResult result;
  std::set<int> forced_train_patients;
  for (const auto& [cid, patients] : condition_patients) {
    if (patients.size() < 3) {
      result.warnings.push_back("condition " + std::to_string(cid) + " has only " +
                                std::to_string(patients.size()) +
                                " patients; all assigned to train");
      forced_train_patients.insert(patients.begin(), patients.end());
    }
  }

  std::vector<const PatientGroup*> groups;
  for (const auto& [pid, g] : by_patient) groups.push_back(&g);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x1271u));
  std::shuffle(groups.begin(), groups.end(), rng);
  std::stable_sort(groups.begin(), groups.end(),
                   [](const PatientGroup* a, const PatientGroup* b) {
                     return a->case_ids.size() > b->case_ids.size();
                   });

  std::map<int, std::array<long, 3>> condition_counts;
  std::array<std::array<long, kNumSkinTypes>, 3> skin_counts = {};
  auto assign = [&](const PatientGroup& g, int part) {
    for (int case_id : g.case_ids) {
      if (part == 0) result.train.push_back(case_id);
      else if (part == 1) result.val.push_back(case_id);
      else result.test.push_back(case_id);
    }
    for (const auto& [cid, n] : g.cases_per_condition)
      condition_counts[cid][part] += n;
    for (int k = 0; k < kNumSkinTypes; ++k)
      skin_counts[part][k] += g.skin[k];
  };

  for (const PatientGroup* g : groups) {
    if (forced_train_patients.count(g->patient_id)) {
      assign(*g, 0);
      continue;
    }
    // Fill the split with the largest remaining deficit across this
    // patient's conditions, with a secondary skin-type deficit term so the
    // skin distribution stays similar across splits.
    double best = 0.0;
    std::vector<int> tied;
    for (int p = 0; p < 3; ++p) {
      double score = 0.0;
      for (const auto& [cid, n] : g->cases_per_condition) {
        const double target = cfg.inlier_ratios[p] * condition_totals[cid];
        score += n * (target - condition_counts[cid][p]);
      }
      for (int k = 0; k < kNumSkinTypes; ++k) {
        if (g->skin[k] == 0) continue;
        const double target = cfg.inlier_ratios[p] * skin_totals[k];
        score += 0.5 * g->skin[k] * (target - skin_counts[p][k]);
      }
      if (tied.empty() || score > best + 1e-12) {
        best = score;
        tied = {p};
      } else if (score >= best - 1e-12) {
        tied.push_back(p);
      }
    }
    std::uniform_int_distribution<size_t> pick(0, tied.size() - 1);
    assign(*g, tied[pick(rng)]);
  }

  std::sort(result.train.begin(), result.train.end());
  std::sort(result.val.begin(), result.val.end());
  std::sort(result.test.begin(), result.test.end());
  return result;
}

bool SplitValidationReport::all_pass() const {
  return std::all_of(desiderata.begin(), desiderata.end(),
                     [](const DesideratumResult& d) { return d.pass; });
}

std::string SplitValidationReport::to_json() const {
  ordered_json j = ordered_json::array();
  for (const auto& d : desiderata) {
    ordered_json jd;
    jd["name"] = d.name;
    jd["pass"] = d.pass;
    jd["measured"] = d.measured;
    jd["detail"] = d.detail;
    j.push_back(jd);
  }
  return j.dump(2);
}

SplitValidationReport validate_split(const Dataset& ds, const BenchmarkSplit& split,
                                     const SplitConfig& cfg) {
  cfg.validate();
  SplitValidationReport report;

  // 1. Patient disjointness.
  std::array<std::set<int>, 3> patients;
  std::unordered_map<int, int> case_part;  // case_id -> part index
  for (int p = 0; p < 3; ++p) {
    for (int case_id : split.part(kParts[p])) {
      case_part[case_id] = p;
      patients[p].insert(ds.case_by_id(case_id).patient_id);
    }
  }
  long patient_overlaps = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (int pid : patients[a])
        if (patients[b].count(pid)) ++patient_overlaps;
  report.desiderata.push_back(
      {"patient_disjointness", patient_overlaps == 0,
       static_cast<double>(patient_overlaps),
       std::to_string(patient_overlaps) + " patients shared between splits"});

  // 2. Outlier-condition disjointness: each outlier condition's cases live in
  // exactly one split, matching its assignment.
  long condition_violations = 0;
  std::array<long, 3> out_samples = {};
  std::array<long, 3> out_classes = {};
  std::array<std::vector<long>, 3> risk_counts;
  std::array<std::vector<long>, 3> skin_counts;
  for (int p = 0; p < 3; ++p) {
    risk_counts[p].assign(kNumRiskLevels, 0);
    skin_counts[p].assign(kNumSkinTypes, 0);
  }
  for (const auto& cond : ds.table.conditions) {
    if (cond.status != ConditionStatus::outlier) continue;
    SplitPart assigned;
    const bool has_assignment = split.outlier_assigned_to(cond.id, assigned);
    std::set<int> parts_seen;
    for (const auto& c : ds.cases) {
      if (c.condition_id != cond.id) continue;
      auto it = case_part.find(c.case_id);
      if (it == case_part.end()) continue;
      parts_seen.insert(it->second);
    }
    bool ok = has_assignment && parts_seen.size() <= 1;
    if (ok && !parts_seen.empty() &&
        *parts_seen.begin() != static_cast<int>(assigned))
      ok = false;
    if (!ok) ++condition_violations;
    if (has_assignment && parts_seen.size() == 1) {
      const int p = *parts_seen.begin();
      out_classes[p] += 1;
      ++risk_counts[p][static_cast<int>(cond.risk)];
    }
  }
  for (const auto& c : ds.cases) {
    const auto& cond = ds.table.by_id(c.condition_id);
    auto it = case_part.find(c.case_id);
    if (it == case_part.end()) continue;
    const int p = it->second;
    ++skin_counts[p][static_cast<int>(c.skin_type)];
    if (cond.status == ConditionStatus::outlier) ++out_samples[p];
  }
  report.desiderata.push_back(
      {"outlier_condition_disjointness", condition_violations == 0,
       static_cast<double>(condition_violations),
       std::to_string(condition_violations) +
           " outlier conditions split across parts or unassigned"});

  // 3/4. Outlier sample and class balance, relative deviation from targets.
  auto balance_check = [&](const std::array<long, 3>& counts, const char* name) {
    const long total = counts[0] + counts[1] + counts[2];
    double worst = 1.0;
    if (total > 0) {
      worst = 0.0;
      for (int p = 0; p < 3; ++p) {
        const double target = cfg.outlier_target_fractions[p];
        const double frac = static_cast<double>(counts[p]) / total;
        worst = std::max(worst, std::abs(frac - target) / target);
      }
    }
    report.desiderata.push_back(
        {name, worst <= cfg.tolerance, worst,
         "max relative deviation from target fractions"});
  };
  balance_check(out_samples, "outlier_sample_balance");
  balance_check(out_classes, "outlier_class_balance");

  // 5/6. Risk (over outlier conditions, where risk lives) and skin-type
  // (over all cases) distribution L1.
  std::array<std::vector<double>, 3> risk_dist, skin_dist;
  std::array<bool, 3> risk_nonempty = {}, skin_nonempty = {};
  for (int p = 0; p < 3; ++p) {
    risk_dist[p] = normalize(risk_counts[p]);
    skin_dist[p] = normalize(skin_counts[p]);
    risk_nonempty[p] = out_samples[p] > 0;
    skin_nonempty[p] = !split.part(kParts[p]).empty();
  }
  const bool risk_defined =
      risk_nonempty[0] && risk_nonempty[1] && risk_nonempty[2];
  const double risk_l1 =
      risk_defined ? pairwise_l1_max(risk_dist, risk_nonempty) : 2.0;
  report.desiderata.push_back({"risk_distribution_similarity",
                               risk_defined && risk_l1 <= cfg.tolerance, risk_l1,
                               "max pairwise L1 of outlier risk distributions"});
  const bool skin_defined =
      skin_nonempty[0] && skin_nonempty[1] && skin_nonempty[2];
  const double skin_l1 =
      skin_defined ? pairwise_l1_max(skin_dist, skin_nonempty) : 2.0;
  report.desiderata.push_back({"skin_type_distribution_similarity",
                               skin_defined && skin_l1 <= cfg.tolerance, skin_l1,
                               "max pairwise L1 of skin-type distributions"});
  return report;
}

BenchmarkSplit build_benchmark(const Dataset& ds, const SplitConfig& cfg) {
  cfg.validate();
  ds.validate();
  for (int attempt = 0; attempt < 100; ++attempt) {
    SplitConfig attempt_cfg = cfg;
    attempt_cfg.seed = attempt == 0 ? cfg.seed : mix_seed(cfg.seed, attempt);
    auto assignment = assign_outlier_conditions(ds.table, ds.cases, attempt_cfg);

    std::vector<LabeledCase> inlier_cases;
    for (const auto& c : ds.cases)
      if (ds.table.by_id(c.condition_id).status == ConditionStatus::inlier)
        inlier_cases.push_back(c);
    auto inlier_split = split_inliers(inlier_cases, attempt_cfg);

    BenchmarkSplit split;
    split.outlier_assignment = assignment;
    split.train = inlier_split.train;
    split.val = inlier_split.val;
    split.test = inlier_split.test;
    for (const auto& c : ds.cases) {
      SplitPart p;
      if (split.outlier_assigned_to(c.condition_id, p))
        split.part(p).push_back(c.case_id);
    }
    for (SplitPart p : kParts)
      std::sort(split.part(p).begin(), split.part(p).end());

    if (validate_split(ds, split, cfg).all_pass()) return split;
  }
  throw SplitInfeasible("no valid split found in 100 seeded attempts");
}

void write_split(const std::string& path, const BenchmarkSplit& split,
                 const SplitConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["config"] = {{"inlier_ratios", cfg.inlier_ratios},
                 {"outlier_target_fractions", cfg.outlier_target_fractions},
                 {"w_samples", cfg.w_samples},
                 {"w_classes", cfg.w_classes},
                 {"w_risk", cfg.w_risk},
                 {"w_skin", cfg.w_skin},
                 {"tolerance", cfg.tolerance}};
  ordered_json ja = ordered_json::object();
  for (const auto& [cid, part] : split.outlier_assignment)
    ja[std::to_string(cid)] = to_string(part);
  j["outlier_assignment"] = ja;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

BenchmarkSplit read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  json j = json::parse(in);
  BenchmarkSplit split;
  split.train = j.at("train").get<std::vector<int>>();
  split.val = j.at("val").get<std::vector<int>>();
  split.test = j.at("test").get<std::vector<int>>();
  for (const auto& [key, value] : j.at("outlier_assignment").items())
    split.outlier_assignment.emplace_back(
        std::stoi(key), split_part_from_string(value.get<std::string>()));
  std::sort(split.outlier_assignment.begin(), split.outlier_assignment.end());
  return split;
}

}  // namespace hod
