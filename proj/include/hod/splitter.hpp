#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hod/core.hpp"

// Benchmark split construction and validation. The split must satisfy six
// desiderata: patient disjointness, outlier-condition disjointness, balanced
// outlier sample/class counts, and similar risk and skin-type distributions
// across the three splits.

namespace hod {

struct SplitConfig {
  std::array<double, 3> inlier_ratios = {0.8, 0.1, 0.1};
  std::array<double, 3> outlier_target_fractions = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  double w_samples = 1.0;
  double w_classes = 1.0;
  double w_risk = 1.0;
  double w_skin = 1.0;
  double tolerance = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-outlier-condition statistics feeding the assignment objective.
struct OutlierConditionStats {
  int condition_id = 0;
  long sample_count = 0;
  RiskLevel risk = RiskLevel::low;
  std::array<long, kNumSkinTypes> skin_histogram = {};
};

std::vector<OutlierConditionStats> collect_outlier_stats(
    const ConditionTable& table, const std::vector<LabeledCase>& cases);

// Weighted imbalance of a (possibly partial) assignment; lower is better.
// Shared by the greedy builder and the exhaustive oracle in tests.
double outlier_assignment_objective(const std::vector<OutlierConditionStats>& stats,
                                    const std::vector<SplitPart>& assignment,
                                    const SplitConfig& cfg);

// Greedy assignment in descending sample-count order, seeded tie-breaking.
// Throws InsufficientOutliers with fewer than 3 outlier conditions.
std::vector<std::pair<int, SplitPart>> assign_outlier_conditions(
    const ConditionTable& table, const std::vector<LabeledCase>& cases,
    const SplitConfig& cfg);

struct InlierSplitResult {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  std::vector<std::string> warnings;  // conditions with < 3 patients
};

// Patient-grouped split of inlier cases toward the configured ratios.
InlierSplitResult split_inliers(const std::vector<LabeledCase>& cases,
                                const SplitConfig& cfg);

struct DesideratumResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  std::string detail;
};

struct SplitValidationReport {
  std::vector<DesideratumResult> desiderata;  // always exactly six entries
  bool all_pass() const;
  std::string to_json() const;
};

SplitValidationReport validate_split(const Dataset& ds, const BenchmarkSplit& split,
                                     const SplitConfig& cfg);

// assign_outlier_conditions + split_inliers, retried over derived seeds until
// the result validates. Throws SplitInfeasible after 100 attempts.
BenchmarkSplit build_benchmark(const Dataset& ds, const SplitConfig& cfg);

void write_split(const std::string& path, const BenchmarkSplit& split,
                 const SplitConfig& cfg);
BenchmarkSplit read_split(const std::string& path);

}  // namespace hod
