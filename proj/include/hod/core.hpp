#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Core domain types for the hierarchical outlier detection benchmark.
// Everything here is immutable after construction and safe to share
// read-only across workers.

namespace hod {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidCase : Error { using Error::Error; };
struct InvalidInput : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct UnknownLabel : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct DegenerateClass : Error { using Error::Error; };
struct WrongScorer : Error { using Error::Error; };
struct InsufficientOutliers : Error { using Error::Error; };
struct SplitInfeasible : Error { using Error::Error; };
struct UndefinedMetric : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct InvalidMatrix : Error { using Error::Error; };
struct IncomparableRuns : Error { using Error::Error; };
struct IncompleteExperiment : Error { using Error::Error; };

struct TrainingDiverged : Error {
  int step;
  explicit TrainingDiverged(int step_)
      : Error("loss became non-finite at step " + std::to_string(step_)),
        step(step_) {}
};

enum class ConditionStatus { inlier, outlier };
enum class RiskLevel { low, medium, high };
enum class SkinType { T12, T3, T4, T56, unknown };

inline constexpr int kNumRiskLevels = 3;
inline constexpr int kNumSkinTypes = 5;  // includes unknown

std::string to_string(ConditionStatus s);
std::string to_string(RiskLevel r);
std::string to_string(SkinType t);
ConditionStatus condition_status_from_string(const std::string& s);
RiskLevel risk_from_string(const std::string& s);
SkinType skin_type_from_string(const std::string& s);

struct Condition {
  int id = 0;
  std::string name;
  ConditionStatus status = ConditionStatus::inlier;
  RiskLevel risk = RiskLevel::low;
  long sample_count = 0;
};

// A case: 1-6 feature instances sharing one condition label.
struct LabeledCase {
  int case_id = 0;
  int patient_id = 0;
  int condition_id = 0;
  SkinType skin_type = SkinType::unknown;
  std::vector<std::vector<double>> instances;
};

struct ConditionTable {
  int n_min = 1;
  std::vector<Condition> conditions;

  const Condition& by_id(int condition_id) const;
  bool has(int condition_id) const;
  std::vector<int> inlier_ids() const;   // sorted ascending
  std::vector<int> outlier_ids() const;  // sorted ascending
  // Throws InvalidInput on duplicate ids or a status/sample_count mismatch.
  void validate() const;
};

struct Dataset {
  int feature_dim = 0;
  ConditionTable table;
  std::vector<LabeledCase> cases;

  const LabeledCase& case_by_id(int case_id) const;
  // Checks table invariants, per-case instance counts/dimensions, and that
  // every case references a known condition.
  void validate() const;
};

enum class SplitPart { train, val, test };
inline constexpr int kNumSplitParts = 3;
std::string to_string(SplitPart p);
SplitPart split_part_from_string(const std::string& s);

struct BenchmarkSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  // condition_id -> split, for outlier conditions only
  std::vector<std::pair<int, SplitPart>> outlier_assignment;

  const std::vector<int>& part(SplitPart p) const;
  std::vector<int>& part(SplitPart p);
  bool outlier_assigned_to(int condition_id, SplitPart& out) const;
};

using ProbabilityVector = std::vector<double>;

// Mean over instance vectors. Throws InvalidCase on an empty instance list.
std::vector<double> case_feature(const LabeledCase& c);

// Simplex check: entries in the open interval (0,1), sum within 1e-9 of 1.
// Returns a human-readable violation list; empty means ok.
std::vector<std::string> validate_probability(const ProbabilityVector& p);

// --- dataset I/O (JSON-lines cases + JSON condition table) ---

void write_cases_jsonl(const std::string& path, const std::vector<LabeledCase>& cases);
std::vector<LabeledCase> read_cases_jsonl(const std::string& path);
void write_condition_table(const std::string& path, const ConditionTable& table);
ConditionTable read_condition_table(const std::string& table_path);
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

// Seed derivation for independent sub-streams (splitmix64-style mixing).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

}  // namespace hod
