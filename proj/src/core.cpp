#include "hod/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace hod {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(ConditionStatus s) {
  return s == ConditionStatus::inlier ? "inlier" : "outlier";
}

std::string to_string(RiskLevel r) {
  switch (r) {
    case RiskLevel::low: return "low";
    case RiskLevel::medium: return "medium";
    case RiskLevel::high: return "high";
  }
  throw InvalidInput("bad risk level");
}

std::string to_string(SkinType t) {
  switch (t) {
    case SkinType::T12: return "T12";
    case SkinType::T3: return "T3";
    case SkinType::T4: return "T4";
    case SkinType::T56: return "T56";
    case SkinType::unknown: return "unknown";
  }
  throw InvalidInput("bad skin type");
}

ConditionStatus condition_status_from_string(const std::string& s) {
  if (s == "inlier") return ConditionStatus::inlier;
  if (s == "outlier") return ConditionStatus::outlier;
  throw InvalidInput("unknown condition status: " + s);
}

RiskLevel risk_from_string(const std::string& s) {
  if (s == "low") return RiskLevel::low;
  if (s == "medium") return RiskLevel::medium;
  if (s == "high") return RiskLevel::high;
  throw InvalidInput("unknown risk level: " + s);
}

SkinType skin_type_from_string(const std::string& s) {
  if (s == "T12") return SkinType::T12;
  if (s == "T3") return SkinType::T3;
  if (s == "T4") return SkinType::T4;
  if (s == "T56") return SkinType::T56;
  if (s == "unknown") return SkinType::unknown;
  throw InvalidInput("unknown skin type: " + s);
}

std::string to_string(SplitPart p) {
  switch (p) {
    case SplitPart::train: return "train";
    case SplitPart::val: return "val";
    case SplitPart::test: return "test";
  }
  throw InvalidInput("bad split part");
}

SplitPart split_part_from_string(const std::string& s) {
  if (s == "train") return SplitPart::train;
  if (s == "val") return SplitPart::val;
  if (s == "test") return SplitPart::test;
  throw InvalidInput("unknown split part: " + s);
}

const Condition& ConditionTable::by_id(int condition_id) const {
  for (const auto& c : conditions)
    if (c.id == condition_id) return c;
  throw UnknownLabel("unknown condition id " + std::to_string(condition_id));
}

bool ConditionTable::has(int condition_id) const {
  return std::any_of(conditions.begin(), conditions.end(),
                     [&](const Condition& c) { return c.id == condition_id; });
}

std::vector<int> ConditionTable::inlier_ids() const {
  std::vector<int> ids;
  for (const auto& c : conditions)
    if (c.status == ConditionStatus::inlier) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> ConditionTable::outlier_ids() const {
  std::vector<int> ids;
  for (const auto& c : conditions)
    if (c.status == ConditionStatus::outlier) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ConditionTable::validate() const {
  if (n_min < 1) throw InvalidInput("n_min must be positive");
  std::unordered_set<int> seen;
  for (const auto& c : conditions) {
    if (!seen.insert(c.id).second)
      throw InvalidInput("duplicate condition id " + std::to_string(c.id));
    if (c.sample_count < 0)
      throw InvalidInput("negative sample count for condition " + std::to_string(c.id));
    const bool should_be_inlier = c.sample_count >= n_min;
    if (should_be_inlier != (c.status == ConditionStatus::inlier))
      throw InvalidInput("condition " + std::to_string(c.id) +
                         " status inconsistent with sample_count vs n_min");
  }
}

const LabeledCase& Dataset::case_by_id(int case_id) const {
  for (const auto& c : cases)
    if (c.case_id == case_id) return c;
  throw InvalidInput("unknown case id " + std::to_string(case_id));
}

void Dataset::validate() const {
  table.validate();
  std::unordered_set<int> seen;
  for (const auto& c : cases) {
    if (!seen.insert(c.case_id).second)
      throw InvalidInput("duplicate case id " + std::to_string(c.case_id));
    if (c.instances.empty() || c.instances.size() > 6)
      throw InvalidCase("case " + std::to_string(c.case_id) +
                        " must have between 1 and 6 instances");
    for (const auto& inst : c.instances)
      if (static_cast<int>(inst.size()) != feature_dim)
        throw InvalidCase("case " + std::to_string(c.case_id) +
                          " instance dimension mismatch");
    if (!table.has(c.condition_id))
      throw InvalidInput("case " + std::to_string(c.case_id) +
                         " references unknown condition");
  }
}

const std::vector<int>& BenchmarkSplit::part(SplitPart p) const {
  switch (p) {
    case SplitPart::train: return train;
    case SplitPart::val: return val;
    case SplitPart::test: return test;
  }
  throw InvalidInput("bad split part");
}

std::vector<int>& BenchmarkSplit::part(SplitPart p) {
  switch (p) {
    case SplitPart::train: return train;
    case SplitPart::val: return val;
    case SplitPart::test: return test;
  }
  throw InvalidInput("bad split part");
}

bool BenchmarkSplit::outlier_assigned_to(int condition_id, SplitPart& out) const {
  for (const auto& [cid, part] : outlier_assignment) {
    if (cid == condition_id) {
      out = part;
      return true;
    }
  }
  return false;
}

std::vector<double> case_feature(const LabeledCase& c) {
  if (c.instances.empty())
    throw InvalidCase("case " + std::to_string(c.case_id) + " has no instances");
  std::vector<double> mean(c.instances.front().size(), 0.0);
  for (const auto& inst : c.instances) {
    if (inst.size() != mean.size())
      throw InvalidCase("case " + std::to_string(c.case_id) +
                        " has mixed instance dimensions");
    for (size_t k = 0; k < mean.size(); ++k) mean[k] += inst[k];
  }
  const double inv = 1.0 / static_cast<double>(c.instances.size());
  for (double& v : mean) v *= inv;
  return mean;
}

std::vector<std::string> validate_probability(const ProbabilityVector& p) {
  std::vector<std::string> violations;
  if (p.empty()) {
    violations.push_back("empty vector");
    return violations;
  }
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i])) {
      violations.push_back("entry " + std::to_string(i) + " non-finite");
      continue;
    }
    if (p[i] <= 0.0 || p[i] >= 1.0)
      violations.push_back("entry " + std::to_string(i) + "=" +
                           std::to_string(p[i]) + " outside (0,1)");
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    violations.push_back("sum=" + std::to_string(sum));
  return violations;
}

void write_cases_jsonl(const std::string& path, const std::vector<LabeledCase>& cases) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  for (const auto& c : cases) {
    ordered_json j;
    j["case_id"] = c.case_id;
    j["patient_id"] = c.patient_id;
    j["condition_id"] = c.condition_id;
    j["skin_type"] = to_string(c.skin_type);
    j["instances"] = c.instances;
    out << j.dump() << "\n";
  }
}

std::vector<LabeledCase> read_cases_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  std::vector<LabeledCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    LabeledCase c;
    c.case_id = j.at("case_id").get<int>();
    c.patient_id = j.at("patient_id").get<int>();
    c.condition_id = j.at("condition_id").get<int>();
    c.skin_type = skin_type_from_string(j.at("skin_type").get<std::string>());
    c.instances = j.at("instances").get<std::vector<std::vector<double>>>();
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_condition_table(const std::string& path, const ConditionTable& table) {
  ordered_json j;
  j["n_min"] = table.n_min;
  j["conditions"] = ordered_json::array();
  for (const auto& c : table.conditions) {
    ordered_json jc;
    jc["id"] = c.id;
    jc["name"] = c.name;
    jc["status"] = to_string(c.status);
    jc["risk"] = to_string(c.risk);
    jc["sample_count"] = c.sample_count;
    j["conditions"].push_back(jc);
  }
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

ConditionTable read_condition_table(const std::string& table_path) {
  std::ifstream in(table_path);
  if (!in) throw InvalidInput("cannot open " + table_path);
  json j = json::parse(in);
  ConditionTable t;
  t.n_min = j.at("n_min").get<int>();
  for (const auto& jc : j.at("conditions")) {
    Condition c;
    c.id = jc.at("id").get<int>();
    c.name = jc.at("name").get<std::string>();
    c.status = condition_status_from_string(jc.at("status").get<std::string>());
    c.risk = risk_from_string(jc.at("risk").get<std::string>());
    c.sample_count = jc.at("sample_count").get<long>();
    t.conditions.push_back(std::move(c));
  }
  return t;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  write_cases_jsonl(dir + "/cases.jsonl", ds.cases);
  write_condition_table(dir + "/conditions.json", ds.table);
  ordered_json meta;
  meta["feature_dim"] = ds.feature_dim;
  std::ofstream out(dir + "/meta.json");
  if (!out) throw InvalidInput("cannot open " + dir + "/meta.json for writing");
  out << meta.dump(2) << "\n";
}

Dataset read_dataset(const std::string& dir) {
  Dataset ds;
  ds.cases = read_cases_jsonl(dir + "/cases.jsonl");
  ds.table = read_condition_table(dir + "/conditions.json");
  std::ifstream in(dir + "/meta.json");
  if (!in) throw InvalidInput("cannot open " + dir + "/meta.json");
  json meta = json::parse(in);
  ds.feature_dim = meta.at("feature_dim").get<int>();
  return ds;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hod
