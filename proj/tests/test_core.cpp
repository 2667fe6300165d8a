#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <random>

#include "hod/core.hpp"

using namespace hod;

namespace {

LabeledCase make_case(std::vector<std::vector<double>> instances) {
  LabeledCase c;
  c.case_id = 1;
  c.patient_id = 1;
  c.condition_id = 0;
  c.instances = std::move(instances);
  return c;
}

}  // namespace

TEST_CASE("case_feature single instance is the identity") {
  auto c = make_case({{1.0, -2.0, 3.5}});
  CHECK(case_feature(c) == std::vector<double>{1.0, -2.0, 3.5});
}

TEST_CASE("case_feature averages instances") {
  auto c = make_case({{0.0, 2.0}, {2.0, 0.0}});
  CHECK(case_feature(c) == std::vector<double>{1.0, 1.0});
  c = make_case({{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}});
  CHECK(case_feature(c) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("case_feature rejects an empty instance list") {
  auto c = make_case({});
  CHECK_THROWS_AS(case_feature(c), InvalidCase);
}

TEST_CASE("case_feature is permutation invariant and idempotent on copies") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> instances(1 + trial % 6,
                                               std::vector<double>(4));
    for (auto& inst : instances)
      for (double& v : inst) v = dist(rng);
    auto c = make_case(instances);
    const auto base = case_feature(c);
    std::shuffle(instances.begin(), instances.end(), rng);
    auto shuffled = make_case(instances);
    const auto permuted = case_feature(shuffled);
    for (size_t k = 0; k < base.size(); ++k)
      CHECK(base[k] == doctest::Approx(permuted[k]).epsilon(1e-12));

    std::vector<double> v(4);
    for (double& x : v) x = dist(rng);
    const int copies = 1 + trial % 6;
    auto rep = make_case(std::vector<std::vector<double>>(copies, v));
    const auto mean = case_feature(rep);
    for (size_t k = 0; k < v.size(); ++k)
      CHECK(mean[k] == doctest::Approx(v[k]).epsilon(1e-12));
  }
}

TEST_CASE("validate_probability") {
  CHECK(validate_probability({0.5, 0.5}).empty());
  CHECK_FALSE(validate_probability({0.5, 0.6}).empty());   // sum = 1.1
  CHECK_FALSE(validate_probability({1.0, 0.0}).empty());   // boundary entries
  CHECK_FALSE(validate_probability({}).empty());
}

TEST_CASE("condition table invariants") {
  ConditionTable t;
  t.n_min = 5;
  t.conditions = {{0, "a", ConditionStatus::inlier, RiskLevel::low, 10},
                  {1, "b", ConditionStatus::outlier, RiskLevel::high, 2}};
  CHECK_NOTHROW(t.validate());
  CHECK(t.inlier_ids() == std::vector<int>{0});
  CHECK(t.outlier_ids() == std::vector<int>{1});

  t.conditions[1].status = ConditionStatus::inlier;  // below n_min
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  t.conditions[1].status = ConditionStatus::outlier;
  t.conditions[1].id = 0;  // duplicate
  CHECK_THROWS_AS(t.validate(), InvalidInput);
}

TEST_CASE("dataset JSON round trip") {
  Dataset ds;
  ds.feature_dim = 2;
  ds.table.n_min = 2;
  ds.table.conditions = {{0, "a", ConditionStatus::inlier, RiskLevel::low, 2},
                         {1, "b", ConditionStatus::outlier, RiskLevel::medium, 1}};
  LabeledCase c1 = make_case({{0.25, -1.5}});
  LabeledCase c2 = make_case({{1.0, 2.0}, {3.0, 4.0}});
  c2.case_id = 2;
  c2.patient_id = 2;
  c2.condition_id = 1;
  c2.skin_type = SkinType::T3;
  ds.cases = {c1, c2};
  ds.cases[0].condition_id = 0;
  ds.table.conditions[0].sample_count = 2;
  ds.cases.push_back(c1);
  ds.cases.back().case_id = 3;

  const std::string dir = "core_io_test";
  std::remove((dir + "/cases.jsonl").c_str());
  REQUIRE(system(("mkdir -p " + dir).c_str()) == 0);
  write_dataset(dir, ds);
  const Dataset back = read_dataset(dir);
  CHECK(back.feature_dim == ds.feature_dim);
  CHECK(back.table.n_min == ds.table.n_min);
  CHECK(back.cases.size() == ds.cases.size());
  CHECK(back.cases[1].instances == ds.cases[1].instances);
  CHECK(back.cases[1].skin_type == SkinType::T3);
  CHECK(back.table.conditions[1].risk == RiskLevel::medium);
}
