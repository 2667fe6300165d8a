#include <doctest.h>

#include <cmath>
#include <random>

#include "hod/ensemble.hpp"

using namespace hod;

namespace {

// Two-inlier-class ScoreSet; top1 recomputed from the probabilities.
ScoreSet make_scores(const std::vector<double>& ood,
                     const std::vector<std::vector<double>>& probs) {
  ScoreSet s;
  s.inlier_class_ids = {0, 1};
  for (size_t i = 0; i < ood.size(); ++i) {
    s.case_ids.push_back(static_cast<int>(i));
    s.ood.push_back(ood[i]);
    s.confidence.push_back(1.0 - ood[i]);
    s.inlier_probs.push_back(probs[i]);
    s.top1.push_back(top1_from_probs(s.inlier_class_ids, probs[i], ood[i]));
  }
  return s;
}

ScoreSet random_scores(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ood;
  std::vector<std::vector<double>> probs;
  for (int i = 0; i < n; ++i) {
    double a = u(rng), b = u(rng), c = u(rng);
    const double z = a + b + c;
    ood.push_back(a / z);
    probs.push_back({b / z, c / z});
  }
  return make_scores(ood, probs);
}

EvalLabels alternating_labels(int n) {
  EvalLabels labels;
  for (int i = 0; i < n; ++i) {
    labels.condition_id.push_back(i % 2 ? 999 : 0);
    labels.is_outlier.push_back(i % 2 == 1);
    labels.risk.push_back(RiskLevel::low);
    labels.skin_type.push_back(SkinType::T3);
  }
  return labels;
}

}  // namespace

TEST_CASE("averaging a single member or duplicates is the identity") {
  const auto s = make_scores({0.2, 0.7}, {{0.5, 0.3}, {0.1, 0.2}});
  for (const auto avg : {average_scores({&s}), average_scores({&s, &s, &s})}) {
    for (size_t i = 0; i < s.size(); ++i) {
      CHECK(avg.ood[i] == doctest::Approx(s.ood[i]).epsilon(1e-12));
      CHECK(avg.inlier_probs[i][0] ==
            doctest::Approx(s.inlier_probs[i][0]).epsilon(1e-12));
      CHECK(avg.top1[i] == s.top1[i]);
    }
  }
}

TEST_CASE("averaging worked example") {
  const auto a = make_scores({0.3}, {{0.5, 0.2}});
  const auto b = make_scores({0.5}, {{0.1, 0.4}});
  const auto avg = average_scores({&a, &b});
  CHECK(avg.ood[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(avg.inlier_probs[0][0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(avg.inlier_probs[0][1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(avg.confidence[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(avg.top1[0] == kOutClassId);  // 0.4 > 0.3
}

TEST_CASE("averaging preserves the simplex and recomputes top1") {
  std::mt19937_64 rng(41);
  const auto a = random_scores(rng, 20);
  const auto b = random_scores(rng, 20);
  const auto c = random_scores(rng, 20);
  const auto avg = average_scores({&a, &b, &c});
  for (size_t i = 0; i < avg.size(); ++i) {
    double total = avg.ood[i];
    for (double p : avg.inlier_probs[i]) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(avg.top1[i] ==
          top1_from_probs(avg.inlier_class_ids, avg.inlier_probs[i], avg.ood[i]));
  }
}

TEST_CASE("averaging rejects misaligned members") {
  const auto a = make_scores({0.3, 0.4}, {{0.5, 0.2}, {0.3, 0.3}});
  auto b = a;
  b.case_ids[1] = 99;
  CHECK_THROWS_AS(average_scores({&a, &b}), AlignmentError);
  auto c = a;
  c.inlier_class_ids = {0, 2};
  CHECK_THROWS_AS(average_scores({&a, &c}), AlignmentError);
  CHECK_THROWS_AS(average_scores({}), InvalidInput);
}

TEST_CASE("diversity counts top-1 disagreement") {
  const auto a = make_scores({0.1, 0.1, 0.1, 0.1},
                             {{0.8, 0.1}, {0.8, 0.1}, {0.8, 0.1}, {0.8, 0.1}});
  CHECK(diversity(a, a) == doctest::Approx(0.0));
  const auto b = make_scores({0.1, 0.1, 0.1, 0.1},
                             {{0.1, 0.8}, {0.1, 0.8}, {0.1, 0.8}, {0.1, 0.8}});
  CHECK(diversity(a, b) == doctest::Approx(1.0));
  // exactly one of four cases flips
  const auto c = make_scores({0.1, 0.1, 0.1, 0.1},
                             {{0.8, 0.1}, {0.8, 0.1}, {0.8, 0.1}, {0.1, 0.8}});
  CHECK(diversity(a, c) == doctest::Approx(0.25));
}

TEST_CASE("diversity matrix is symmetric with zero diagonal") {
  std::mt19937_64 rng(43);
  const auto a = random_scores(rng, 30);
  const auto b = random_scores(rng, 30);
  const auto c = random_scores(rng, 30);
  const auto m = diversity_matrix({&a, &b, &c});
  REQUIRE(m.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(m[i][i] == 0.0);
    for (int j = 0; j < 3; ++j) CHECK(m[i][j] == doctest::Approx(m[j][i]));
  }
  CHECK(m[0][1] == doctest::Approx(diversity(a, b)));
  write_matrix_csv("matrix_io_test.csv", m);
}

TEST_CASE("ward dendrogram on two points") {
  const auto merges = ward_dendrogram({{0.0, 3.0}, {3.0, 0.0}});
  REQUIRE(merges.size() == 1);
  CHECK(merges[0].left == 0);
  CHECK(merges[0].right == 1);
  CHECK(merges[0].height == doctest::Approx(3.0));
  CHECK(merges[0].size == 2);
}

TEST_CASE("ward merges tight pairs first") {
  // points on a line: 0, 0.1, 10, 10.1
  const std::vector<double> xs = {0.0, 0.1, 10.0, 10.1};
  std::vector<std::vector<double>> m(4, std::vector<double>(4, 0.0));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m[i][j] = std::abs(xs[i] - xs[j]);
  const auto merges = ward_dendrogram(m);
  REQUIRE(merges.size() == 3);
  CHECK(merges[0].height == doctest::Approx(0.1));
  CHECK(merges[1].height == doctest::Approx(0.1));
  CHECK(merges[2].left == 4);
  CHECK(merges[2].right == 5);
  CHECK(merges[2].size == 4);
  CHECK(merges[2].height > merges[1].height);
  write_dendrogram_json("dendrogram_io_test.json", merges);
}

TEST_CASE("ward heights are monotone on euclidean distance matrices") {
  std::mt19937_64 rng(47);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> pts(7, std::vector<double>(3));
    for (auto& p : pts)
      for (double& v : p) v = dist(rng);
    std::vector<std::vector<double>> m(7, std::vector<double>(7, 0.0));
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < 3; ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
        m[i][j] = std::sqrt(d2);
      }
    const auto merges = ward_dendrogram(m);
    for (size_t k = 1; k < merges.size(); ++k)
      CHECK(merges[k].height >= merges[k - 1].height);
  }
}

TEST_CASE("ward rejects malformed matrices") {
  CHECK_THROWS_AS(ward_dendrogram({{0.0, 1.0}}), InvalidMatrix);
  CHECK_THROWS_AS(ward_dendrogram({{0.0, 1.0}, {2.0, 0.0}}), InvalidMatrix);
  CHECK_THROWS_AS(ward_dendrogram({{0.0, -1.0}, {-1.0, 0.0}}), InvalidMatrix);
  CHECK_THROWS_AS(ward_dendrogram({{0.5, 1.0}, {1.0, 0.0}}), InvalidMatrix);
  CHECK_THROWS_AS(ward_dendrogram({{0.0}}), InvalidMatrix);
}

TEST_CASE("greedy step one picks the pool's best single model") {
  // member 0 separates perfectly, member 1 is anti-correlated
  const auto labels = alternating_labels(6);
  const auto good = make_scores(
      {0.1, 0.9, 0.1, 0.9, 0.1, 0.9},
      {{0.8, 0.1}, {0.05, 0.05}, {0.8, 0.1}, {0.05, 0.05}, {0.8, 0.1}, {0.05, 0.05}});
  const auto bad = make_scores(
      {0.9, 0.1, 0.9, 0.1, 0.9, 0.1},
      {{0.05, 0.05}, {0.8, 0.1}, {0.05, 0.05}, {0.8, 0.1}, {0.05, 0.05}, {0.8, 0.1}});
  const auto sel = greedy_select({&bad, &good}, labels, 1);
  REQUIRE(sel.member_indices.size() == 1);
  CHECK(sel.member_indices[0] == 1);
  CHECK(sel.per_step_criterion[0] ==
        doctest::Approx(ood_criterion(good, labels)));
  write_selection_json("selection_io_test.json", sel);
}

TEST_CASE("greedy ties resolve to the lowest index") {
  const auto labels = alternating_labels(6);
  const auto s = make_scores(
      {0.1, 0.9, 0.2, 0.8, 0.1, 0.9},
      {{0.8, 0.1}, {0.05, 0.05}, {0.7, 0.1}, {0.1, 0.1}, {0.8, 0.1}, {0.05, 0.05}});
  const auto sel = greedy_select({&s, &s, &s}, labels, 3);
  for (int idx : sel.member_indices) CHECK(idx == 0);
}

TEST_CASE("greedy steps match an exhaustive per-step argmax") {
  std::mt19937_64 rng(53);
  const auto labels = alternating_labels(40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ScoreSet> pool;
    for (int m = 0; m < 3; ++m) pool.push_back(random_scores(rng, 40));
    std::vector<const ScoreSet*> ptrs;
    for (const auto& s : pool) ptrs.push_back(&s);
    const auto sel = greedy_select(ptrs, labels, 3);
    REQUIRE(sel.member_indices.size() == 3);
    std::vector<const ScoreSet*> prefix;
    for (int step = 0; step < 3; ++step) {
      int best = -1;
      double best_crit = -1.0;
      for (int cand = 0; cand < 3; ++cand) {
        auto trial_members = prefix;
        trial_members.push_back(ptrs[cand]);
        const auto avg = average_scores(trial_members);
        const double crit = ood_criterion(avg, labels);
        if (crit > best_crit) {
          best_crit = crit;
          best = cand;
        }
      }
      CHECK(sel.member_indices[step] == best);
      CHECK(sel.per_step_criterion[step] == doctest::Approx(best_crit).epsilon(1e-12));
      prefix.push_back(ptrs[sel.member_indices[step]]);
    }
  }
}
