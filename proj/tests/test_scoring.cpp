#include <doctest.h>

#include <cmath>
#include <random>

#include "hod/scoring.hpp"

using namespace hod;

namespace {

ClassifierHead head_with_biases(std::vector<int> inliers, std::vector<int> outliers,
                                LossKind kind, std::vector<double> biases) {
  ClassLayout layout{std::move(inliers), std::move(outliers)};
  auto h = init_head(layout, 1, kind, 0.1, 0, 1);
  std::fill(h.weights.begin(), h.weights.end(), 0.0);
  h.biases = std::move(biases);
  return h;
}

}  // namespace

TEST_CASE("hod OOD score sums the outlier block") {
  const auto h = head_with_biases({0, 1}, {100, 101}, LossKind::hod, {0, 0, 0, 0});
  CHECK(ood_score_hod(h, {0.0}) == doctest::Approx(0.5).epsilon(1e-12));

  const auto reject =
      head_with_biases({0, 1}, {kOutClassId}, LossKind::reject_bucket, {0, 0, 0});
  const auto fwd = forward(reject, {0.0});
  CHECK(ood_score_hod(reject, {0.0}) == doctest::Approx(fwd.probs[2]).epsilon(1e-12));

  const auto msp_only = head_with_biases({0, 1}, {}, LossKind::ce_inlier_only, {0, 0});
  CHECK_THROWS_AS(ood_score_hod(msp_only, {0.0}), WrongScorer);
}

TEST_CASE("msp OOD score") {
  const auto uniform =
      head_with_biases({0, 1, 2, 3}, {}, LossKind::ce_inlier_only, {0, 0, 0, 0});
  CHECK(ood_score_msp(uniform, {0.0}) == doctest::Approx(0.75).epsilon(1e-12));

  const auto skewed = head_with_biases(
      {0, 1, 2}, {}, LossKind::ce_inlier_only,
      {std::log(0.7), std::log(0.2), std::log(0.1)});
  CHECK(ood_score_msp(skewed, {0.0}) == doctest::Approx(0.3).epsilon(1e-12));

  // concentration limit: U -> 0
  const auto peaked =
      head_with_biases({0, 1}, {}, LossKind::ce_inlier_only, {40.0, 0.0});
  CHECK(ood_score_msp(peaked, {0.0}) < 1e-12);
}

TEST_CASE("msp renormalizes over the inlier block when outliers exist") {
  // probs (0.25, 0.25, 0.5 outlier): renormalized max = 0.5, U = 0.5
  const auto h = head_with_biases({0, 1}, {100}, LossKind::fine_only,
                                  {0.0, 0.0, std::log(2.0)});
  CHECK(ood_score_msp(h, {0.0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("top1 rules") {
  // p(out)=0.6 vs best inlier 0.3
  CHECK(top1_from_probs({4, 7}, {0.3, 0.1}, 0.6) == kOutClassId);
  // exact inlier-vs-OUT tie goes to the inlier
  CHECK(top1_from_probs({4, 7}, {0.4, 0.2}, 0.4) == 4);
  // inlier ties go to the lowest class id
  CHECK(top1_from_probs({9, 4}, {0.3, 0.3}, 0.1) == 4);
  // uniform 2+2 hod head: inliers 0.25 each, U=0.5 -> OUT
  const auto h = head_with_biases({0, 1}, {100, 101}, LossKind::hod, {0, 0, 0, 0});
  CHECK(top1(h, {0.0}) == kOutClassId);
}

TEST_CASE("top1 is invariant to constant logit shifts") {
  auto h = head_with_biases({0, 1, 2}, {100}, LossKind::fine_only,
                            {0.3, -0.2, 0.9, 0.4});
  const int base = top1(h, {0.0});
  for (double& b : h.biases) b += 11.0;
  CHECK(top1(h, {0.0}) == base);
}

TEST_CASE("score_cases keeps the hod simplex identity") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto h = head_with_biases({0, 1, 2}, {100, 101}, LossKind::hod,
                            {0.1, -0.4, 0.2, 0.5, -0.1});
  h.feature_dim = 3;
  h.weights.assign(5 * 3, 0.0);
  for (double& w : h.weights) w = dist(rng);
  std::vector<ScoredCase> cases;
  for (int i = 0; i < 10; ++i) {
    ScoredCase c;
    c.case_id = i;
    c.feature = {dist(rng), dist(rng), dist(rng)};
    cases.push_back(c);
  }
  const auto scores = score_cases(h, cases);
  for (size_t i = 0; i < scores.size(); ++i) {
    double total = scores.ood[i];
    for (double p : scores.inlier_probs[i]) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(scores.confidence[i] == doctest::Approx(1.0 - scores.ood[i]).epsilon(1e-12));
  }
  write_scoreset_csv("scoreset_io_test.csv", scores);
}

TEST_CASE("fit_gaussians means and degenerate scatter") {
  const auto bank =
      fit_gaussians({{0.0, 0.0}, {2.0, 0.0}}, {5, 5}, 1e-3);
  CHECK(bank.means[0][0] == doctest::Approx(1.0));
  CHECK(bank.means[0][1] == doctest::Approx(0.0));

  // identical points in a class: covariance = ridge * I
  const auto degenerate =
      fit_gaussians({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, {0, 0, 0}, 0.5);
  CHECK(degenerate.covariance[0] == doctest::Approx(0.5));
  CHECK(degenerate.covariance[1] == doctest::Approx(0.0));
  CHECK(degenerate.covariance[3] == doctest::Approx(0.5));

  CHECK_THROWS_AS(fit_gaussians({{0.0}, {1.0}, {2.0}}, {0, 0, 1}, 1e-3),
                  DegenerateClass);
}

TEST_CASE("fit_gaussians matches a hand-pooled covariance") {
  // class A: (0,0),(2,0),(1,3); class B: (5,5),(7,5),(6,8)
  const std::vector<std::vector<double>> pts = {
      {0, 0}, {2, 0}, {1, 3}, {5, 5}, {7, 5}, {6, 8}};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  const auto bank = fit_gaussians(pts, labels, 0.0);
  // both classes share scatter [[2,0],[0,6]], pooled over N-K = 4
  CHECK(bank.covariance[0] == doctest::Approx(4.0 / 4.0));
  CHECK(bank.covariance[1] == doctest::Approx(0.0));
  CHECK(bank.covariance[3] == doctest::Approx(12.0 / 4.0));
}

TEST_CASE("mahalanobis score basics") {
  const std::vector<std::vector<double>> pts = {
      {0, 0}, {2, 0}, {1, 3}, {5, 5}, {7, 5}, {6, 8}};
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
  const auto bank = fit_gaussians(pts, labels, 1e-6);
  CHECK(ood_score_mahalanobis(bank, bank.means[0]) == doctest::Approx(0.0));
  CHECK(ood_score_mahalanobis(bank, bank.means[1]) == doctest::Approx(0.0));
  CHECK(ood_score_mahalanobis(bank, {100.0, 100.0}) > 0.0);
  CHECK_THROWS_AS(ood_score_mahalanobis(bank, {0.0}), InvalidInput);
}

TEST_CASE("identity covariance reduces to squared euclidean distance") {
  GaussianBank bank;
  bank.dim = 2;
  bank.class_ids = {0, 1};
  bank.means = {{0.0, 0.0}, {4.0, 0.0}};
  bank.covariance = {1, 0, 0, 1};
  bank.cholesky = {1, 0, 0, 1};
  CHECK(ood_score_mahalanobis(bank, {1.0, 1.0}) == doctest::Approx(2.0));
  CHECK(ood_score_mahalanobis(bank, {3.0, 0.0}) == doctest::Approx(1.0));
}

TEST_CASE("mahalanobis is invariant under invertible linear maps") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 8; ++i) {
        pts.push_back({dist(rng) + 3 * c, dist(rng), dist(rng) - c});
        labels.push_back(c);
      }
    // random map with a diagonal bump to keep it invertible
    double a[3][3];
    for (auto& row : a)
      for (double& v : row) v = dist(rng) * 0.3;
    for (int k = 0; k < 3; ++k) a[k][k] += 1.5;
    auto apply = [&](const std::vector<double>& x) {
      std::vector<double> y(3, 0.0);
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) y[r] += a[r][k] * x[k];
      return y;
    };
    std::vector<std::vector<double>> mapped;
    for (const auto& p : pts) mapped.push_back(apply(p));
    const auto bank = fit_gaussians(pts, labels, 1e-12);
    const auto mapped_bank = fit_gaussians(mapped, labels, 1e-12);
    const std::vector<double> probe = {dist(rng), dist(rng), dist(rng)};
    const double d0 = ood_score_mahalanobis(bank, probe);
    const double d1 = ood_score_mahalanobis(mapped_bank, apply(probe));
    CHECK(d0 == doctest::Approx(d1).epsilon(1e-6));
  }
}

TEST_CASE("mahalanobis scoresets pick the nearest class") {
  const std::vector<std::vector<double>> pts = {
      {0, 0}, {1, 0}, {10, 10}, {11, 10}};
  const auto bank = fit_gaussians(pts, {3, 3, 8, 8}, 1e-3);
  const auto scores = score_cases_mahalanobis(
      bank, {{0, {0.2, 0.1}}, {1, {10.3, 10.0}}});
  CHECK(scores.top1[0] == 3);
  CHECK(scores.top1[1] == 8);
  CHECK(scores.ood[0] >= 0.0);
  CHECK(scores.confidence[0] == doctest::Approx(-scores.ood[0]));
}
