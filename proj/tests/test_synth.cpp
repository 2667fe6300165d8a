#include <doctest.h>

#include <map>

#include "hod/synth.hpp"

using namespace hod;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.num_inlier_classes = 10;
  cfg.num_outlier_classes = 60;
  cfg.zipf_exponent = 0.8;
  cfg.inlier_min_count = 20;
  cfg.latent_dim = 8;
  cfg.feature_dim = 16;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const auto cfg = small_config();
  const Dataset a = generate_longtail_dataset(cfg);
  const Dataset b = generate_longtail_dataset(cfg);
  REQUIRE(a.cases.size() == b.cases.size());
  for (size_t i = 0; i < a.cases.size(); ++i) {
    CHECK(a.cases[i].case_id == b.cases[i].case_id);
    CHECK(a.cases[i].patient_id == b.cases[i].patient_id);
    CHECK(a.cases[i].skin_type == b.cases[i].skin_type);
    CHECK(a.cases[i].instances == b.cases[i].instances);
  }
  SynthConfig other = cfg;
  other.seed = 8;
  const Dataset c = generate_longtail_dataset(other);
  CHECK(c.cases.front().instances != a.cases.front().instances);
}

TEST_CASE("class histogram is non-increasing by rank and split by n_min") {
  const Dataset ds = generate_longtail_dataset(small_config());
  std::map<int, long> counts;
  for (const auto& c : ds.cases) ++counts[c.condition_id];
  long prev = -1;
  for (const auto& cond : ds.table.conditions) {
    CHECK(counts[cond.id] == cond.sample_count);
    if (prev >= 0) CHECK(cond.sample_count <= prev);
    prev = cond.sample_count;
    if (cond.status == ConditionStatus::inlier)
      CHECK(cond.sample_count >= ds.table.n_min);
    else
      CHECK(cond.sample_count < ds.table.n_min);
  }
  CHECK(ds.table.inlier_ids().size() == 10);
  CHECK(ds.table.outlier_ids().size() == 60);
}

TEST_CASE("flat zipf exponent cannot satisfy the inlier count constraint") {
  auto cfg = small_config();
  cfg.zipf_exponent = 0.0;
  CHECK_THROWS_AS(generate_longtail_dataset(cfg), ConfigError);
  // positive but numerically flat: every class count lands on n_min
  cfg.zipf_exponent = 1e-300;
  CHECK_THROWS_AS(generate_longtail_dataset(cfg), ConfigError);
}

TEST_CASE("view encoders are deterministic and view-dependent") {
  const auto cfg = small_config();
  const auto v0 = make_view_encoder(cfg, 0);
  const auto v0b = make_view_encoder(cfg, 0);
  const auto v1 = make_view_encoder(cfg, 1);
  const Dataset ds = generate_longtail_dataset(cfg);
  const auto& c = ds.cases.front();
  CHECK(encode_view(c, v0).instances == encode_view(c, v0b).instances);
  CHECK(encode_view(c, v0).instances != encode_view(c, v1).instances);
  CHECK(encode_view(c, v0).condition_id == c.condition_id);
  CHECK(encode_view(c, v0).instances.front().size() == 16);
}

TEST_CASE("zero latent with zero bias maps to zero feature") {
  auto cfg = small_config();
  ViewEncoder v = make_view_encoder(cfg, 0);
  std::fill(v.bias.begin(), v.bias.end(), 0.0);
  const std::vector<double> zero(cfg.latent_dim, 0.0);
  for (double f : v.encode(zero)) CHECK(f == 0.0);
}

TEST_CASE("view encoder rejects dimension mismatch") {
  const auto v = make_view_encoder(small_config(), 0);
  CHECK_THROWS_AS(v.encode(std::vector<double>(3, 0.0)), InvalidInput);
}
