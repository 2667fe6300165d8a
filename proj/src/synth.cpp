#include "hod/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hod {

namespace {

constexpr double kRiskProbs[kNumRiskLevels] = {0.6, 0.3, 0.1};
// T12, T3, T4, T56, unknown
constexpr double kSkinProbs[kNumSkinTypes] = {0.20, 0.30, 0.25, 0.10, 0.15};

template <int N>
int draw_categorical(std::mt19937_64& rng, const double (&probs)[N]) {
  std::discrete_distribution<int> dist(std::begin(probs), std::end(probs));
  return dist(rng);
}

}  // namespace

void SynthConfig::validate() const {
  if (num_inlier_classes <= 0 || num_outlier_classes <= 0)
    throw ConfigError("class counts must be positive");
  if (zipf_exponent <= 0.0) throw ConfigError("zipf_exponent must be > 0");
  if (inlier_min_count < 2) throw ConfigError("inlier_min_count must be >= 2");
  if (latent_dim <= 0 || feature_dim <= 0)
    throw ConfigError("dimensions must be positive");
  if (class_separation <= 0.0 || instance_noise <= 0.0)
    throw ConfigError("scales must be positive");
  if (num_views <= 0) throw ConfigError("num_views must be positive");
}

ViewEncoder make_view_encoder(const SynthConfig& cfg, int view_id) {
  cfg.validate();
  ViewEncoder v;
  v.view_id = view_id;
  v.latent_dim = cfg.latent_dim;
  v.feature_dim = cfg.feature_dim;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7157u, static_cast<std::uint64_t>(view_id)));
  const double gain = 0.5 / std::sqrt(static_cast<double>(cfg.latent_dim));
  std::normal_distribution<double> w_dist(0.0, gain);
  std::normal_distribution<double> b_dist(0.0, 0.2);
  v.weights.resize(static_cast<size_t>(cfg.feature_dim) * cfg.latent_dim);
  for (double& w : v.weights) w = w_dist(rng);
  v.bias.resize(cfg.feature_dim);
  for (double& b : v.bias) b = b_dist(rng);
  return v;
}

std::vector<double> ViewEncoder::encode(const std::vector<double>& latent) const {
  if (static_cast<int>(latent.size()) != latent_dim)
    throw InvalidInput("view encoder dimension mismatch");
  std::vector<double> out(feature_dim);
  for (int i = 0; i < feature_dim; ++i) {
    double z = bias[i];
    const double* row = &weights[static_cast<size_t>(i) * latent_dim];
    for (int k = 0; k < latent_dim; ++k) z += row[k] * latent[k];
    out[i] = std::tanh(z);
  }
  return out;
}

Dataset generate_longtail_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const int num_classes = cfg.num_inlier_classes + cfg.num_outlier_classes;
  const int n_min = cfg.inlier_min_count;

  // Zipf counts anchored so the rank at num_inlier_classes lands exactly on
  // n_min; every later rank must fall below it.
  std::vector<long> counts(num_classes);
  for (int r = 1; r <= num_classes; ++r) {
    const double c = n_min * std::pow(static_cast<double>(cfg.num_inlier_classes) / r,
                                      cfg.zipf_exponent);
    counts[r - 1] = std::max<long>(1, static_cast<long>(std::floor(c)));
  }
  for (int r = 0; r < num_classes; ++r) {
    const bool is_inlier = r < cfg.num_inlier_classes;
    if (is_inlier != (counts[r] >= n_min))
      throw ConfigError(
          "zipf_exponent too flat: class frequency rescaling cannot place "
          "exactly num_inlier_classes classes above n_min");
  }

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xda7au));
  std::normal_distribution<double> proto_dist(0.0, cfg.class_separation);
  std::normal_distribution<double> noise_dist(0.0, cfg.instance_noise);
  std::uniform_int_distribution<int> instance_count_dist(1, 6);
  std::uniform_int_distribution<int> patient_size_dist(1, 3);

  Dataset ds;
  ds.feature_dim = cfg.latent_dim;
  ds.table.n_min = n_min;

  int next_case_id = 0;
  int next_patient_id = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    Condition cond;
    cond.id = cls;
    cond.name = "cond_" + std::to_string(cls);
    cond.sample_count = counts[cls];
    cond.status = counts[cls] >= n_min ? ConditionStatus::inlier
                                       : ConditionStatus::outlier;
    cond.risk = static_cast<RiskLevel>(draw_categorical(rng, kRiskProbs));
    ds.table.conditions.push_back(cond);

    std::vector<double> prototype(cfg.latent_dim);
    for (double& p : prototype) p = proto_dist(rng);

    long remaining_in_patient = 0;
    for (long s = 0; s < counts[cls]; ++s) {
      if (remaining_in_patient == 0) {
        remaining_in_patient = patient_size_dist(rng);
        ++next_patient_id;
      }
      LabeledCase c;
      c.case_id = next_case_id++;
      c.patient_id = next_patient_id - 1;
      c.condition_id = cls;
      c.skin_type = static_cast<SkinType>(draw_categorical(rng, kSkinProbs));
      const int j = instance_count_dist(rng);
      c.instances.resize(j);
      for (auto& inst : c.instances) {
        inst.resize(cfg.latent_dim);
        for (int k = 0; k < cfg.latent_dim; ++k)
          inst[k] = prototype[k] + noise_dist(rng);
      }
      ds.cases.push_back(std::move(c));
      --remaining_in_patient;
    }
  }
  ds.validate();
  return ds;
}

LabeledCase encode_view(const LabeledCase& latent_case, const ViewEncoder& view) {
  LabeledCase out = latent_case;
  for (auto& inst : out.instances) inst = view.encode(inst);
  return out;
}

Dataset encode_view(const Dataset& latent_ds, const ViewEncoder& view) {
  Dataset out;
  out.feature_dim = view.feature_dim;
  out.table = latent_ds.table;
  out.cases.reserve(latent_ds.cases.size());
  for (const auto& c : latent_ds.cases) out.cases.push_back(encode_view(c, view));
  return out;
}

}  // namespace hod
