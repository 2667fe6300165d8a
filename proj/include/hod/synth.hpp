#pragma once

#include <cstdint>
#include <vector>

#include "hod/core.hpp"

// Seeded long-tail embedding dataset generator plus fixed random "view"
// encoders standing in for different pre-trained feature extractors.

namespace hod {

struct SynthConfig {
  int num_inlier_classes = 10;
  int num_outlier_classes = 60;
  double zipf_exponent = 0.8;
  int inlier_min_count = 40;  // n_min of the generated condition table
  int latent_dim = 16;
  int feature_dim = 32;
  double class_separation = 3.0;
  double instance_noise = 1.0;
  int num_views = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Fixed tanh map from latent space to one feature view. Weights are a pure
// function of (benchmark seed, view_id).
struct ViewEncoder {
  int view_id = 0;
  int latent_dim = 0;
  int feature_dim = 0;
  std::vector<double> weights;  // feature_dim x latent_dim, row-major
  std::vector<double> bias;     // feature_dim

  std::vector<double> encode(const std::vector<double>& latent) const;
};

ViewEncoder make_view_encoder(const SynthConfig& cfg, int view_id);

// Long-tail dataset in latent space: Zipf class frequencies rescaled so
// exactly num_inlier_classes classes reach n_min, prototypes from one shared
// isotropic Gaussian (outliers differ semantically, not covariately).
Dataset generate_longtail_dataset(const SynthConfig& cfg);

// Maps every instance of a case through the view encoder; metadata unchanged.
LabeledCase encode_view(const LabeledCase& latent_case, const ViewEncoder& view);
Dataset encode_view(const Dataset& latent_ds, const ViewEncoder& view);

}  // namespace hod
