#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudcl {

/// Stochastic perturbations applied to standardized rows, in the fixed order
/// additive noise -> amount jitter -> feature mask.
struct AugmentConfig {
  double noise_std = 0.1;
  double scale_jitter = 0.2;
  double mask_prob = 0.1;
  std::vector<std::size_t> amount_features{0};
  std::uint64_t seed = 0;

  bool jitter_enabled() const noexcept { return scale_jitter > 0.0 && !amount_features.empty(); }

  void validate() const {
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be >= 0");
    if (!(scale_jitter >= 0.0 && scale_jitter < 1.0)) throw ConfigError("scale_jitter must be in [0, 1)");
    if (!(mask_prob >= 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must be in [0, 1)");
    if (noise_std == 0.0 && !jitter_enabled() && mask_prob == 0.0) {
      throw ConfigError("degenerate augmentation: noise, jitter and mask are all disabled");
    }
  }
};

struct ViewPair {
  FeatureMatrix view_a;
  FeatureMatrix view_b;
};

namespace detail {

inline FeatureMatrix augment_view(const FeatureMatrix& batch, const AugmentConfig& cfg,
                                  std::uint64_t stream) {
  std::mt19937_64 rng(stream);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
  std::bernoulli_distribution mask(cfg.mask_prob);

  FeatureMatrix v = batch;
  if (cfg.noise_std > 0.0) {
    for (double& x : v.values()) x += cfg.noise_std * noise(rng);
  }
  if (cfg.jitter_enabled()) {
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (auto c : cfg.amount_features) v(r, c) *= jitter(rng);
    }
  }
  if (cfg.mask_prob > 0.0) {
    for (double& x : v.values()) {
      if (mask(rng)) x = 0.0;
    }
  }
  return v;
}

}  // namespace detail

/// Two independent augmented views of `batch`. `rng_state` fully determines
/// the output; the views draw from disjoint substreams of it.
inline ViewPair make_views(const FeatureMatrix& batch, const AugmentConfig& cfg,
                           std::uint64_t rng_state) {
  cfg.validate();
  if (batch.rows() == 0 || batch.cols() == 0) throw DataError("cannot augment an empty batch");
  for (auto c : cfg.amount_features) {
    if (c >= batch.cols()) throw ConfigError("amount feature index out of range");
  }
  return {detail::augment_view(batch, cfg, derive_seed(rng_state, "view_a")),
          detail::augment_view(batch, cfg, derive_seed(rng_state, "view_b"))};
}

/// Noise-only view with standard deviation `eps`; true when every entry stays
/// within 3 eps sqrt(2 ln(N D)) of the source.
inline bool augmentation_identity_check(const FeatureMatrix& batch, double eps,
                                        std::uint64_t rng_state = 0) {
  AugmentConfig cfg;
  cfg.noise_std = eps;
  cfg.scale_jitter = 0.0;
  cfg.mask_prob = 0.0;
  cfg.amount_features.clear();
  if (eps == 0.0) return true;
  auto views = make_views(batch, cfg, rng_state);
  const double cells = std::max<double>(2.0, static_cast<double>(batch.rows() * batch.cols()));
  const double bound = 3.0 * eps * std::sqrt(2.0 * std::log(cells));
  const auto& src = batch.values();
  const auto& va = views.view_a.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (std::abs(va[i] - src[i]) > bound) return false;
  }
  return true;
}

inline nlohmann::json to_json(const AugmentConfig& c) {
  return {{"noise_std", c.noise_std},
          {"scale_jitter", c.scale_jitter},
          {"mask_prob", c.mask_prob},
          {"amount_features", c.amount_features},
          {"seed", c.seed}};
}

inline AugmentConfig augment_config_from_json(const nlohmann::json& j, AugmentConfig base = {}) {
  if (j.contains("noise_std")) base.noise_std = j.at("noise_std").get<double>();
  if (j.contains("scale_jitter")) base.scale_jitter = j.at("scale_jitter").get<double>();
  if (j.contains("mask_prob")) base.mask_prob = j.at("mask_prob").get<double>();
  if (j.contains("amount_features")) {
    base.amount_features = j.at("amount_features").get<std::vector<std::size_t>>();
  }
  if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  return base;
}

}  // namespace fraudcl
