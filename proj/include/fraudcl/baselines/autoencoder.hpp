#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"
#include "fraudcl/mlp.hpp"

namespace fraudcl {

/// Encoder [D, ..., b] and mirrored decoder [b, ..., D], trained on
/// mean-squared reconstruction error.
struct AutoencoderModel {
  MlpSpec encoder_spec;
  MlpSpec decoder_spec;
  MlpParams encoder;
  MlpParams decoder;

  Matrix reconstruct(const FeatureMatrix& x) const {
    return forward(decoder, forward(encoder, x).first).first;
  }

  friend bool operator==(const AutoencoderModel&, const AutoencoderModel&) = default;
};

struct AutoencoderConfig {
  std::vector<std::size_t> hidden_dims{64};
  std::size_t bottleneck = 4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
};

inline MlpSpec autoencoder_encoder_spec(std::size_t input_dim, const AutoencoderConfig& cfg) {
  MlpSpec s;
  s.layer_dims.push_back(input_dim);
  s.layer_dims.insert(s.layer_dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  s.layer_dims.push_back(cfg.bottleneck);
  return s;
}

inline AutoencoderModel init_autoencoder(const MlpSpec& encoder_spec, std::uint64_t seed) {
  encoder_spec.validate();
  if (encoder_spec.output_dim() >= encoder_spec.input_dim()) {
    throw ConfigError("autoencoder bottleneck must be smaller than the input dim");
  }
  AutoencoderModel m;
  m.encoder_spec = encoder_spec;
  m.decoder_spec.layer_dims.assign(encoder_spec.layer_dims.rbegin(), encoder_spec.layer_dims.rend());
  m.encoder = init_params(m.encoder_spec, derive_seed(seed, "ae_encoder"));
  m.decoder = init_params(m.decoder_spec, derive_seed(seed, "ae_decoder"));
  return m;
}

struct AutoencoderGradients {
  double loss = 0.0;  // mean over rows and features
  MlpParams encoder;
  MlpParams decoder;
};

inline AutoencoderGradients autoencoder_gradients(const AutoencoderModel& m, const FeatureMatrix& x) {
  auto [code, enc_cache] = forward(m.encoder, x);
  auto [recon, dec_cache] = forward(m.decoder, code);
  const double cells = static_cast<double>(x.rows() * x.cols());
  Matrix d(recon.rows(), recon.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < d.values().size(); ++i) {
    const double r = recon.values()[i] - x.values()[i];
    loss += r * r;
    d.values()[i] = 2.0 * r / cells;
  }
  auto gd = backward(m.decoder, dec_cache, d);
  auto ge = backward(m.encoder, enc_cache, gd.input);
  return {loss / cells, std::move(ge.params), std::move(gd.params)};
}

inline AutoencoderModel autoencoder_fit(const FeatureMatrix& data, const MlpSpec& encoder_spec,
                                        const AutoencoderConfig& cfg, std::uint64_t seed,
                                        std::vector<double>* epoch_loss = nullptr) {
  if (data.cols() != encoder_spec.input_dim()) throw DataError("autoencoder: dimension mismatch");
  if (cfg.batch_size < 1) throw ConfigError("autoencoder batch_size must be >= 1");
  AutoencoderModel m = init_autoencoder(encoder_spec, seed);
  AdamState enc_state;
  enc_state.lr = cfg.learning_rate;
  AdamState dec_state;
  dec_state.lr = cfg.learning_rate;
  std::vector<std::size_t> order(data.rows());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0xAE5u, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      auto batch = data.select_rows(std::span<const std::size_t>(order.data() + start, stop - start));
      auto g = autoencoder_gradients(m, batch);
      if (!std::isfinite(g.loss)) {
        throw NumericError("autoencoder: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam_step(m.encoder, g.encoder, enc_state);
      adam_step(m.decoder, g.decoder, dec_state);
      sum += g.loss;
      ++batches;
    }
    if (epoch_loss) epoch_loss->push_back(sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
  }
  return m;
}

inline AutoencoderModel autoencoder_fit(const FeatureMatrix& data, const AutoencoderConfig& cfg,
                                        std::uint64_t seed) {
  return autoencoder_fit(data, autoencoder_encoder_spec(data.cols(), cfg), cfg, seed);
}

/// Per-row mean squared reconstruction error.
inline std::vector<double> autoencoder_score(const AutoencoderModel& m, const FeatureMatrix& query) {
  if (query.cols() != m.encoder_spec.input_dim()) throw DataError("autoencoder: dimension mismatch");
  const Matrix recon = m.reconstruct(query);
  std::vector<double> out(query.rows());
  for (std::size_t r = 0; r < query.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < query.cols(); ++c) {
      const double d = recon(r, c) - query(r, c);
      s += d * d;
    }
    out[r] = s / static_cast<double>(query.cols());
  }
  return out;
}

inline nlohmann::json to_json(const AutoencoderModel& m) {
  return {{"format_version", 1},
          {"model_type", "autoencoder"},
          {"encoder_spec", to_json(m.encoder_spec)},
          {"decoder_spec", to_json(m.decoder_spec)},
          {"encoder", to_json(m.encoder)},
          {"decoder", to_json(m.decoder)}};
}

inline AutoencoderModel autoencoder_from_json(const nlohmann::json& j) {
  if (j.value("model_type", "") != "autoencoder") throw DataError("not an autoencoder model file");
  AutoencoderModel m;
  m.encoder_spec = mlp_spec_from_json(j.at("encoder_spec"));
  m.decoder_spec = mlp_spec_from_json(j.at("decoder_spec"));
  m.encoder = mlp_params_from_json(j.at("encoder"));
  m.decoder = mlp_params_from_json(j.at("decoder"));
  if (m.encoder.dims() != m.encoder_spec.layer_dims || m.decoder.dims() != m.decoder_spec.layer_dims) {
    throw DataError("autoencoder JSON: parameters do not match specs");
  }
  return m;
}

}  // namespace fraudcl
