#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/augment.hpp"
#include "fraudcl/core.hpp"
#include "fraudcl/mlp.hpp"

namespace fraudcl {

/// dot(u, v) / (|u| |v|), clamped to [-1, 1].
inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DataError("cosine similarity of vectors with different dims");
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw NumericError("undefined cosine similarity: zero-norm vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

enum class LossVariant { Paper, Simclr };

inline std::string to_string(LossVariant v) { return v == LossVariant::Paper ? "paper" : "simclr"; }

inline LossVariant parse_loss_variant(const std::string& s) {
  if (s == "paper") return LossVariant::Paper;
  if (s == "simclr") return LossVariant::Simclr;
  throw ConfigError("unknown loss_variant '" + s + "' (expected paper|simclr)");
}

struct LossResult {
  double loss = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

namespace detail {

struct Normalized {
  Matrix unit;
  std::vector<double> norms;
};

inline Normalized normalize_rows(const Matrix& m) {
  Normalized out{m, std::vector<double>(m.rows())};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm(m.row(r));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("undefined cosine similarity: zero-norm embedding row " +
                         std::to_string(r));
    }
    out.norms[r] = n;
    for (double& v : out.unit.row(r)) v /= n;
  }
  return out;
}

// Maps d(loss)/d(unit row) back through the row normalization.
inline Matrix normalize_backward(const Normalized& n, const Matrix& d_unit) {
  Matrix g(d_unit.rows(), d_unit.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto u = n.unit.row(r);
    auto du = d_unit.row(r);
    const double proj = dot(u, du);
    for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = (du[c] - u[c] * proj) / n.norms[r];
  }
  return g;
}

inline void check_pair(const Matrix& a, const Matrix& b, double tau) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("view embeddings are not aligned");
  if (a.rows() < 2) throw DataError("contrastive loss needs a batch of at least 2 rows");
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
}

}  // namespace detail

/// Positive-pair-only form: mean_i [ -s_i + log sum_k exp(s_k) ] with
/// s_k = sim(a_k, b_k) / tau.
inline LossResult loss_paper(const Matrix& h_a, const Matrix& h_b, double tau) {
  detail::check_pair(h_a, h_b, tau);
  const std::size_t n = h_a.rows();
  auto na = detail::normalize_rows(h_a);
  auto nb = detail::normalize_rows(h_b);
  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) s[k] = dot(na.unit.row(k), nb.unit.row(k)) / tau;
  const double smax = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - smax);
  const double lse = smax + std::log(z);
  const double mean_s = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);

  LossResult out{lse - mean_s, Matrix(n, h_a.cols()), Matrix(n, h_a.cols())};
  Matrix du_a(n, h_a.cols());
  Matrix du_b(n, h_a.cols());
  for (std::size_t k = 0; k < n; ++k) {
    const double ds = (std::exp(s[k] - lse) - 1.0 / static_cast<double>(n)) / tau;
    for (std::size_t c = 0; c < h_a.cols(); ++c) {
      du_a(k, c) = ds * nb.unit(k, c);
      du_b(k, c) = ds * na.unit(k, c);
    }
  }
  out.grad_a = detail::normalize_backward(na, du_a);
  out.grad_b = detail::normalize_backward(nb, du_b);
  return out;
}

/// NT-Xent over the 2N views: each view's positive is its counterpart, the
/// other 2N - 2 views are negatives; averaged over the 2N anchors.
inline LossResult loss_simclr(const Matrix& h_a, const Matrix& h_b, double tau) {
  detail::check_pair(h_a, h_b, tau);
  const std::size_t n = h_a.rows();
  const std::size_t m = 2 * n;
  const std::size_t e = h_a.cols();
  Matrix z(m, e);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(h_a.row(r).begin(), h_a.row(r).end(), z.row(r).begin());
    std::copy(h_b.row(r).begin(), h_b.row(r).end(), z.row(r + n).begin());
  }
  auto nz = detail::normalize_rows(z);

  Matrix sim(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double s = dot(nz.unit.row(i), nz.unit.row(j)) / tau;
      sim(i, j) = s;
      sim(j, i) = s;
    }
  }

  // dsim(i, j) = d(loss)/d(sim(i, j)) for the i-th anchor's term.
  Matrix dsim(m, m);
  double total = 0.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pos = i < n ? i + n : i - n;
    double smax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) smax = std::max(smax, sim(i, j));
    }
    double zsum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) zsum += std::exp(sim(i, j) - smax);
    }
    const double lse = smax + std::log(zsum);
    total += lse - sim(i, pos);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      dsim(i, j) = (std::exp(sim(i, j) - lse) - (j == pos ? 1.0 : 0.0)) * inv_m;
    }
  }

  Matrix du(m, e);
  for (std::size_t i = 0; i < m; ++i) {
    auto dui = du.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double w = (dsim(i, j) + dsim(j, i)) / tau;
      auto uj = nz.unit.row(j);
      for (std::size_t c = 0; c < e; ++c) dui[c] += w * uj[c];
    }
  }
  Matrix gz = detail::normalize_backward(nz, du);

  LossResult out{total * inv_m, Matrix(n, e), Matrix(n, e)};
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(gz.row(r).begin(), gz.row(r).end(), out.grad_a.row(r).begin());
    std::copy(gz.row(r + n).begin(), gz.row(r + n).end(), out.grad_b.row(r).begin());
  }
  return out;
}

inline LossResult contrastive_loss(LossVariant v, const Matrix& h_a, const Matrix& h_b, double tau) {
  return v == LossVariant::Paper ? loss_paper(h_a, h_b, tau) : loss_simclr(h_a, h_b, tau);
}

// ---------------------------------------------------------------------------
// Encoder model and training loop
// ---------------------------------------------------------------------------

struct ContrastiveConfig {
  double temperature = 0.5;
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  LossVariant loss_variant = LossVariant::Simclr;
  bool use_projection_head = true;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  }
};

struct EncoderModel {
  MlpSpec spec;
  MlpParams encoder;
  std::optional<MlpParams> projection;
  bool use_projection_head = false;
  LossVariant loss_variant = LossVariant::Simclr;
  double temperature = 0.5;

  /// Representations f(x) used for scoring; the projection head is not applied.
  EmbeddingMatrix embed(const FeatureMatrix& x) const { return forward(encoder, x).first; }

  friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_seconds;

  double final_loss() const {
    return epoch_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : epoch_loss.back();
  }
};

struct TrainResult {
  EncoderModel model;
  TrainLog log;
};

inline EncoderModel init_encoder_model(const MlpSpec& spec, const ContrastiveConfig& cfg) {
  spec.validate();
  EncoderModel m;
  m.spec = spec;
  m.encoder = init_params(spec.layer_dims, derive_seed(cfg.seed, "init_encoder"));
  m.use_projection_head = cfg.use_projection_head && spec.has_projection();
  if (m.use_projection_head) {
    m.projection = init_params(spec.projection_dims, derive_seed(cfg.seed, "init_projection"));
  }
  m.loss_variant = cfg.loss_variant;
  m.temperature = cfg.temperature;
  return m;
}

namespace detail {

struct ViewPass {
  Matrix out;
  MlpCache enc;
  std::optional<MlpCache> proj;
};

inline ViewPass run_view(const EncoderModel& m, const Matrix& x) {
  ViewPass p;
  auto [h, enc_cache] = forward(m.encoder, x);
  p.enc = std::move(enc_cache);
  if (m.use_projection_head) {
    auto [g, proj_cache] = forward(*m.projection, h);
    p.out = std::move(g);
    p.proj = std::move(proj_cache);
  } else {
    p.out = std::move(h);
  }
  return p;
}

inline void backprop_view(const EncoderModel& m, const ViewPass& p, const Matrix& upstream,
                          MlpParams& enc_grad, MlpParams* proj_grad) {
  Matrix d = upstream;
  if (m.use_projection_head) {
    auto gp = backward(*m.projection, *p.proj, d);
    accumulate(*proj_grad, gp.params);
    d = std::move(gp.input);
  }
  auto ge = backward(m.encoder, p.enc, d);
  accumulate(enc_grad, ge.params);
}

}  // namespace detail

/// Contrastive loss and parameter gradients of `model` on one pair of views.
struct ModelGradients {
  double loss = 0.0;
  MlpParams encoder;
  std::optional<MlpParams> projection;
};

inline ModelGradients model_gradients(const EncoderModel& model, const ViewPair& views) {
  auto pa = detail::run_view(model, views.view_a);
  auto pb = detail::run_view(model, views.view_b);
  auto loss = contrastive_loss(model.loss_variant, pa.out, pb.out, model.temperature);
  ModelGradients g{loss.loss, zeros_like(model.encoder), std::nullopt};
  if (model.use_projection_head) g.projection = zeros_like(*model.projection);
  MlpParams* pg = g.projection ? &*g.projection : nullptr;
  detail::backprop_view(model, pa, loss.grad_a, g.encoder, pg);
  detail::backprop_view(model, pb, loss.grad_b, g.encoder, pg);
  return g;
}

/// Seeded mini-batch contrastive training. `data` carries features only.
inline TrainResult train(const FeatureMatrix& data, const MlpSpec& spec, const AugmentConfig& aug,
                         const ContrastiveConfig& cfg) {
  cfg.validate();
  aug.validate();
  spec.validate();
  if (data.cols() != spec.input_dim()) {
    throw DataError("dimension mismatch: data has " + std::to_string(data.cols()) +
                    " columns, encoder expects " + std::to_string(spec.input_dim()));
  }
  if (!data.all_finite()) throw DataError("training data contains NaN/Inf");

  TrainResult result{init_encoder_model(spec, cfg), {}};
  EncoderModel& model = result.model;
  if (cfg.epochs == 0) return result;
  if (data.rows() < 2) throw DataError("need at least 2 training rows");

  AdamState enc_state;
  enc_state.lr = cfg.learning_rate;
  AdamState proj_state;
  proj_state.lr = cfg.learning_rate;
  std::vector<std::size_t> order(data.rows());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5348u, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2) break;
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      auto batch = data.select_rows(idx);
      auto views = make_views(batch, aug, derive_seed(aug.seed, epoch, b));
      auto g = model_gradients(model, views);
      if (!std::isfinite(g.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      adam_step(model.encoder, g.encoder, enc_state);
      if (model.use_projection_head) adam_step(*model.projection, *g.projection, proj_state);
      loss_sum += g.loss;
      ++n_batches;
    }
    const auto t1 = std::chrono::steady_clock::now();
    result.log.epoch_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(n_batches, 1)));
    result.log.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const EncoderModel& m) {
  auto enc = to_json(m.encoder);
  nlohmann::json j = {{"format_version", 1},
                      {"model_type", "contrastive"},
                      {"spec", to_json(m.spec)},
                      {"weights", enc.at("weights")},
                      {"biases", enc.at("biases")},
                      {"use_projection_head", m.use_projection_head},
                      {"projection", m.projection ? to_json(*m.projection) : nlohmann::json()},
                      {"loss_variant", to_string(m.loss_variant)},
                      {"temperature", m.temperature}};
  return j;
}

inline EncoderModel encoder_model_from_json(const nlohmann::json& j) {
  if (j.value("model_type", "") != "contrastive") throw DataError("not a contrastive model file");
  if (j.value("format_version", 0) != 1) throw DataError("unsupported model format_version");
  EncoderModel m;
  m.spec = mlp_spec_from_json(j.at("spec"));
  m.encoder = mlp_params_from_json(
      {{"dims", m.spec.layer_dims}, {"weights", j.at("weights")}, {"biases", j.at("biases")}});
  m.use_projection_head = j.at("use_projection_head").get<bool>();
  if (!j.at("projection").is_null()) m.projection = mlp_params_from_json(j.at("projection"));
  if (m.use_projection_head && !m.projection) throw DataError("model file lacks projection head");
  m.loss_variant = parse_loss_variant(j.at("loss_variant").get<std::string>());
  m.temperature = j.at("temperature").get<double>();
  return m;
}

}  // namespace fraudcl
