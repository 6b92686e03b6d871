#pragma once

// Central finite-difference checks (h = 1e-5) for the analytic gradients.
//
// Relative error per coordinate: |a - n| / max(|a|, |n|, kGradFloor). The
// floor keeps coordinates whose true gradient is ~0 (dead ReLU units) from
// dividing roundoff by roundoff. Coordinates where the +h and -h evaluations
// see a different ReLU on/off pattern straddle a kink, where the derivative
// does not exist; they are counted and excluded.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fraudcl/baselines/autoencoder.hpp"
#include "fraudcl/contrastive.hpp"
#include "fraudcl/mlp.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kGradFloor = 1e-6;

struct Result {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;

  void merge(const Result& o) {
    max_rel_err = std::max(max_rel_err, o.max_rel_err);
    checked += o.checked;
    kinks += o.kinks;
  }
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

using Pattern = std::vector<bool>;

/// Perturbs every coordinate of `params` in turn and compares against `analytic`.
inline Result check(std::vector<std::span<double>> params,
                    const std::vector<std::span<const double>>& analytic,
                    const std::function<double()>& loss,
                    const std::function<Pattern()>& pattern = {}) {
  Result r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      double& x = params[t][i];
      const double orig = x;
      x = orig + kStep;
      const double lp = loss();
      Pattern pp = pattern ? pattern() : Pattern{};
      x = orig - kStep;
      const double lm = loss();
      Pattern pm = pattern ? pattern() : Pattern{};
      x = orig;
      if (pp != pm) {
        ++r.kinks;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * kStep);
      r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic[t][i], numeric));
      ++r.checked;
    }
  }
  return r;
}

inline void append_pattern(Pattern& p, const fraudcl::MlpParams& net, const fraudcl::Matrix& x) {
  auto [out, cache] = fraudcl::forward(net, x);
  for (std::size_t l = 0; l + 1 < cache.preactivation.size(); ++l) {
    for (double v : cache.preactivation[l].values()) p.push_back(v > 0.0);
  }
}

inline fraudcl::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  fraudcl::Matrix m(rows, cols);
  for (double& v : m.values()) v = g(rng);
  return m;
}

/// Moves parameters off their init. Positive biases keep the narrow test
/// networks from mapping a whole row to zero, where cosine is undefined.
inline void jitter(fraudcl::MlpParams& net, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& layer : net.layers) {
    for (double& w : layer.weight.values()) w += g(rng);
    for (double& b : layer.bias) b = 0.5 + g(rng);
  }
}

/// Loss gradient with respect to both view embeddings.
inline Result loss_wrt_embeddings(fraudcl::LossVariant v, std::uint64_t seed, std::size_t n,
                                  std::size_t e, double tau) {
  std::mt19937_64 rng(seed);
  auto a = random_matrix(n, e, rng);
  auto b = random_matrix(n, e, rng);
  auto res = fraudcl::contrastive_loss(v, a, b, tau);
  return check({a.values(), b.values()}, {res.grad_a.values(), res.grad_b.values()},
               [&] { return fraudcl::contrastive_loss(v, a, b, tau).loss; });
}

/// Full encoder (+ projection head) gradient of the contrastive loss on fixed views.
inline Result contrastive_network(fraudcl::LossVariant v, std::uint64_t seed,
                                  const std::vector<std::size_t>& layer_dims,
                                  const std::vector<std::size_t>& projection_dims, std::size_t n) {
  using namespace fraudcl;
  MlpSpec spec{layer_dims, Activation::Relu, projection_dims};
  ContrastiveConfig cfg;
  cfg.seed = seed;
  cfg.loss_variant = v;
  cfg.temperature = 0.5;
  cfg.use_projection_head = !projection_dims.empty();
  auto model = init_encoder_model(spec, cfg);
  std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
  jitter(model.encoder, rng);
  if (model.projection) jitter(*model.projection, rng);
  ViewPair views{random_matrix(n, layer_dims.front(), rng), random_matrix(n, layer_dims.front(), rng)};
  auto grads = model_gradients(model, views);

  std::vector<std::span<double>> params = model.encoder.tensors();
  std::vector<std::span<const double>> analytic;
  for (auto t : std::as_const(grads.encoder).tensors()) analytic.push_back(t);
  if (model.use_projection_head) {
    for (auto t : model.projection->tensors()) params.push_back(t);
    for (auto t : std::as_const(*grads.projection).tensors()) analytic.push_back(t);
  }
  auto loss = [&] {
    auto pa = detail::run_view(model, views.view_a);
    auto pb = detail::run_view(model, views.view_b);
    return contrastive_loss(model.loss_variant, pa.out, pb.out, model.temperature).loss;
  };
  auto pattern = [&] {
    Pattern p;
    for (const auto* x : {&views.view_a, &views.view_b}) {
      append_pattern(p, model.encoder, *x);
      if (model.use_projection_head) {
        append_pattern(p, *model.projection, forward(model.encoder, *x).first);
      }
    }
    return p;
  };
  return check(params, analytic, loss, pattern);
}

/// Encoder and decoder gradients of the mean-squared reconstruction loss.
inline Result autoencoder_network(std::uint64_t seed, const std::vector<std::size_t>& encoder_dims,
                                  std::size_t n) {
  using namespace fraudcl;
  MlpSpec spec{encoder_dims, Activation::Relu, {}};
  auto model = init_autoencoder(spec, seed);
  std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
  jitter(model.encoder, rng);
  jitter(model.decoder, rng);
  auto x = random_matrix(n, encoder_dims.front(), rng);
  auto grads = autoencoder_gradients(model, x);

  std::vector<std::span<double>> params = model.encoder.tensors();
  for (auto t : model.decoder.tensors()) params.push_back(t);
  std::vector<std::span<const double>> analytic;
  for (auto t : std::as_const(grads.encoder).tensors()) analytic.push_back(t);
  for (auto t : std::as_const(grads.decoder).tensors()) analytic.push_back(t);
  auto loss = [&] { return autoencoder_gradients(model, x).loss; };
  auto pattern = [&] {
    Pattern p;
    append_pattern(p, model.encoder, x);
    append_pattern(p, model.decoder, forward(model.encoder, x).first);
    return p;
  };
  return check(params, analytic, loss, pattern);
}

struct Shape {
  std::vector<std::size_t> layer_dims;
  std::vector<std::size_t> projection_dims;
  std::size_t batch;
};

/// Three network shapes used for the encoder family; the autoencoder uses the
/// encoder part of each with the bottleneck below the input dim.
inline const std::vector<Shape>& shapes() {
  static const std::vector<Shape> s{
      {{4, 6, 3}, {3, 4, 2}, 5},
      {{6, 8, 8, 4}, {}, 4},
      {{10, 12, 5}, {5, 6, 3}, 6},
  };
  return s;
}

}  // namespace gradcheck
