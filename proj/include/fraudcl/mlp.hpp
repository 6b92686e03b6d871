#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudcl {

enum class Activation { Relu };

/// Fully connected network: ReLU on hidden layers, identity on the output.
/// `projection_dims`, when non-empty, describes a head g() stacked on the
/// encoder output; it starts at layer_dims.back().
struct MlpSpec {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::Relu;
  std::vector<std::size_t> projection_dims;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  bool has_projection() const noexcept { return !projection_dims.empty(); }

  void validate() const {
    auto check = [](const std::vector<std::size_t>& dims, const char* what) {
      if (dims.size() < 2) throw ConfigError(std::string(what) + " needs at least 2 dims");
      for (auto d : dims) {
        if (d < 1) throw ConfigError(std::string(what) + " dims must be >= 1");
      }
    };
    check(layer_dims, "layer_dims");
    if (has_projection()) {
      check(projection_dims, "projection_dims");
      if (projection_dims.front() != layer_dims.back()) {
        throw ConfigError("projection head input must equal the embedding dim");
      }
    }
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const auto& l : layers) d.push_back(l.out_dim());
    return d;
  }

  /// Mutable views of every weight and bias tensor, in layer order.
  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> t;
    for (auto& l : layers) {
      t.emplace_back(l.weight.values());
      t.emplace_back(l.bias);
    }
    return t;
  }
  std::vector<std::span<const double>> tensors() const {
    std::vector<std::span<const double>> t;
    for (const auto& l : layers) {
      t.emplace_back(l.weight.values());
      t.emplace_back(l.bias);
    }
    return t;
  }

  bool all_finite() const {
    for (auto t : tensors()) {
      for (double v : t) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Glorot-uniform weights, zero biases.
inline MlpParams init_params(std::span<const std::size_t> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("network needs at least 2 dims");
  std::mt19937_64 rng(seed);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.values()) w = u(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline MlpParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  return init_params(spec.layer_dims, seed);
}

inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  for (const auto& l : p.layers) {
    z.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
  }
  return z;
}

struct MlpCache {
  std::vector<Matrix> inputs;       // input to layer l
  std::vector<Matrix> preactivation;  // affine output of layer l
};

struct MlpGrads {
  MlpParams params;
  Matrix input;
};

inline std::pair<Matrix, MlpCache> forward(const MlpParams& params, const Matrix& batch) {
  if (params.layers.empty()) throw ConfigError("empty network");
  if (batch.cols() != params.input_dim()) {
    throw DataError("dimension mismatch: batch has " + std::to_string(batch.cols()) +
                    " columns, network expects " + std::to_string(params.input_dim()));
  }
  MlpCache cache;
  Matrix a = batch;
  const std::size_t n_layers = params.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = params.layers[l];
    Matrix z(a.rows(), layer.out_dim());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      auto x = a.row(r);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        z(r, o) = dot(layer.weight.row(o), x) + layer.bias[o];
      }
    }
    cache.inputs.push_back(std::move(a));
    if (l + 1 < n_layers) {
      a = z;
      for (double& v : a.values()) v = v > 0.0 ? v : 0.0;
    } else {
      a = z;
    }
    cache.preactivation.push_back(std::move(z));
  }
  return {std::move(a), std::move(cache)};
}

inline std::pair<Matrix, MlpCache> forward(const MlpParams& params, const MlpSpec& spec,
                                           const Matrix& batch) {
  if (params.dims() != spec.layer_dims) throw DataError("parameters do not match spec");
  return forward(params, batch);
}

/// Reverse-mode pass for d(loss)/d(output) = `upstream`.
inline MlpGrads backward(const MlpParams& params, const MlpCache& cache, const Matrix& upstream) {
  const std::size_t n_layers = params.layers.size();
  if (cache.inputs.size() != n_layers || cache.preactivation.size() != n_layers) {
    throw DataError("cache does not match network depth");
  }
  if (upstream.rows() != cache.preactivation.back().rows() ||
      upstream.cols() != params.output_dim()) {
    throw DataError("upstream gradient shape does not match cached forward pass");
  }
  MlpGrads g{zeros_like(params), {}};
  Matrix delta = upstream;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = params.layers[li];
    const Matrix& x = cache.inputs[li];
    if (li + 1 < n_layers) {
      const Matrix& z = cache.preactivation[li];
      auto dv = delta.values();
      auto zv = z.values();
      for (std::size_t k = 0; k < dv.size(); ++k) {
        if (!(zv[k] > 0.0)) dv[k] = 0.0;
      }
    }
    auto& gl = g.params.layers[li];
    Matrix dx(x.rows(), layer.in_dim());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto xr = x.row(r);
      auto dxr = dx.row(r);
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const double d = delta(r, o);
        if (d == 0.0) continue;
        gl.bias[o] += d;
        auto gw = gl.weight.row(o);
        auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < xr.size(); ++i) {
          gw[i] += d * xr[i];
          dxr[i] += d * w[i];
        }
      }
    }
    delta = std::move(dx);
  }
  g.input = std::move(delta);
  return g;
}

inline MlpGrads backward(const MlpParams& params, const MlpSpec& spec, const MlpCache& cache,
                         const Matrix& upstream) {
  if (params.dims() != spec.layer_dims) throw DataError("parameters do not match spec");
  return backward(params, cache, upstream);
}

inline void accumulate(MlpParams& into, const MlpParams& g) {
  auto dst = into.tensors();
  auto src = g.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
  }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment{};
  std::vector<std::vector<double>> second_moment{};
};

inline void adam_step(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads, AdamState& state) {
  if (params.size() != grads.size()) throw DataError("parameter/gradient tensor count mismatch");
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (params[t].size() != grads[t].size()) throw DataError("parameter/gradient shape mismatch");
    for (std::size_t i = 0; i < grads[t].size(); ++i) {
      if (!std::isfinite(grads[t][i])) {
        throw NumericError("non-finite gradient in tensor " + std::to_string(t) + " at index " +
                           std::to_string(i) + " (step " + std::to_string(state.step_count) + ")");
      }
    }
  }
  if (state.first_moment.empty()) {
    for (auto g : grads) {
      state.first_moment.emplace_back(g.size(), 0.0);
      state.second_moment.emplace_back(g.size(), 0.0);
    }
  } else if (state.first_moment.size() != grads.size()) {
    throw DataError("optimizer state does not match parameter tensors");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != grads[k].size()) throw DataError("optimizer moment shape mismatch");
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      params[k][i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  auto p = params.tensors();
  auto g = grads.tensors();
  adam_step(p, g, state);
  if (!params.all_finite()) throw NumericError("non-finite parameter after Adam step");
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MlpSpec& s) {
  return {{"layer_dims", s.layer_dims},
          {"activation", "relu"},
          {"projection_dims", s.projection_dims}};
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
  if (j.contains("activation") && j.at("activation").get<std::string>() != "relu") {
    throw ConfigError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
  }
  if (j.contains("projection_dims")) {
    s.projection_dims = j.at("projection_dims").get<std::vector<std::size_t>>();
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const MlpParams& p) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& l : p.layers) {
    weights.push_back(l.weight.storage());
    biases.push_back(l.bias);
  }
  return {{"dims", p.dims()}, {"weights", weights}, {"biases", biases}};
}

inline MlpParams mlp_params_from_json(const nlohmann::json& j) {
  auto dims = j.at("dims").get<std::vector<std::size_t>>();
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (dims.size() < 2 || weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1) {
    throw DataError("network JSON: layer count mismatch");
  }
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    auto w = weights[l].get<std::vector<double>>();
    auto b = biases[l].get<std::vector<double>>();
    if (w.size() != dims[l] * dims[l + 1] || b.size() != dims[l + 1]) {
      throw DataError("network JSON: tensor shape mismatch in layer " + std::to_string(l));
    }
    p.layers.push_back({Matrix(dims[l + 1], dims[l], std::move(w)), std::move(b)});
  }
  if (!p.all_finite()) throw DataError("network JSON: non-finite parameter");
  return p;
}

}  // namespace fraudcl
