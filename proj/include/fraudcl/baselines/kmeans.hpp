#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudcl {

struct KMeansModel {
  std::size_t k = 0;
  Matrix centroids;  // k x D
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  // Within-cluster sum of squares after each assignment step.
  std::vector<double> inertia_history;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::pair<std::size_t, double> nearest_centroid(const Matrix& centroids,
                                                       std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(centroids.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

// k-means++ seeding: first centre uniform, then proportional to squared
// distance from the nearest chosen centre.
inline Matrix kmeans_plus_plus(const Matrix& data, std::size_t k, std::mt19937_64& rng) {
  Matrix centroids(k, data.cols());
  std::uniform_int_distribution<std::size_t> pick(0, data.rows() - 1);
  auto first = data.row(pick(rng));
  std::copy(first.begin(), first.end(), centroids.row(0).begin());
  std::vector<double> d2(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) d2[r] = squared_distance(data.row(r), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
      chosen = weighted(rng);
    } else {
      chosen = pick(rng);
    }
    auto src = data.row(chosen);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
    for (std::size_t r = 0; r < data.rows(); ++r) {
      d2[r] = std::min(d2[r], squared_distance(data.row(r), centroids.row(c)));
    }
  }
  return centroids;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations until no centroid moves by
/// more than 1e-6 or max_iter is reached. Empty clusters are re-seeded on the
/// point farthest from its assigned centroid.
inline KMeansModel kmeans_fit(const FeatureMatrix& data, std::size_t k, std::uint64_t seed,
                              std::size_t max_iter = 300) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (data.rows() < k) {
    throw DataError("k-means needs at least k rows (have " + std::to_string(data.rows()) +
                    ", k = " + std::to_string(k) + ")");
  }
  std::mt19937_64 rng(seed);
  KMeansModel model{k, detail::kmeans_plus_plus(data, k, rng), seed, 0, {}};
  Matrix& cent = model.centroids;
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);

  for (std::size_t it = 0; it < max_iter; ++it) {
    double inertia = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      auto [c, d2] = detail::nearest_centroid(cent, data.row(r));
      assign[r] = c;
      dist[r] = d2;
      inertia += d2;
    }
    model.inertia_history.push_back(inertia);

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      auto dst = sums.row(assign[r]);
      auto src = data.row(r);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[assign[r]];
    }
    Matrix next(k, d);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        for (std::size_t r = 1; r < n; ++r) {
          if (dist[r] > dist[far]) far = r;
        }
        auto src = data.row(far);
        std::copy(src.begin(), src.end(), next.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j) next(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      max_shift = std::max(max_shift, std::sqrt(detail::squared_distance(cent.row(c), next.row(c))));
    }
    cent = std::move(next);
    model.iterations = it + 1;
    if (max_shift < 1e-6) break;
  }
  return model;
}

/// Euclidean distance to the nearest centroid.
inline std::vector<double> kmeans_score(const KMeansModel& model, const FeatureMatrix& query) {
  if (query.cols() != model.centroids.cols()) throw DataError("k-means: dimension mismatch");
  std::vector<double> out(query.rows());
  for (std::size_t r = 0; r < query.rows(); ++r) {
    out[r] = std::sqrt(detail::nearest_centroid(model.centroids, query.row(r)).second);
  }
  return out;
}

inline nlohmann::json to_json(const KMeansModel& m) {
  return {{"format_version", 1},
          {"model_type", "kmeans"},
          {"k", m.k},
          {"dim", m.centroids.cols()},
          {"centroids", m.centroids.storage()},
          {"seed", m.seed},
          {"iterations", m.iterations}};
}

inline KMeansModel kmeans_from_json(const nlohmann::json& j) {
  if (j.value("model_type", "") != "kmeans") throw DataError("not a kmeans model file");
  KMeansModel m;
  m.k = j.at("k").get<std::size_t>();
  const auto dim = j.at("dim").get<std::size_t>();
  m.centroids = Matrix(m.k, dim, j.at("centroids").get<std::vector<double>>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.iterations = j.at("iterations").get<std::size_t>();
  return m;
}

}  // namespace fraudcl
