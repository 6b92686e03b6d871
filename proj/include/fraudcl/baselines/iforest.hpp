#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudcl {

/// Average path length of an unsuccessful BST search over n points.
inline double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n <= 2.0) return 1.0;
  constexpr double kEulerGamma = 0.5772156649015329;
  return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

/// s = 2^(-E[h(x)] / c(psi)).
inline double isolation_score_from_path(double mean_path, std::size_t subsample_size) {
  return std::exp2(-mean_path / average_path_length(static_cast<double>(subsample_size)));
}

struct IsolationNode {
  int feature = -1;  // -1 marks a leaf
  double split = 0.0;
  int left = -1;
  int right = -1;
  std::size_t size = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const IsolationNode&, const IsolationNode&) = default;
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;  // nodes[0] is the root

  /// Edges from root to the leaf reached by x, plus c(size) for leaves that
  /// still hold more than one training point.
  double path_length(std::span<const double> x) const {
    int id = 0;
    double depth = 0.0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(id)];
      id = x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
      depth += 1.0;
    }
    return depth + average_path_length(static_cast<double>(nodes[static_cast<std::size_t>(id)].size));
  }

  std::size_t height() const { return height_from(0); }

  friend bool operator==(const IsolationTree&, const IsolationTree&) = default;

 private:
  std::size_t height_from(int id) const {
    const auto& n = nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(height_from(n.left), height_from(n.right));
  }
};

struct IsolationForestModel {
  std::size_t n_trees = 0;
  std::size_t subsample_size = 0;
  std::size_t n_features = 0;
  std::uint64_t seed = 0;
  bool subsample_clamped = false;
  std::vector<IsolationTree> trees;
};

namespace detail {

inline int grow_isolation_node(IsolationTree& tree, const FeatureMatrix& data,
                               std::vector<std::size_t>& rows, std::size_t begin, std::size_t end,
                               std::size_t depth, std::size_t height_limit, std::mt19937_64& rng) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({-1, 0.0, -1, -1, end - begin});
  if (end - begin <= 1 || depth >= height_limit) return id;

  // Only features with spread inside this node can separate its points.
  std::vector<std::size_t> candidates;
  std::vector<std::pair<double, double>> ranges;
  for (std::size_t f = 0; f < data.cols(); ++f) {
    double lo = data(rows[begin], f);
    double hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = std::min(lo, data(rows[i], f));
      hi = std::max(hi, data(rows[i], f));
    }
    if (hi > lo) {
      candidates.push_back(f);
      ranges.emplace_back(lo, hi);
    }
  }
  if (candidates.empty()) return id;

  const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
  const std::size_t f = candidates[pick];
  const auto [lo, hi] = ranges[pick];
  double split = std::uniform_real_distribution<double>(lo, hi)(rng);
  if (!(split > lo)) split = std::nextafter(lo, hi);

  auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                               rows.begin() + static_cast<std::ptrdiff_t>(end),
                               [&](std::size_t r) { return data(r, f) < split; });
  const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
  const int left = grow_isolation_node(tree, data, rows, begin, mid, depth + 1, height_limit, rng);
  const int right = grow_isolation_node(tree, data, rows, mid, end, depth + 1, height_limit, rng);
  auto& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = static_cast<int>(f);
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

}  // namespace detail

/// Grows one isolation tree over `rows` of `data`. Construction depends only
/// on the set of rows and the RNG stream, not on the order of `rows`.
inline IsolationTree build_isolation_tree(const FeatureMatrix& data, std::vector<std::size_t> rows,
                                          std::size_t height_limit, std::mt19937_64& rng) {
  IsolationTree tree;
  if (rows.empty()) throw DataError("isolation tree needs at least one row");
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    auto ra = data.row(a);
    auto rb = data.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  detail::grow_isolation_node(tree, data, rows, 0, rows.size(), 0, height_limit, rng);
  return tree;
}

inline std::size_t isolation_height_limit(std::size_t subsample_size) {
  return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(subsample_size))));
}

/// n_trees trees, each on a size-psi subsample drawn without replacement.
/// psi larger than N is clamped to N (flagged on the model).
inline IsolationForestModel iforest_fit(const FeatureMatrix& data, std::size_t n_trees,
                                        std::size_t subsample_size, std::uint64_t seed) {
  if (data.rows() < 2) throw DataError("isolation forest needs at least 2 rows");
  if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (subsample_size < 2) throw ConfigError("subsample size must be >= 2");
  IsolationForestModel model;
  model.n_trees = n_trees;
  model.seed = seed;
  model.n_features = data.cols();
  model.subsample_size = subsample_size;
  if (subsample_size > data.rows()) {
    std::clog << "warning: isolation forest subsample size " << subsample_size
              << " exceeds row count; clamped to " << data.rows() << '\n';
    model.subsample_size = data.rows();
    model.subsample_clamped = true;
  }
  const std::size_t limit = isolation_height_limit(model.subsample_size);
  std::vector<std::size_t> all(data.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::mt19937_64 rng(derive_seed(seed, 0x1F0Eu, t));
    std::vector<std::size_t> sample;
    sample.reserve(model.subsample_size);
    std::sample(all.begin(), all.end(), std::back_inserter(sample), model.subsample_size, rng);
    model.trees.push_back(build_isolation_tree(data, std::move(sample), limit, rng));
  }
  return model;
}

inline std::vector<double> iforest_mean_path(const IsolationForestModel& model,
                                             const FeatureMatrix& query) {
  if (query.cols() != model.n_features) throw DataError("isolation forest: dimension mismatch");
  std::vector<double> out(query.rows(), 0.0);
  for (std::size_t r = 0; r < query.rows(); ++r) {
    double sum = 0.0;
    for (const auto& tree : model.trees) sum += tree.path_length(query.row(r));
    out[r] = sum / static_cast<double>(model.trees.size());
  }
  return out;
}

/// Anomaly score in (0, 1); higher = shorter average isolation path.
inline std::vector<double> iforest_score(const IsolationForestModel& model,
                                         const FeatureMatrix& query) {
  auto paths = iforest_mean_path(model, query);
  for (double& p : paths) p = isolation_score_from_path(p, model.subsample_size);
  return paths;
}

inline nlohmann::json to_json(const IsolationForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.split, n.left, n.right, n.size});
    trees.push_back(std::move(nodes));
  }
  return {{"format_version", 1},
          {"model_type", "iforest"},
          {"n_trees", m.n_trees},
          {"subsample_size", m.subsample_size},
          {"n_features", m.n_features},
          {"seed", m.seed},
          {"subsample_clamped", m.subsample_clamped},
          {"trees", trees}};
}

inline IsolationForestModel iforest_from_json(const nlohmann::json& j) {
  if (j.value("model_type", "") != "iforest") throw DataError("not an isolation forest model file");
  IsolationForestModel m;
  m.n_trees = j.at("n_trees").get<std::size_t>();
  m.subsample_size = j.at("subsample_size").get<std::size_t>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.subsample_clamped = j.at("subsample_clamped").get<bool>();
  for (const auto& tj : j.at("trees")) {
    IsolationTree t;
    for (const auto& nj : tj) {
      t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(),
                         nj.at(3).get<int>(), nj.at(4).get<std::size_t>()});
    }
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace fraudcl
