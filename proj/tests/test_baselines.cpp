#include <gtest/gtest.h>

#include "fraudcl/baselines/autoencoder.hpp"
#include "fraudcl/baselines/iforest.hpp"
#include "fraudcl/baselines/kmeans.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fraudcl;

namespace {

Matrix blobs(std::size_t per, std::uint64_t seed) {
  auto m = testutil::random_matrix(3 * per, 2, seed, 0.3);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    m(r, 0) += 5.0 * static_cast<double>(r / per);
    m(r, 1) -= 5.0 * static_cast<double>(r / per);
  }
  return m;
}

}  // namespace

TEST(KMeans, ScoresMatchDistanceOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = testutil::random_matrix(50, 4, seed);
    auto m = kmeans_fit(x, 3, seed);
    auto s = kmeans_score(m, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      EXPECT_NEAR(s[i], oracle::nearest_distance(m.centroids, x, i), 1e-12);
    }
  }
}

TEST(KMeans, RecoversSeparatedBlobsAndInertiaIsMonotone) {
  auto x = blobs(40, 2);
  auto m = kmeans_fit(x, 3, 7);
  for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
    EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-9);
  }
  for (double s : kmeans_score(m, x)) EXPECT_LT(s, 1.5);
}

TEST(KMeans, DeterministicGuardedAndSerialisable) {
  auto x = blobs(10, 3);
  auto a = kmeans_fit(x, 3, 1);
  EXPECT_EQ(kmeans_fit(x, 3, 1).centroids, a.centroids);
  EXPECT_THROW(kmeans_fit(testutil::random_matrix(2, 2, 1), 3, 1), DataError);
  EXPECT_THROW(kmeans_fit(x, 0, 1), ConfigError);
  auto j = to_json(a);
  EXPECT_EQ(j["model_type"], "kmeans");
  EXPECT_EQ(kmeans_from_json(nlohmann::json::parse(j.dump())).centroids, a.centroids);
}

TEST(IForest, AveragePathLength) {
  EXPECT_EQ(average_path_length(1), 0.0);
  EXPECT_EQ(average_path_length(2), 1.0);
  const double h = std::log(255.0) + 0.5772156649015329;
  EXPECT_NEAR(average_path_length(256), 2 * h - 2 * 255.0 / 256.0, 1e-12);
}

TEST(IForest, OutlierScoresHigherThanInliers) {
  auto x = testutil::random_matrix(300, 3, 4);
  x(0, 0) = 12.0;
  auto m = iforest_fit(x, 100, 128, 5);
  auto s = iforest_score(m, x);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[0], s[i]);
  EXPECT_GT(s[0], 0.6);
}

TEST(IForest, HeightLimitAndClamp) {
  auto x = testutil::random_matrix(40, 2, 6);
  auto m = iforest_fit(x, 10, 256, 1);
  EXPECT_TRUE(m.subsample_clamped);
  EXPECT_EQ(m.subsample_size, 40u);
  for (const auto& t : m.trees) EXPECT_LE(t.height(), isolation_height_limit(40));
}

TEST(IForest, TreeDoesNotDependOnRowOrder) {
  auto x = testutil::random_matrix(64, 3, 7);
  std::vector<std::size_t> rows(64);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::mt19937_64 r1(9), r2(9);
  auto t1 = build_isolation_tree(x, rows, 6, r1);
  std::reverse(rows.begin(), rows.end());
  auto t2 = build_isolation_tree(x, rows, 6, r2);
  EXPECT_EQ(t1, t2);
}

TEST(IForest, JsonRoundTrip) {
  auto x = testutil::random_matrix(50, 3, 8);
  auto m = iforest_fit(x, 5, 32, 2);
  auto back = iforest_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(iforest_score(back, x), iforest_score(m, x));
}

TEST(Autoencoder, ScoresMatchMseOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = testutil::random_matrix(40, 6, seed);
    AutoencoderConfig cfg;
    cfg.hidden_dims = {8};
    cfg.bottleneck = 3;
    cfg.epochs = 2;
    auto m = autoencoder_fit(x, cfg, seed);
    auto s = autoencoder_score(m, x);
    auto recon = m.reconstruct(x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      EXPECT_NEAR(s[i], oracle::row_mse(x, recon, i), 1e-12);
    }
  }
}

TEST(Autoencoder, GradientsMatchFiniteDifferences) {
  for (const auto& shape : gradcheck::shapes()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto r = gradcheck::autoencoder_network(seed, shape.layer_dims, shape.batch);
      EXPECT_LT(r.max_rel_err, 1e-4) << "seed " << seed;
    }
  }
}

TEST(Autoencoder, TrainingReducesReconstructionError) {
  auto z = testutil::random_matrix(200, 2, 3);
  Matrix x(200, 6);
  for (std::size_t r = 0; r < 200; ++r) {
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = z(r, c % 2) * (1.0 + 0.3 * c);
  }
  AutoencoderConfig cfg;
  cfg.hidden_dims = {16};
  cfg.bottleneck = 2;
  cfg.epochs = 40;
  cfg.learning_rate = 5e-3;
  std::vector<double> loss;
  autoencoder_fit(x, autoencoder_encoder_spec(6, cfg), cfg, 1, &loss);
  EXPECT_LT(loss.back(), 0.5 * loss.front());
}

TEST(Autoencoder, BottleneckMustShrink) {
  AutoencoderConfig cfg;
  cfg.bottleneck = 6;
  EXPECT_THROW(autoencoder_fit(testutil::random_matrix(10, 6, 1), cfg, 1), ConfigError);
}

TEST(Autoencoder, JsonRoundTrip) {
  auto x = testutil::random_matrix(20, 5, 2);
  AutoencoderConfig cfg;
  cfg.hidden_dims = {6};
  cfg.bottleneck = 2;
  cfg.epochs = 1;
  auto m = autoencoder_fit(x, cfg, 3);
  auto j = to_json(m);
  EXPECT_EQ(j["model_type"], "autoencoder");
  EXPECT_EQ(autoencoder_from_json(nlohmann::json::parse(j.dump())), m);
}
