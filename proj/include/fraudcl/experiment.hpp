#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/augment.hpp"
#include "fraudcl/baselines/autoencoder.hpp"
#include "fraudcl/baselines/iforest.hpp"
#include "fraudcl/baselines/kmeans.hpp"
#include "fraudcl/contrastive.hpp"
#include "fraudcl/core.hpp"
#include "fraudcl/data.hpp"
#include "fraudcl/evaluation.hpp"
#include "fraudcl/mlp.hpp"
#include "fraudcl/scoring.hpp"

namespace fraudcl {

enum class DataSource { Synth, Csv };
enum class ScoreSplit { Test, Train, All };

inline ScoreSplit parse_score_split(const std::string& s) {
  if (s == "test") return ScoreSplit::Test;
  if (s == "train") return ScoreSplit::Train;
  if (s == "all") return ScoreSplit::All;
  throw ConfigError("unknown score_split '" + s + "' (expected test|train|all)");
}

inline std::string to_string(ScoreSplit s) {
  switch (s) {
    case ScoreSplit::Test: return "test";
    case ScoreSplit::Train: return "train";
    case ScoreSplit::All: return "all";
  }
  return "test";
}

struct ScoringSettings {
  DecisionRule rule = DecisionRule::LowMean;
  double contamination = 0.1;
  std::size_t max_reference_size = 0;  // 0 = whole training split
  ScoreSplit score_split = ScoreSplit::Test;
};

struct KMeansSettings {
  std::size_t k = 8;
  std::size_t max_iter = 300;
};

struct IForestSettings {
  std::size_t n_trees = 100;
  std::size_t subsample_size = 256;
};

struct BaselineSettings {
  KMeansSettings kmeans;
  IForestSettings iforest;
  AutoencoderConfig autoencoder;
  double contamination = 0.1;
};

namespace detail {

// Pipeline defaults, tuned on the default synthetic data.
inline AugmentConfig pipeline_augment() {
  AugmentConfig a;
  a.noise_std = 0.5;
  a.mask_prob = 0.2;
  return a;
}
inline ContrastiveConfig pipeline_contrastive() {
  ContrastiveConfig c;
  c.temperature = 0.2;
  c.use_projection_head = false;
  return c;
}
inline BaselineSettings pipeline_baselines() {
  BaselineSettings b;
  b.autoencoder.bottleneck = 3;
  return b;
}

}  // namespace detail

/// One document drives every command. Paths are resolved against `base_dir`
/// (the config file's directory).
struct ExperimentConfig {
  std::filesystem::path base_dir = ".";
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";

  DataSource source = DataSource::Synth;
  std::filesystem::path csv_path;
  std::filesystem::path labels_path;
  CsvSchema schema;
  SynthConfig synth;
  bool standardize = true;
  double train_frac = 0.8;

  AugmentConfig augment = detail::pipeline_augment();
  // Leading 0 in layer_dims stands for the input dimension of the data.
  MlpSpec encoder{{0, 64, 64, 32}, Activation::Relu, {32, 32, 16}};
  ContrastiveConfig contrastive = detail::pipeline_contrastive();
  ScoringSettings scoring;
  BaselineSettings baselines = detail::pipeline_baselines();

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
  std::filesystem::path out(const std::string& file) const { return resolve(output_dir) / file; }

  std::filesystem::path features_path() const {
    return source == DataSource::Csv ? resolve(csv_path) : out("features.csv");
  }
  std::filesystem::path eval_labels_path() const {
    if (!labels_path.empty()) return resolve(labels_path);
    return source == DataSource::Synth ? out("labels.csv") : std::filesystem::path{};
  }

  /// Component seeds, each hash64(master, name) unless pinned in the file.
  std::optional<std::uint64_t> synth_seed_override;
  std::optional<std::uint64_t> augment_seed_override;
  std::optional<std::uint64_t> contrastive_seed_override;

  std::uint64_t component_seed(std::string_view name) const { return derive_seed(seed, name); }

  SynthConfig effective_synth() const {
    SynthConfig s = synth;
    s.seed = synth_seed_override.value_or(component_seed("synth"));
    return s;
  }
  AugmentConfig effective_augment() const {
    AugmentConfig a = augment;
    a.seed = augment_seed_override.value_or(component_seed("augment"));
    return a;
  }
  ContrastiveConfig effective_contrastive() const {
    ContrastiveConfig c = contrastive;
    c.seed = contrastive_seed_override.value_or(component_seed("contrastive"));
    return c;
  }
  MlpSpec effective_encoder(std::size_t input_dim) const {
    MlpSpec s = encoder;
    if (!s.layer_dims.empty() && s.layer_dims.front() == 0) s.layer_dims.front() = input_dim;
    s.validate();
    if (s.input_dim() != input_dim) {
      throw ConfigError("encoder layer_dims[0] = " + std::to_string(s.input_dim()) +
                        " does not match the data's " + std::to_string(input_dim) + " features");
    }
    return s;
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    std::filesystem::path base_dir = ".") {
  ExperimentConfig c;
  c.base_dir = std::move(base_dir);
  try {
    if (j.contains("format_version") && j.at("format_version").get<int>() != 1) {
      throw ConfigError("unsupported config format_version");
    }
    detail::read_opt(j, "seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("data")) {
      const auto& d = j.at("data");
      if (d.contains("source")) {
        const auto s = d.at("source").get<std::string>();
        if (s == "synth") c.source = DataSource::Synth;
        else if (s == "csv") c.source = DataSource::Csv;
        else throw ConfigError("data.source must be 'synth' or 'csv'");
      }
      if (d.contains("csv_path")) c.csv_path = d.at("csv_path").get<std::string>();
      if (d.contains("labels_path")) c.labels_path = d.at("labels_path").get<std::string>();
      if (d.contains("schema")) {
        for (const auto& [col, role] : d.at("schema").items()) {
          c.schema.roles[col] = parse_column_role(role.get<std::string>());
        }
      }
      detail::read_opt(d, "standardize", c.standardize);
      detail::read_opt(d, "train_frac", c.train_frac);
      if (d.contains("synth")) {
        const auto& s = d.at("synth");
        detail::read_opt(s, "n_normal", c.synth.n_normal);
        detail::read_opt(s, "n_fraud", c.synth.n_fraud);
        detail::read_opt(s, "n_features", c.synth.n_features);
        detail::read_opt(s, "fraud_shift", c.synth.fraud_shift);
        detail::read_opt(s, "fraud_scale", c.synth.fraud_scale);
        detail::read_opt(s, "n_fraud_modes", c.synth.n_fraud_modes);
        detail::read_opt(s, "n_normal_modes", c.synth.n_normal_modes);
        detail::read_opt(s, "normal_mode_spread", c.synth.normal_mode_spread);
        detail::read_opt(s, "n_shifted_features", c.synth.n_shifted_features);
        detail::read_opt(s, "latent_dim", c.synth.latent_dim);
        detail::read_opt(s, "noise_std", c.synth.noise_std);
        if (s.contains("seed")) c.synth_seed_override = s.at("seed").get<std::uint64_t>();
      }
    }
    if (c.source == DataSource::Csv && c.csv_path.empty()) {
      throw ConfigError("data.csv_path is required when data.source is 'csv'");
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment = augment_config_from_json(a, c.augment);
      if (a.contains("seed")) c.augment_seed_override = a.at("seed").get<std::uint64_t>();
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      detail::read_opt(e, "layer_dims", c.encoder.layer_dims);
      detail::read_opt(e, "projection_dims", c.encoder.projection_dims);
      if (e.contains("activation") && e.at("activation").get<std::string>() != "relu") {
        throw ConfigError("only the relu activation is supported");
      }
    }
    if (j.contains("contrastive")) {
      const auto& k = j.at("contrastive");
      detail::read_opt(k, "temperature", c.contrastive.temperature);
      detail::read_opt(k, "batch_size", c.contrastive.batch_size);
      detail::read_opt(k, "epochs", c.contrastive.epochs);
      detail::read_opt(k, "use_projection_head", c.contrastive.use_projection_head);
      detail::read_opt(k, "learning_rate", c.contrastive.learning_rate);
      if (k.contains("loss_variant")) {
        c.contrastive.loss_variant = parse_loss_variant(k.at("loss_variant").get<std::string>());
      }
      if (k.contains("seed")) c.contrastive_seed_override = k.at("seed").get<std::uint64_t>();
    }
    if (j.contains("scoring")) {
      const auto& s = j.at("scoring");
      if (s.contains("rule")) c.scoring.rule = parse_rule(s.at("rule").get<std::string>());
      detail::read_opt(s, "contamination", c.scoring.contamination);
      detail::read_opt(s, "max_reference_size", c.scoring.max_reference_size);
      if (s.contains("score_split")) {
        c.scoring.score_split = parse_score_split(s.at("score_split").get<std::string>());
      }
    }
    c.baselines.contamination = c.scoring.contamination;
    if (j.contains("baselines")) {
      const auto& b = j.at("baselines");
      detail::read_opt(b, "contamination", c.baselines.contamination);
      if (b.contains("kmeans")) {
        detail::read_opt(b.at("kmeans"), "k", c.baselines.kmeans.k);
        detail::read_opt(b.at("kmeans"), "max_iter", c.baselines.kmeans.max_iter);
      }
      if (b.contains("iforest")) {
        detail::read_opt(b.at("iforest"), "n_trees", c.baselines.iforest.n_trees);
        detail::read_opt(b.at("iforest"), "subsample_size", c.baselines.iforest.subsample_size);
      }
      if (b.contains("autoencoder")) {
        const auto& a = b.at("autoencoder");
        detail::read_opt(a, "hidden_dims", c.baselines.autoencoder.hidden_dims);
        detail::read_opt(a, "bottleneck", c.baselines.autoencoder.bottleneck);
        detail::read_opt(a, "epochs", c.baselines.autoencoder.epochs);
        detail::read_opt(a, "batch_size", c.baselines.autoencoder.batch_size);
        detail::read_opt(a, "learning_rate", c.baselines.autoencoder.learning_rate);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(c.train_frac > 0.0 && c.train_frac < 1.0)) {
    throw ConfigError("data.train_frac must lie strictly between 0 and 1");
  }
  contamination_count(c.scoring.contamination, 1);
  contamination_count(c.baselines.contamination, 1);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  auto dir = path.parent_path();
  return experiment_config_from_json(j, dir.empty() ? std::filesystem::path(".") : dir);
}

/// Effective settings with every derived seed filled in, for manifests.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto s = c.effective_synth();
  const auto k = c.effective_contrastive();
  nlohmann::json schema = nlohmann::json::object();
  for (const auto& [col, role] : c.schema.roles) {
    const char* names[] = {"numeric", "categorical", "label", "ignore"};
    schema[col] = names[static_cast<int>(role)];
  }
  return {
      {"format_version", 1},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"data",
       {{"source", c.source == DataSource::Synth ? "synth" : "csv"},
        {"csv_path", c.csv_path.string()},
        {"labels_path", c.labels_path.string()},
        {"schema", schema},
        {"standardize", c.standardize},
        {"train_frac", c.train_frac},
        {"synth",
         {{"n_normal", s.n_normal}, {"n_fraud", s.n_fraud}, {"n_features", s.n_features},
          {"fraud_shift", s.fraud_shift}, {"fraud_scale", s.fraud_scale},
          {"n_fraud_modes", s.n_fraud_modes}, {"n_normal_modes", s.n_normal_modes},
          {"normal_mode_spread", s.normal_mode_spread},
          {"n_shifted_features", s.n_shifted_features}, {"latent_dim", s.latent_dim},
          {"noise_std", s.noise_std}, {"seed", s.seed}}}}},
      {"augment", to_json(c.effective_augment())},
      {"encoder", to_json(c.encoder)},
      {"contrastive",
       {{"temperature", k.temperature}, {"batch_size", k.batch_size}, {"epochs", k.epochs},
        {"loss_variant", to_string(k.loss_variant)},
        {"use_projection_head", k.use_projection_head},
        {"learning_rate", k.learning_rate}, {"seed", k.seed}}},
      {"scoring",
       {{"rule", to_string(c.scoring.rule)}, {"contamination", c.scoring.contamination},
        {"max_reference_size", c.scoring.max_reference_size},
        {"score_split", to_string(c.scoring.score_split)}}},
      {"baselines",
       {{"contamination", c.baselines.contamination},
        {"kmeans", {{"k", c.baselines.kmeans.k}, {"max_iter", c.baselines.kmeans.max_iter}}},
        {"iforest",
         {{"n_trees", c.baselines.iforest.n_trees},
          {"subsample_size", c.baselines.iforest.subsample_size}}},
        {"autoencoder",
         {{"hidden_dims", c.baselines.autoencoder.hidden_dims},
          {"bottleneck", c.baselines.autoencoder.bottleneck},
          {"epochs", c.baselines.autoencoder.epochs},
          {"batch_size", c.baselines.autoencoder.batch_size},
          {"learning_rate", c.baselines.autoencoder.learning_rate}}}}}};
}

// ---------------------------------------------------------------------------
// Pipeline stages shared by the CLI and the acceptance suite. None of them
// takes labels; evaluation is the only consumer of Labels.
// ---------------------------------------------------------------------------

struct FeatureTable {
  FeatureMatrix features;
  std::vector<std::string> names;
};

/// Features only. A label column in the CSV is parsed and dropped here.
inline FeatureTable load_features(const ExperimentConfig& cfg) {
  const auto path = cfg.features_path();
  if (!std::filesystem::exists(path)) {
    throw DataError("features file '" + path.string() + "' not found" +
                    (cfg.source == DataSource::Synth ? " (run gen-synth first)" : ""));
  }
  CsvSchema schema = cfg.schema;
  auto table = load_csv(path.string(), schema);
  return {std::move(table.features), std::move(table.feature_names)};
}

inline Labels load_eval_labels(const ExperimentConfig& cfg, std::size_t n_rows) {
  Labels labels;
  const auto lp = cfg.eval_labels_path();
  if (!lp.empty()) {
    if (!std::filesystem::exists(lp)) throw DataError("labels file '" + lp.string() + "' not found");
    labels = load_labels_csv(lp.string());
  } else {
    auto table = load_csv(cfg.features_path().string(), cfg.schema);
    if (!table.labels) throw DataError("no labels file configured and no label column in the CSV");
    labels = *table.labels;
  }
  if (labels.size() != n_rows) {
    throw DataError("labels file has " + std::to_string(labels.size()) + " rows, data has " +
                    std::to_string(n_rows));
  }
  return labels;
}

struct PreparedData {
  SplitIndices split;
  std::optional<StandardizationParams> standardizer;
  FeatureMatrix all;  // every row, standardized when enabled
  FeatureMatrix train;
  std::vector<std::string> names;
};

inline PreparedData prepare(const ExperimentConfig& cfg, const FeatureTable& table,
                            const std::optional<StandardizationParams>& fitted = std::nullopt) {
  PreparedData p;
  p.split = split_indices(table.features.rows(), cfg.train_frac, cfg.component_seed("split"));
  if (cfg.standardize) {
    p.standardizer = fitted ? *fitted
                            : fit_standardizer(table.features.select_rows(p.split.train), table.names);
    p.all = transform(table.features, *p.standardizer);
    p.names = p.standardizer->feature_names;
  } else {
    if (!table.features.all_finite()) throw DataError("features contain NaN/Inf");
    p.all = table.features;
    p.names = table.names;
  }
  p.train = p.all.select_rows(p.split.train);
  return p;
}

inline std::vector<std::size_t> score_rows(const ExperimentConfig& cfg, const PreparedData& p) {
  switch (cfg.scoring.score_split) {
    case ScoreSplit::Train: return p.split.train;
    case ScoreSplit::All: {
      std::vector<std::size_t> all(p.all.rows());
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    case ScoreSplit::Test: break;
  }
  return p.split.test;
}

inline TrainResult train_contrastive(const ExperimentConfig& cfg, const PreparedData& p) {
  return train(p.train, cfg.effective_encoder(p.train.cols()), cfg.effective_augment(),
               cfg.effective_contrastive());
}

/// Embeds the scored rows and the reference (training) rows, computes the
/// similarity statistics and applies the configured rule and threshold.
inline std::vector<ScoreRow> score_contrastive(const ExperimentConfig& cfg, const EncoderModel& model,
                                               const PreparedData& p) {
  const auto rows = score_rows(cfg, p);
  const auto ref_local = subsample_reference(p.split.train.size(), cfg.scoring.max_reference_size,
                                             cfg.component_seed("reference"));
  std::vector<std::size_t> ref_rows;
  for (auto i : ref_local) ref_rows.push_back(p.split.train[i]);

  const auto h_query = model.embed(p.all.select_rows(rows));
  const auto h_ref = model.embed(p.all.select_rows(ref_rows));
  ExclusionMap exclude(rows.size(), -1);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    auto it = std::lower_bound(ref_rows.begin(), ref_rows.end(), rows[q]);
    if (it != ref_rows.end() && *it == rows[q]) exclude[q] = it - ref_rows.begin();
  }
  const auto stats = score_all(h_query, h_ref, exclude);
  const double t = choose_threshold(stats, cfg.scoring.contamination, cfg.scoring.rule);
  std::vector<ScoreRow> out;
  out.reserve(rows.size());
  for (std::size_t q = 0; q < rows.size(); ++q) {
    const auto d = decide(stats[q], t, cfg.scoring.rule);
    out.push_back({rows[q], stats[q].mean_sim, stats[q].std_sim, stats[q].score, d.is_fraud,
                   to_string(cfg.scoring.rule), t});
  }
  return out;
}

enum class BaselineKind { KMeans, IForest, Autoencoder };

inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "kmeans") return BaselineKind::KMeans;
  if (s == "iforest") return BaselineKind::IForest;
  if (s == "autoencoder") return BaselineKind::Autoencoder;
  if (s == "vae") throw ConfigError("baseline 'vae' is not implemented; see docs");
  throw ConfigError("unknown baseline '" + s + "' (expected kmeans|iforest|autoencoder)");
}

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::KMeans: return "kmeans";
    case BaselineKind::IForest: return "iforest";
    case BaselineKind::Autoencoder: return "autoencoder";
  }
  return "";
}

struct BaselineRun {
  nlohmann::json model;
  std::vector<ScoreRow> scores;
};

inline BaselineRun run_baseline(const ExperimentConfig& cfg, BaselineKind kind, const PreparedData& p) {
  const auto rows = score_rows(cfg, p);
  const auto query = p.all.select_rows(rows);
  const std::uint64_t seed = cfg.component_seed(to_string(kind));
  BaselineRun run;
  std::vector<double> scores;
  switch (kind) {
    case BaselineKind::KMeans: {
      auto m = kmeans_fit(p.train, cfg.baselines.kmeans.k, seed, cfg.baselines.kmeans.max_iter);
      scores = kmeans_score(m, query);
      run.model = to_json(m);
      break;
    }
    case BaselineKind::IForest: {
      auto m = iforest_fit(p.train, cfg.baselines.iforest.n_trees,
                           cfg.baselines.iforest.subsample_size, seed);
      scores = iforest_score(m, query);
      run.model = to_json(m);
      break;
    }
    case BaselineKind::Autoencoder: {
      auto m = autoencoder_fit(p.train, cfg.baselines.autoencoder, seed);
      scores = autoencoder_score(m, query);
      run.model = to_json(m);
      break;
    }
  }
  const double t = choose_score_threshold(scores, cfg.baselines.contamination);
  for (std::size_t q = 0; q < rows.size(); ++q) {
    run.scores.push_back({rows[q], std::nullopt, std::nullopt, scores[q], scores[q] > t,
                          "score_above", t});
  }
  return run;
}

/// Metrics for one score file's rows against the full label vector.
inline MetricsReport evaluate_scores(const std::string& model, const std::vector<ScoreRow>& rows,
                                     const Labels& labels) {
  std::vector<double> scores;
  std::vector<bool> decisions;
  std::vector<std::size_t> idx;
  for (const auto& r : rows) {
    if (r.sample_index >= labels.size()) throw DataError("score sample_index outside label range");
    scores.push_back(r.score);
    decisions.push_back(r.is_fraud);
    idx.push_back(r.sample_index);
  }
  if (rows.empty()) throw DataError("score file for '" + model + "' is empty");
  return metrics_report(model, scores, decisions, labels.select(idx), rows.front().threshold,
                        rows.front().rule);
}

}  // namespace fraudcl
