// fraudctl: config-driven front end for the fraudcl pipeline.
//
//   fraudctl gen-synth|train|score|baseline|eval --config <path> [--seed N] [--out DIR]
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fraudcl/experiment.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace fraudcl;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("'" + p.string() + "' is not valid JSON");
  return j;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << j.dump(2) << '\n';
}

struct Options {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<fs::path> model;
  std::optional<fs::path> labels;
  std::string baseline;
  std::vector<fs::path> score_files;
};

ExperimentConfig load(const Options& o) {
  auto cfg = load_experiment_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = fs::absolute(*o.out);
  if (o.labels) cfg.labels_path = fs::absolute(*o.labels);
  fs::create_directories(cfg.resolve(cfg.output_dir));
  return cfg;
}

void cmd_gen_synth(const Options& o) {
  const auto t0 = Clock::now();
  const auto cfg = load(o);
  const auto data = generate_synthetic(cfg.effective_synth());
  const auto features = cfg.out("features.csv");
  const auto labels = cfg.out("labels.csv");
  write_features_csv(features.string(), data.features, default_feature_names(data.features.cols()));
  write_labels_csv(labels.string(), data.labels);
  fraudctl::RunManifest m{"gen-synth", to_json(cfg), {features, labels}};
  m.timings["total_seconds"] = seconds_since(t0);
  m.write(cfg.out("gen_synth_manifest.json"));
}

void cmd_train(const Options& o) {
  const auto t0 = Clock::now();
  const auto cfg = load(o);
  const auto table = load_features(cfg);
  const auto prepared = prepare(cfg, table);
  const auto t_train = Clock::now();
  const auto result = train_contrastive(cfg, prepared);
  const double train_seconds = seconds_since(t_train);

  const auto model_path = cfg.out("model.json");
  const auto log_path = cfg.out("train_log.csv");
  std::vector<fs::path> files{model_path, log_path};
  write_json(model_path, to_json(result.model));
  {
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw DataError("cannot write '" + log_path.string() + "'");
    log << "epoch,loss\n";
    for (std::size_t e = 0; e < result.log.epoch_loss.size(); ++e) {
      log << e + 1 << ',' << format_double(result.log.epoch_loss[e]) << '\n';
    }
  }
  if (prepared.standardizer) {
    const auto std_path = cfg.out("standardizer.json");
    auto j = to_json(*prepared.standardizer);
    j["format_version"] = 1;
    write_json(std_path, j);
    files.push_back(std_path);
  }
  fraudctl::RunManifest m{"train", to_json(cfg), files};
  m.timings["train_seconds"] = train_seconds;
  m.timings["epoch_seconds"] = result.log.epoch_seconds;
  m.timings["total_seconds"] = seconds_since(t0);
  m.write(cfg.out("train_manifest.json"));
}

void cmd_score(const Options& o) {
  const auto t0 = Clock::now();
  const auto cfg = load(o);
  const fs::path model_path = o.model ? *o.model : cfg.out("model.json");
  const auto model = encoder_model_from_json(read_json(model_path));
  std::optional<StandardizationParams> fitted;
  if (cfg.standardize) {
    const auto std_path = cfg.out("standardizer.json");
    if (!fs::exists(std_path)) throw DataError("'" + std_path.string() + "' not found (run train first)");
    fitted = standardizer_from_json(read_json(std_path));
  }
  const auto prepared = prepare(cfg, load_features(cfg), fitted);
  const auto rows = score_contrastive(cfg, model, prepared);
  const auto out = cfg.out("scores_contrastive.csv");
  write_score_csv(out.string(), rows);
  fraudctl::RunManifest m{"score", to_json(cfg), {out}};
  m.timings["total_seconds"] = seconds_since(t0);
  m.write(cfg.out("score_manifest.json"));
}

void cmd_baseline(const Options& o) {
  const auto t0 = Clock::now();
  const auto kind = parse_baseline(o.baseline);
  const auto cfg = load(o);
  const auto prepared = prepare(cfg, load_features(cfg));
  auto run = run_baseline(cfg, kind, prepared);
  const auto name = to_string(kind);
  const auto model_path = cfg.out("model_" + name + ".json");
  const auto score_path = cfg.out("scores_" + name + ".csv");
  run.model["format_version"] = 1;
  write_json(model_path, run.model);
  write_score_csv(score_path.string(), run.scores);
  fraudctl::RunManifest m{"baseline " + name, to_json(cfg), {model_path, score_path}};
  m.timings["total_seconds"] = seconds_since(t0);
  m.write(cfg.out("baseline_" + name + "_manifest.json"));
}

std::string model_name(const fs::path& score_file) {
  auto stem = score_file.stem().string();
  return stem.rfind("scores_", 0) == 0 ? stem.substr(7) : stem;
}

void cmd_eval(const Options& o) {
  const auto t0 = Clock::now();
  const auto cfg = load(o);
  std::vector<fs::path> files = o.score_files;
  if (files.empty()) {
    for (const char* n : {"contrastive", "autoencoder", "iforest", "kmeans"}) {
      const auto p = cfg.out(std::string("scores_") + n + ".csv");
      if (fs::exists(p)) files.push_back(p);
    }
  }
  if (files.empty()) throw DataError("no score files to evaluate");

  const auto n_rows = load_features(cfg).features.rows();
  const auto labels = load_eval_labels(cfg, n_rows);
  std::vector<MetricsReport> reports;
  std::vector<fs::path> written;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& f : files) {
    const auto name = model_name(f);
    const auto rows = read_score_csv(f.string());
    auto report = evaluate_scores(name, rows, labels);
    std::vector<double> scores;
    std::vector<std::size_t> idx;
    for (const auto& r : rows) {
      scores.push_back(r.score);
      idx.push_back(r.sample_index);
    }
    const auto roc_path = cfg.out("roc_" + name + ".csv");
    export_roc(roc_auc(scores, labels.select(idx)), roc_path.string());
    const auto metrics_path = cfg.out("metrics_" + name + ".json");
    write_json(metrics_path, to_json(report));
    written.push_back(metrics_path);
    written.push_back(roc_path);
    all.push_back(to_json(report));
    reports.push_back(std::move(report));
  }
  const auto table_path = cfg.out("comparison.txt");
  {
    std::ofstream t(table_path, std::ios::binary);
    t << comparison_table(reports);
  }
  std::cout << comparison_table(reports);
  written.push_back(table_path);
  fraudctl::RunManifest m{"eval", to_json(cfg), written};
  m.timings["total_seconds"] = seconds_since(t0);
  m.write(cfg.out("eval_manifest.json"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fraudctl: unsupervised fraud detection experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", o.seed, "master seed override");
    sub->add_option("--out", o.out, "output directory override");
  };
  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic dataset");
  auto* trn = app.add_subcommand("train", "train the contrastive encoder");
  auto* scr = app.add_subcommand("score", "score samples against the reference set");
  auto* base = app.add_subcommand("baseline", "fit and score a baseline model");
  auto* evl = app.add_subcommand("eval", "compare score files against labels");
  for (auto* s : {gen, trn, scr, base, evl}) common(s);
  scr->add_option("--model", o.model, "model file (default <out>/model.json)");
  base->add_option("which", o.baseline, "kmeans | iforest | autoencoder")->required();
  evl->add_option("scores", o.score_files, "score CSVs (default: every scores_*.csv in <out>)");
  evl->add_option("--labels", o.labels, "labels CSV override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) cmd_gen_synth(o);
    else if (*trn) cmd_train(o);
    else if (*scr) cmd_score(o);
    else if (*base) cmd_baseline(o);
    else if (*evl) cmd_eval(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
