// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "fraudcl/experiment.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace fraudcl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Finite-difference gradients ------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  gradcheck::Result all;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& s : gradcheck::shapes()) {
      for (auto v : {LossVariant::Paper, LossVariant::Simclr}) {
        all.merge(gradcheck::loss_wrt_embeddings(v, seed, s.batch, s.layer_dims.back(), 0.5));
        all.merge(gradcheck::contrastive_network(v, seed, s.layer_dims, s.projection_dims, s.batch));
      }
      all.merge(gradcheck::autoencoder_network(seed, s.layer_dims, s.batch));
    }
  }
  const double secs = seconds_since(t0);
  return {all.max_rel_err < 1e-4 && secs < 30.0 && all.checked > 0,
          fmt("max rel err %.3g over %zu coords (%zu kink coords skipped), %.2f s",
              all.max_rel_err, all.checked, all.kinks, secs)};
}

// 2. Oracle equivalence --------------------------------------------------------

Outcome oracles() {
  std::mt19937_64 rng(2024);
  double loss_err = 0, stat_err = 0, km_err = 0, ae_err = 0, auc_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    const std::size_t e = 2 + rng() % 8;
    const double tau = 0.1 + 0.9 * std::uniform_real_distribution<double>()(rng);
    auto a = gradcheck::random_matrix(n, e, rng);
    auto b = gradcheck::random_matrix(n, e, rng);
    loss_err = std::max(loss_err, std::abs(loss_paper(a, b, tau).loss - oracle::paper_loss(a, b, tau)));
    loss_err = std::max(loss_err, std::abs(loss_simclr(a, b, tau).loss - oracle::nt_xent(a, b, tau)));

    const auto self = score_all(a, a, true);
    const auto cross = score_all(b, a, false);
    for (std::size_t i = 0; i < n; ++i) {
      auto o = oracle::pairwise(a, i, a, static_cast<std::ptrdiff_t>(i));
      stat_err = std::max({stat_err, std::abs(self[i].mean_sim - o.mean), std::abs(self[i].std_sim - o.std)});
      o = oracle::pairwise(b, i, a, -1);
      stat_err = std::max({stat_err, std::abs(cross[i].mean_sim - o.mean), std::abs(cross[i].std_sim - o.std)});
    }

    const std::size_t d = 3 + rng() % 6;
    auto x = gradcheck::random_matrix(n + 4, d, rng);
    auto km = kmeans_fit(x, 1 + rng() % 4, rng());
    const auto kd = kmeans_score(km, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      km_err = std::max(km_err, std::abs(kd[i] - oracle::nearest_distance(km.centroids, x, i)));
    }

    AutoencoderConfig ac;
    ac.hidden_dims = {d + 2};
    ac.bottleneck = d - 1;
    ac.epochs = 2;
    auto ae = autoencoder_fit(x, ac, rng());
    const auto ad = autoencoder_score(ae, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      ae_err = std::max(ae_err, std::abs(ad[i] - oracle::ae_row_mse(ae.encoder, ae.decoder, x, i)));
    }

    std::vector<double> scores(n + 2);
    std::vector<int> y(n + 2);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      scores[i] = std::round(4.0 * std::normal_distribution<double>()(rng)) / 4.0;  // forces ties
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng() % 2);
    }
    auc_err = std::max(auc_err, std::abs(roc_auc(scores, Labels(y)).auc - oracle::auc(scores, y)));
  }
  const bool ok = loss_err <= 1e-10 && stat_err <= 1e-12 && km_err <= 1e-12 && ae_err <= 1e-12 &&
                  auc_err <= 1e-12;
  return {ok, fmt("loss %.2g, mu/sigma %.2g, kmeans %.2g, ae %.2g, auc %.2g", loss_err, stat_err,
                  km_err, ae_err, auc_err)};
}

// 3. Standardization -----------------------------------------------------------

Outcome standardization() {
  std::mt19937_64 rng(7);
  auto x = gradcheck::random_matrix(500, 6, rng);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    x(r, 1) = 3.5;
    x(r, 2) = 1e4 + 250.0 * x(r, 2);
    x(r, 4) = -2.0;
  }
  const auto p = fit_standardizer(x);
  const auto z = transform(x, p);
  double mean_err = 0, var_err = 0;
  for (std::size_t c = 0; c < z.cols(); ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < z.rows(); ++r) m += z(r, c);
    m /= static_cast<double>(z.rows());
    for (std::size_t r = 0; r < z.rows(); ++r) v += (z(r, c) - m) * (z(r, c) - m);
    v /= static_cast<double>(z.rows());
    mean_err = std::max(mean_err, std::abs(m));
    var_err = std::max(var_err, std::abs(v - 1.0));
  }
  const std::vector<std::string> dropped{"f1", "f4"};
  const bool ok = mean_err <= 1e-9 && var_err <= 1e-9 && z.cols() == 4 && p.dropped_features == dropped;
  return {ok, fmt("max |mean| %.2g, max |var-1| %.2g, kept %zu, dropped %zu", mean_err, var_err,
                  z.cols(), p.dropped_features.size())};
}

// 4 and 5. In-process default pipeline -----------------------------------------

struct SeedRun {
  double contrastive = 0, autoencoder = 0, iforest = 0, kmeans = 0;
  double seconds = 0;
  std::vector<MetricsReport> reports;
};

SeedRun pipeline(ExperimentConfig cfg, bool baselines) {
  const auto t0 = Clock::now();
  const auto data = generate_synthetic(cfg.effective_synth());
  const FeatureTable table{data.features, default_feature_names(data.features.cols())};
  const auto prepared = prepare(cfg, table);
  const auto model = train_contrastive(cfg, prepared).model;
  SeedRun run;
  run.reports.push_back(evaluate_scores("contrastive", score_contrastive(cfg, model, prepared), data.labels));
  if (baselines) {
    for (auto kind : {BaselineKind::Autoencoder, BaselineKind::IForest, BaselineKind::KMeans}) {
      run.reports.push_back(
          evaluate_scores(to_string(kind), run_baseline(cfg, kind, prepared).scores, data.labels));
    }
    run.autoencoder = run.reports[1].auc;
    run.iforest = run.reports[2].auc;
    run.kmeans = run.reports[3].auc;
  }
  run.contrastive = run.reports[0].auc;
  run.seconds = seconds_since(t0);
  return run;
}

std::vector<MetricsReport> in_process_reports;

Outcome ordering() {
  std::vector<double> c, ae, itf, km;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    auto run = pipeline(cfg, true);
    c.push_back(run.contrastive);
    ae.push_back(run.autoencoder);
    itf.push_back(run.iforest);
    km.push_back(run.kmeans);
    worst = std::max(worst, run.seconds);
    std::cout << fmt("  seed %llu: contrastive %.4f autoencoder %.4f iforest %.4f kmeans %.4f (%.1f s)\n",
                     static_cast<unsigned long long>(seed), run.contrastive, run.autoencoder,
                     run.iforest, run.kmeans, run.seconds);
    in_process_reports.insert(in_process_reports.end(), run.reports.begin(), run.reports.end());
  }
  const double mc = median(c), mae = median(ae), mif = median(itf), mkm = median(km);
  const bool ok = mc > mae && mae >= mif && mif >= mkm && mc >= 0.90 && worst < 300.0;
  return {ok, fmt("median AUC contrastive %.4f, autoencoder %.4f, iforest %.4f, kmeans %.4f; "
                  "slowest seed %.1f s",
                  mc, mae, mif, mkm, worst)};
}

Outcome chance_floor() {
  std::vector<double> c;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.synth.fraud_shift = 0.0;
    cfg.synth.fraud_scale = 1.0;
    c.push_back(pipeline(cfg, false).contrastive);
    std::cout << fmt("  seed %llu: contrastive %.4f\n", static_cast<unsigned long long>(seed), c.back());
  }
  const double m = median(c);
  return {m >= 0.40 && m <= 0.60, fmt("median contrastive AUC %.4f", m)};
}

// 6 to 9. CLI artifacts ---------------------------------------------------------

struct CliRun {
  fs::path dir;
  fs::path config;
  bool ok = true;
  std::string failure;

  void run(const std::string& args, const fs::path& out) {
    if (!ok) return;
    const auto r = cli::fraudctl(args + " --config " + config.string() + " --out " + out.string(), dir);
    if (r.code != 0) {
      ok = false;
      failure = "'" + args + "' exited " + std::to_string(r.code) + ": " + r.err;
    }
  }
  void pipeline(const fs::path& out, bool with_gen, bool with_eval) {
    if (with_gen) run("gen-synth", out);
    run("train", out);
    run("score", out);
    for (const char* b : {"kmeans", "iforest", "autoencoder"}) run(std::string("baseline ") + b, out);
    if (with_eval) run("eval", out);
  }
};

CliRun make_cli() {
  CliRun c;
  c.dir = testutil::scratch_dir("acceptance");
  nlohmann::json j = {{"format_version", 1},
                      {"seed", 5},
                      {"data", {{"source", "synth"}, {"synth", {{"n_normal", 600}, {"n_fraud", 60}}}}},
                      {"contrastive", {{"epochs", 10}}},
                      {"baselines", {{"autoencoder", {{"epochs", 10}}}}}};
  c.config = cli::write_config(c.dir, j);
  return c;
}

bool manifests_verify(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.ends_with("_manifest.json") && !fraudctl::verify_manifest(e.path())) return false;
  }
  return true;
}

Outcome determinism(CliRun& c) {
  c.pipeline(c.dir / "a", true, true);
  c.pipeline(c.dir / "b", true, true);
  if (!c.ok) return {false, c.failure};
  const auto a = cli::artifact_hashes(c.dir / "a");
  const auto b = cli::artifact_hashes(c.dir / "b");
  std::size_t differing = 0;
  for (const auto& [name, h] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != h) ++differing;
  }
  const bool ok = a.size() == b.size() && differing == 0 && a.size() >= 15 &&
                  manifests_verify(c.dir / "a") && manifests_verify(c.dir / "b");
  return {ok, fmt("%zu artifacts compared, %zu differ, manifests verified", a.size(), differing)};
}

Outcome label_blindness(CliRun& c) {
  if (!c.ok) return {false, "determinism run did not complete"};
  const auto ref = cli::artifact_hashes(c.dir / "a");
  auto compare = [&](const fs::path& out) {
    std::size_t differing = 0, compared = 0;
    for (const auto& [name, h] : cli::artifact_hashes(out)) {
      if (name == "features.csv" || name == "labels.csv" || name == "stderr.txt") continue;
      ++compared;
      auto it = ref.find(name);
      if (it == ref.end() || it->second != h) ++differing;
    }
    return std::pair{compared, differing};
  };

  const auto deleted = c.dir / "no_labels";
  fs::create_directories(deleted);
  fs::copy_file(c.dir / "a/features.csv", deleted / "features.csv");
  c.pipeline(deleted, false, false);

  const auto permuted = c.dir / "permuted";
  fs::create_directories(permuted);
  fs::copy_file(c.dir / "a/features.csv", permuted / "features.csv");
  auto labels = load_labels_csv((c.dir / "a/labels.csv").string());
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = labels[i];
  std::mt19937_64 rng(99);
  std::shuffle(y.begin(), y.end(), rng);
  write_labels_csv((permuted / "labels.csv").string(), Labels(y));
  c.pipeline(permuted, false, false);
  if (!c.ok) return {false, c.failure};

  const auto [n1, d1] = compare(deleted);
  const auto [n2, d2] = compare(permuted);
  return {n1 >= 9 && n2 >= 9 && d1 == 0 && d2 == 0,
          fmt("labels deleted: %zu/%zu outputs differ; labels permuted: %zu/%zu differ", d1, n1, d2, n2)};
}

std::vector<fs::path> files_matching(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with(prefix) && name.ends_with(ext)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome roc_validity(const CliRun& c) {
  if (!c.ok) return {false, "CLI run did not complete"};
  const auto out = c.dir / "a";
  const auto rocs = files_matching(out, "roc_", ".csv");
  bool ok = rocs.size() == 4;
  double worst = 0;
  for (const auto& f : rocs) {
    const auto curve = import_roc(f.string());
    const auto& p = curve.points;
    ok = ok && p.size() >= 2 && p.front().fpr == 0.0 && p.front().tpr == 0.0 && p.back().fpr == 1.0 &&
         p.back().tpr == 1.0;
    for (std::size_t i = 1; i < p.size(); ++i) ok = ok && p[i].fpr >= p[i - 1].fpr && p[i].tpr >= p[i - 1].tpr;
    const auto name = f.stem().string().substr(4);
    const auto j = nlohmann::json::parse(testutil::read_text(out / ("metrics_" + name + ".json")));
    worst = std::max(worst, std::abs(trapezoid_area(p) - j.at("auc").get<double>()));
  }
  ok = ok && worst <= 1e-9;
  return {ok, fmt("%zu curves, max |AUC - re-integrated| %.2g", rocs.size(), worst)};
}

Outcome metric_consistency(const CliRun& c) {
  std::vector<MetricsReport> reports = in_process_reports;
  if (c.ok) {
    for (const auto& f : files_matching(c.dir / "a", "metrics_", ".json")) {
      reports.push_back(metrics_report_from_json(nlohmann::json::parse(testutil::read_text(f))));
    }
  }
  double worst = 0;
  for (const auto& r : reports) {
    const auto& m = r.confusion;
    const double p = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    const double rc = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
    worst = std::max({worst, std::abs(p - r.precision), std::abs(rc - r.recall), std::abs(f1 - r.f1)});
  }
  return {reports.size() >= 24 && worst <= 1e-12,
          fmt("%zu reports, max deviation %.2g", reports.size(), worst)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail
              << std::endl;
    if (!o.pass) ++failures;
  };

  report(1, "gradient correctness", gradients);
  report(2, "oracle equivalence", oracles);
  report(3, "standardization", standardization);
  report(4, "desk-scale ordering", ordering);
  report(5, "chance floor", chance_floor);
  CliRun cli_run = make_cli();
  report(6, "determinism", [&] { return determinism(cli_run); });
  report(7, "unsupervised guarantee", [&] { return label_blindness(cli_run); });
  report(8, "ROC validity", [&] { return roc_validity(cli_run); });
  report(9, "metric consistency", [&] { return metric_consistency(cli_run); });
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
