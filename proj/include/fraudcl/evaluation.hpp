#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"
#include "fraudcl/data.hpp"
#include "fraudcl/scoring.hpp"

namespace fraudcl {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // rows with score >= threshold are flagged
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline double trapezoid_area(const std::vector<RocPoint>& pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
  }
  return area;
}

/// Threshold sweep over the distinct scores (higher = more anomalous), fraud
/// as the positive class. Tied scores move in a single step, which gives tied
/// positive/negative pairs half credit.
inline RocCurve roc_auc(std::span<const double> scores, const Labels& labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  const std::size_t pos = labels.count_positive();
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("AUC undefined: labels contain a single class");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("AUC undefined: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  curve.auc = trapezoid_area(curve.points);
  return curve;
}

inline RocCurve roc_auc(const std::vector<double>& scores, const Labels& labels) {
  return roc_auc(std::span<const double>(scores), labels);
}

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<bool>& decisions, const Labels& labels) {
  if (decisions.size() != labels.size()) throw DataError("decisions and labels differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool fraud = labels[i] == 1;
    if (decisions[i]) {
      fraud ? ++m.tp : ++m.fp;
    } else {
      fraud ? ++m.fn : ++m.tn;
    }
  }
  return m;
}

/// Precision/recall/F1 from counts. Undefined ratios are reported as 0.
struct RatioMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate_precision = false;
};

inline RatioMetrics ratios(const ConfusionMatrix& m) {
  RatioMetrics r;
  if (m.tp + m.fp > 0) {
    r.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  } else {
    r.degenerate_precision = true;
  }
  if (m.tp + m.fn > 0) r.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

struct MetricsReport {
  std::string model;
  double auc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionMatrix confusion;
  double threshold = 0.0;
  std::string rule;
  bool degenerate_precision = false;
};

struct ThresholdPolicy {
  enum class Kind { Contamination, Fixed } kind = Kind::Contamination;
  double value = 0.1;

  static ThresholdPolicy contamination(double c) { return {Kind::Contamination, c}; }
  static ThresholdPolicy fixed(double t) { return {Kind::Fixed, t}; }
};

/// Report for precomputed decisions (e.g. read back from a score file).
inline MetricsReport metrics_report(std::string model, std::span<const double> scores,
                                    const std::vector<bool>& decisions, const Labels& labels,
                                    double threshold, std::string rule) {
  MetricsReport rep;
  rep.model = std::move(model);
  rep.auc = roc_auc(scores, labels).auc;
  rep.confusion = confusion(decisions, labels);
  auto r = ratios(rep.confusion);
  rep.precision = r.precision;
  rep.recall = r.recall;
  rep.f1 = r.f1;
  rep.degenerate_precision = r.degenerate_precision;
  rep.threshold = threshold;
  rep.rule = std::move(rule);
  return rep;
}

/// Flags `score > t`, with t fixed or chosen to flag the contamination fraction.
inline MetricsReport metrics_report(std::span<const double> scores, const Labels& labels,
                                    const ThresholdPolicy& policy, std::string model = "model") {
  const std::vector<double> v(scores.begin(), scores.end());
  const double t = policy.kind == ThresholdPolicy::Kind::Fixed
                       ? policy.value
                       : choose_score_threshold(v, policy.value);
  std::vector<bool> decisions(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) decisions[i] = v[i] > t;
  return metrics_report(std::move(model), scores, decisions, labels, t,
                        policy.kind == ThresholdPolicy::Kind::Fixed ? "fixed" : "contamination");
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"format_version", 1},
          {"model", r.model},
          {"auc", r.auc},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn},
                         {"fn", r.confusion.fn}}},
          {"threshold", r.threshold},
          {"rule", r.rule},
          {"degenerate_precision", r.degenerate_precision}};
}

inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.model = j.at("model").get<std::string>();
  r.auc = j.at("auc").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  const auto& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                 c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>()};
  r.threshold = j.at("threshold").get<double>();
  r.rule = j.at("rule").get<std::string>();
  r.degenerate_precision = j.at("degenerate_precision").get<bool>();
  return r;
}

/// Aligned text table, one row per model: Model | AUC | Precision | Recall | F1-Score.
inline std::string comparison_table(const std::vector<MetricsReport>& reports) {
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.model.size());
  std::ostringstream out;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  out << pad("Model") << "  AUC     Precision  Recall  F1-Score\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "  %.4f  %.4f     %.4f  %.4f", r.auc, r.precision, r.recall, r.f1);
    out << pad(r.model) << buf << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// ROC export: fpr,tpr,threshold
// ---------------------------------------------------------------------------

inline void export_roc(const RocCurve& curve, const std::string& path) {
  if (curve.points.empty()) throw DataError("cannot export an empty ROC curve");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) {
    out << format_double(p.fpr) << ',' << format_double(p.tpr) << ',' << format_double(p.threshold)
        << '\n';
  }
}

inline RocCurve import_roc(const std::string& path) {
  std::vector<std::string> header;
  auto cells = detail::read_csv_cells(path, header);
  if (header != std::vector<std::string>{"fpr", "tpr", "threshold"}) {
    throw DataError("'" + path + "' is not a ROC file");
  }
  RocCurve c;
  for (const auto& row : cells) {
    auto f = detail::parse_double(row[0]);
    auto t = detail::parse_double(row[1]);
    auto th = detail::parse_double(row[2]);
    if (!f || !t || !th) throw DataError("bad number in ROC file");
    c.points.push_back({*f, *t, *th});
  }
  if (c.points.empty()) throw DataError("ROC file has no points");
  c.auc = trapezoid_area(c.points);
  return c;
}

}  // namespace fraudcl
