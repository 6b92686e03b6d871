#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fraudcl/core.hpp"
#include "fraudcl/data.hpp"

namespace fraudcl {

/// Similarity statistics of one query row against the reference set.
/// score = -mean_sim, so larger means more anomalous.
struct ScoreStats {
  double mean_sim = 0.0;
  double std_sim = 0.0;
  double score = 0.0;
};

/// For each query row, the reference row to leave out (self), or -1.
using ExclusionMap = std::vector<std::ptrdiff_t>;

namespace detail {

inline Matrix unit_rows(const Matrix& m) {
  Matrix u = m;
  for (std::size_t r = 0; r < u.rows(); ++r) {
    const double n = norm(u.row(r));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("undefined cosine similarity: zero-norm embedding row " + std::to_string(r));
    }
    for (double& v : u.row(r)) v /= n;
  }
  return u;
}

}  // namespace detail

/// Mean and standard deviation of the cosine similarities between each query
/// row and every (non-excluded) reference row. Both statistics divide by the
/// number of compared rows, i.e. N - 1 when a row is scored against the set it
/// belongs to.
inline std::vector<ScoreStats> score_all(const EmbeddingMatrix& query,
                                         const EmbeddingMatrix& reference,
                                         const ExclusionMap& exclude) {
  if (query.cols() != reference.cols()) throw DataError("query/reference embedding dims differ");
  if (reference.rows() < 2) throw DataError("reference set needs at least 2 rows");
  if (!exclude.empty() && exclude.size() != query.rows()) {
    throw DataError("exclusion map length does not match query rows");
  }
  const Matrix q = detail::unit_rows(query);
  const Matrix ref = detail::unit_rows(reference);
  std::vector<ScoreStats> out(q.rows());
  std::vector<double> sims(ref.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::ptrdiff_t skip = exclude.empty() ? -1 : exclude[i];
    auto qi = q.row(i);
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t j = 0; j < ref.rows(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == skip) continue;
      const double s = std::clamp(dot(qi, ref.row(j)), -1.0, 1.0);
      sims[count++] = s;
      sum += s;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t k = 0; k < count; ++k) ss += (sims[k] - mean) * (sims[k] - mean);
    out[i].mean_sim = mean;
    out[i].std_sim = std::sqrt(ss / static_cast<double>(count));
    out[i].score = -mean;
  }
  return out;
}

/// `query_is_reference` excludes the diagonal (row i vs itself).
inline std::vector<ScoreStats> score_all(const EmbeddingMatrix& query,
                                         const EmbeddingMatrix& reference,
                                         bool query_is_reference = false) {
  ExclusionMap ex;
  if (query_is_reference) {
    if (query.rows() != reference.rows()) {
      throw DataError("query_is_reference requires identical row counts");
    }
    ex.resize(query.rows());
    std::iota(ex.begin(), ex.end(), std::ptrdiff_t{0});
  }
  return score_all(query, reference, ex);
}

/// Seeded subsample of reference row indices (sorted); all rows when
/// max_size is 0 or >= n.
inline std::vector<std::size_t> subsample_reference(std::size_t n, std::size_t max_size,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_size == 0 || max_size >= n) return idx;
  std::mt19937_64 rng(derive_seed(seed, "reference"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

enum class DecisionRule {
  PaperLiteral,  // fraud when mean - std > t
  LowMean,       // fraud when mean < t
};

inline std::string to_string(DecisionRule r) {
  return r == DecisionRule::PaperLiteral ? "paper_literal" : "low_mean";
}

inline DecisionRule parse_rule(const std::string& s) {
  if (s == "paper_literal") return DecisionRule::PaperLiteral;
  if (s == "low_mean") return DecisionRule::LowMean;
  throw ConfigError("unknown rule '" + s + "'; valid rules: low_mean, paper_literal");
}

struct Decision {
  bool is_fraud = false;
  double score = 0.0;
  double threshold_used = 0.0;
  DecisionRule rule = DecisionRule::LowMean;
};

inline Decision decide(const ScoreStats& s, double t, DecisionRule rule) {
  const bool fraud = rule == DecisionRule::PaperLiteral ? (s.mean_sim - s.std_sim > t)
                                                        : (s.mean_sim < t);
  return {fraud, s.score, t, rule};
}

inline Decision decide(const ScoreStats& s, double t, const std::string& rule) {
  return decide(s, t, parse_rule(rule));
}

inline std::size_t contamination_count(double contamination, std::size_t n) {
  if (!(contamination > 0.0 && contamination < 1.0)) {
    throw ConfigError("contamination must lie strictly between 0 and 1");
  }
  // The 1e-9 slack keeps products like (1/3) * 3 from rounding up to 2.
  const double k = std::ceil(contamination * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, n);
}

namespace detail {

// Threshold strictly above the k-th smallest value and at or below the next
// distinct value, so `value < t` selects the k smallest plus their ties.
inline double cut_above_kth_smallest(std::vector<double> v, std::size_t k) {
  std::sort(v.begin(), v.end());
  const double kth = v[k - 1];
  auto next = std::upper_bound(v.begin(), v.end(), kth);
  if (next == v.end()) return std::nextafter(kth, std::numeric_limits<double>::infinity());
  const double mid = kth + (*next - kth) / 2.0;
  return mid > kth ? mid : *next;
}

}  // namespace detail

/// Threshold flagging ceil(contamination * N) samples (plus ties) under `rule`.
inline double choose_threshold(const std::vector<ScoreStats>& stats, double contamination,
                               DecisionRule rule = DecisionRule::LowMean) {
  if (stats.empty()) throw DataError("no scores to threshold");
  const std::size_t k = contamination_count(contamination, stats.size());
  std::vector<double> v;
  v.reserve(stats.size());
  if (rule == DecisionRule::LowMean) {
    for (const auto& s : stats) v.push_back(s.mean_sim);
    return detail::cut_above_kth_smallest(std::move(v), k);
  }
  // mean - std > t  <=>  -(mean - std) < -t
  for (const auto& s : stats) v.push_back(-(s.mean_sim - s.std_sim));
  return -detail::cut_above_kth_smallest(std::move(v), k);
}

/// Threshold on a generic higher-is-anomalous score: `score > t` flags
/// ceil(contamination * N) samples plus ties.
inline double choose_score_threshold(const std::vector<double>& scores, double contamination) {
  if (scores.empty()) throw DataError("no scores to threshold");
  const std::size_t k = contamination_count(contamination, scores.size());
  std::vector<double> neg(scores.size());
  std::transform(scores.begin(), scores.end(), neg.begin(), [](double s) { return -s; });
  return -detail::cut_above_kth_smallest(std::move(neg), k);
}

// ---------------------------------------------------------------------------
// Score files: sample_index, mean_sim, std_sim, score, is_fraud, rule, threshold
// ---------------------------------------------------------------------------

struct ScoreRow {
  std::size_t sample_index = 0;
  std::optional<double> mean_sim;
  std::optional<double> std_sim;
  double score = 0.0;
  bool is_fraud = false;
  std::string rule;
  double threshold = 0.0;
};

inline void write_score_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "sample_index,mean_sim,std_sim,score,is_fraud,rule,threshold\n";
  for (const auto& r : rows) {
    out << r.sample_index << ',' << (r.mean_sim ? format_double(*r.mean_sim) : "") << ','
        << (r.std_sim ? format_double(*r.std_sim) : "") << ',' << format_double(r.score) << ','
        << (r.is_fraud ? 1 : 0) << ',' << r.rule << ',' << format_double(r.threshold) << '\n';
  }
}

inline std::vector<ScoreRow> read_score_csv(const std::string& path) {
  std::vector<std::string> header;
  auto cells = detail::read_csv_cells(path, header);
  const std::vector<std::string> expected{"sample_index", "mean_sim", "std_sim", "score",
                                          "is_fraud",     "rule",     "threshold"};
  if (header != expected) throw DataError("'" + path + "' is not a score file (bad header)");
  auto num = [&](const std::string& s, const char* col) {
    auto v = detail::parse_double(s);
    if (!v) throw DataError(std::string("bad value in score column ") + col + ": '" + s + "'");
    return *v;
  };
  std::vector<ScoreRow> rows;
  for (const auto& c : cells) {
    ScoreRow r;
    r.sample_index = static_cast<std::size_t>(num(c[0], "sample_index"));
    if (!c[1].empty()) r.mean_sim = num(c[1], "mean_sim");
    if (!c[2].empty()) r.std_sim = num(c[2], "std_sim");
    r.score = num(c[3], "score");
    if (c[4] != "0" && c[4] != "1") throw DataError("is_fraud must be 0 or 1");
    r.is_fraud = c[4] == "1";
    r.rule = c[5];
    r.threshold = num(c[6], "threshold");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace fraudcl
