#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudcl {

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

enum class ColumnRole { Numeric, Categorical, Label, Ignore };

inline ColumnRole parse_column_role(const std::string& s) {
  if (s == "numeric") return ColumnRole::Numeric;
  if (s == "categorical") return ColumnRole::Categorical;
  if (s == "label") return ColumnRole::Label;
  if (s == "ignore") return ColumnRole::Ignore;
  throw ConfigError("unknown column role '" + s + "' (expected numeric|categorical|label|ignore)");
}

struct CsvSchema {
  std::map<std::string, ColumnRole> roles;
  ColumnRole default_role = ColumnRole::Numeric;

  ColumnRole role_of(const std::string& column) const {
    auto it = roles.find(column);
    return it == roles.end() ? default_role : it->second;
  }
};

enum class UnseenCategory { Error, Ignore };

/// Per categorical column, the ordered category list defining its one-hot block.
using CategoryVocab = std::map<std::string, std::vector<std::string>>;

struct RawTable {
  std::vector<std::string> feature_names;
  FeatureMatrix features;
  std::optional<Labels> labels;
  CategoryVocab vocab;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::vector<std::string>> read_csv_cells(const std::string& path,
                                                            std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file '" + path + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row arity mismatch at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

/// Loads a CSV under `schema`. Categorical columns are one-hot encoded; when
/// `vocab` is given it fixes the category order and unseen categories are
/// handled per `unseen`, otherwise the vocabulary is built from the file
/// (categories sorted).
inline RawTable load_csv(const std::string& path, const CsvSchema& schema,
                         const CategoryVocab* vocab = nullptr,
                         UnseenCategory unseen = UnseenCategory::Error) {
  std::vector<std::string> header;
  auto cells = detail::read_csv_cells(path, header);
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (!seen.insert(h).second) throw DataError("duplicate column '" + h + "'");
    }
  }
  for (const auto& [name, role] : schema.roles) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw DataError("schema column '" + name + "' not present in CSV header");
    }
  }

  RawTable table;
  if (vocab) {
    table.vocab = *vocab;
  } else {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (schema.role_of(header[c]) != ColumnRole::Categorical) continue;
      std::set<std::string> cats;
      for (const auto& row : cells) cats.insert(row[c]);
      table.vocab[header[c]] = {cats.begin(), cats.end()};
    }
  }

  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    switch (schema.role_of(header[c])) {
      case ColumnRole::Numeric:
        table.feature_names.push_back(header[c]);
        break;
      case ColumnRole::Categorical: {
        auto it = table.vocab.find(header[c]);
        if (it == table.vocab.end()) {
          throw DataError("no category vocabulary for column '" + header[c] + "'");
        }
        for (const auto& cat : it->second) table.feature_names.push_back(header[c] + "=" + cat);
        break;
      }
      case ColumnRole::Label:
        if (label_col) throw DataError("more than one label column");
        label_col = c;
        break;
      case ColumnRole::Ignore:
        break;
    }
  }

  const std::size_t n = cells.size();
  table.features = FeatureMatrix(n, table.feature_names.size());
  std::vector<int> labels;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t out = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& cell = cells[r][c];
      switch (schema.role_of(header[c])) {
        case ColumnRole::Numeric: {
          auto v = detail::parse_double(cell);
          if (!v || !std::isfinite(*v)) {
            throw DataError("non-numeric value '" + cell + "' in numeric column '" + header[c] +
                            "' (row " + std::to_string(r + 1) + ")");
          }
          table.features(r, out++) = *v;
          break;
        }
        case ColumnRole::Categorical: {
          const auto& cats = table.vocab.at(header[c]);
          auto it = std::find(cats.begin(), cats.end(), cell);
          if (it == cats.end() && unseen == UnseenCategory::Error) {
            throw DataError("unseen category '" + cell + "' in column '" + header[c] + "'");
          }
          for (std::size_t k = 0; k < cats.size(); ++k) {
            table.features(r, out + k) = (it != cats.end() && k == std::size_t(it - cats.begin())) ? 1.0 : 0.0;
          }
          out += cats.size();
          break;
        }
        case ColumnRole::Label: {
          if (cell != "0" && cell != "1") {
            throw DataError("label value '" + cell + "' is not 0 or 1 (row " +
                            std::to_string(r + 1) + ")");
          }
          labels.push_back(cell == "1" ? 1 : 0);
          break;
        }
        case ColumnRole::Ignore:
          break;
      }
    }
  }
  if (label_col) table.labels = Labels(std::move(labels));
  return table;
}

/// Reads a single-column label file (header row, one 0/1 value per line).
inline Labels load_labels_csv(const std::string& path) {
  CsvSchema schema;
  schema.default_role = ColumnRole::Label;
  std::vector<std::string> header;
  auto cells = detail::read_csv_cells(path, header);
  if (header.size() != 1) throw DataError("labels file must have exactly one column");
  std::vector<int> values;
  values.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r][0] != "0" && cells[r][0] != "1") {
      throw DataError("label value '" + cells[r][0] + "' is not 0 or 1");
    }
    values.push_back(cells[r][0] == "1" ? 1 : 0);
  }
  return Labels(std::move(values));
}

inline void write_features_csv(const std::string& path, const FeatureMatrix& m,
                               const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

inline void write_labels_csv(const std::string& path, const Labels& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "label\n";
  for (int v : labels.values()) out << v << '\n';
}

inline std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
  return names;
}

// ---------------------------------------------------------------------------
// Standardization: x' = (x - mean) / std, population std, constant columns dropped.
// ---------------------------------------------------------------------------

struct StandardizationParams {
  std::vector<std::string> input_features;
  std::vector<std::string> feature_names;
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<std::string> dropped_features;

  std::size_t input_dim() const noexcept { return input_features.size(); }
  std::size_t output_dim() const noexcept { return feature_names.size(); }

  friend bool operator==(const StandardizationParams&, const StandardizationParams&) = default;
};

inline StandardizationParams fit_standardizer(const FeatureMatrix& table,
                                              std::vector<std::string> names = {}) {
  if (names.empty()) names = default_feature_names(table.cols());
  if (names.size() != table.cols()) throw DataError("feature name count does not match columns");
  if (table.rows() < 2) throw DataError("standardizer needs at least 2 rows");
  if (!table.all_finite()) throw DataError("feature matrix contains NaN/Inf");

  StandardizationParams p;
  p.input_features = names;
  const double n = static_cast<double>(table.rows());
  for (std::size_t c = 0; c < table.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < table.rows(); ++r) sum += table(r, c);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < table.rows(); ++r) {
      const double d = table(r, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (sd > 0.0) {
      p.feature_names.push_back(names[c]);
      p.means.push_back(mean);
      p.stds.push_back(sd);
    } else {
      p.dropped_features.push_back(names[c]);
    }
  }
  if (p.feature_names.empty()) throw DataError("all features are constant; nothing to retain");
  return p;
}

inline FeatureMatrix transform(const FeatureMatrix& table, const StandardizationParams& params) {
  if (table.cols() != params.input_dim()) {
    throw DataError("dimension mismatch: matrix has " + std::to_string(table.cols()) +
                    " columns, standardizer expects " + std::to_string(params.input_dim()));
  }
  std::vector<std::size_t> src;
  for (const auto& name : params.feature_names) {
    auto it = std::find(params.input_features.begin(), params.input_features.end(), name);
    src.push_back(static_cast<std::size_t>(it - params.input_features.begin()));
  }
  FeatureMatrix out(table.rows(), src.size());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t j = 0; j < src.size(); ++j) {
      out(r, j) = (table(r, src[j]) - params.means[j]) / params.stds[j];
    }
  }
  return out;
}

inline nlohmann::json to_json(const StandardizationParams& p) {
  return {{"feature_names", p.feature_names},   {"means", p.means},
          {"stds", p.stds},                     {"dropped_features", p.dropped_features},
          {"input_features", p.input_features}};
}

inline StandardizationParams standardizer_from_json(const nlohmann::json& j) {
  StandardizationParams p;
  p.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  p.means = j.at("means").get<std::vector<double>>();
  p.stds = j.at("stds").get<std::vector<double>>();
  p.dropped_features = j.at("dropped_features").get<std::vector<std::string>>();
  if (j.contains("input_features")) {
    p.input_features = j.at("input_features").get<std::vector<std::string>>();
  } else {
    p.input_features = p.feature_names;
  }
  if (p.means.size() != p.feature_names.size() || p.stds.size() != p.feature_names.size()) {
    throw DataError("standardizer JSON: means/stds/feature_names length mismatch");
  }
  for (double s : p.stds) {
    if (!(s > 0.0)) throw DataError("standardizer JSON: non-positive std");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic transactions
// ---------------------------------------------------------------------------

/// Normal rows come from a Gaussian mixture with `n_normal_modes` components.
/// Centres are drawn with spread `normal_mode_spread`; every component shares
/// the correlated covariance A A^T + noise_std^2 I, where A is a random
/// n_features x latent_dim loading matrix. Fraud mode m sits on normal component
/// m mod n_normal_modes, scales the within-component deviation by fraud_scale
/// and adds +/- fraud_shift on `n_shifted_features` random features. With
/// fraud_shift = 0, fraud_scale = 1 and n_fraud_modes a multiple of
/// n_normal_modes the two classes share one distribution.
struct SynthConfig {
  std::size_t n_normal = 2000;
  std::size_t n_fraud = 200;
  std::size_t n_features = 10;
  double fraud_shift = 2.5;
  double fraud_scale = 0.5;
  std::size_t n_fraud_modes = 8;
  std::size_t n_normal_modes = 1;
  double normal_mode_spread = 2.0;
  std::size_t n_shifted_features = 3;  // 0 = every feature
  std::size_t latent_dim = 3;
  double noise_std = 0.3;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_normal < 1) throw ConfigError("normal count must be >= 1");
    if (n_fraud < 1) throw ConfigError("fraud count must be ≥ 1");
    if (n_fraud >= n_normal) throw ConfigError("fraud count must be smaller than normal count");
    if (n_features < 1) throw ConfigError("n_features must be >= 1");
    if (n_fraud_modes < 1) throw ConfigError("n_fraud_modes must be >= 1");
    if (n_normal_modes < 1) throw ConfigError("n_normal_modes must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (n_shifted_features > n_features) {
      throw ConfigError("n_shifted_features must be in [0, n_features]");
    }
    if (!(fraud_scale > 0.0) || !std::isfinite(fraud_shift) || fraud_shift < 0.0 ||
        !(normal_mode_spread >= 0.0) || !(noise_std >= 0.0)) {
      throw ConfigError("fraud_shift, normal_mode_spread and noise_std must be >= 0, fraud_scale > 0");
    }
  }
};

struct SyntheticData {
  FeatureMatrix features;
  Labels labels;
};

inline SyntheticData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.n_features;
  const std::size_t l = cfg.latent_dim;
  std::mt19937_64 rng(derive_seed(cfg.seed, "synth"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix loading(d, l);
  for (auto& v : loading.values()) v = gauss(rng) / std::sqrt(static_cast<double>(l));

  std::vector<std::vector<double>> normal_centres(cfg.n_normal_modes, std::vector<double>(d));
  for (auto& c : normal_centres) {
    for (auto& v : c) v = cfg.normal_mode_spread * gauss(rng) / std::sqrt(2.0);
  }

  std::vector<std::vector<double>> fraud_shifts(cfg.n_fraud_modes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> feats(d);
  for (auto& shift : fraud_shifts) {
    std::iota(feats.begin(), feats.end(), std::size_t{0});
    std::shuffle(feats.begin(), feats.end(), rng);
    const std::size_t n_shifted = cfg.n_shifted_features == 0 ? d : cfg.n_shifted_features;
    for (std::size_t k = 0; k < n_shifted; ++k) {
      const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
      shift[feats[k]] = sign * cfg.fraud_shift;
    }
  }

  const std::size_t n = cfg.n_normal + cfg.n_fraud;
  FeatureMatrix x(n, d);
  std::vector<int> y(n, 0);
  std::uniform_int_distribution<std::size_t> pick_normal(0, cfg.n_normal_modes - 1);
  std::uniform_int_distribution<std::size_t> pick_fraud(0, cfg.n_fraud_modes - 1);
  std::vector<double> z(l);
  for (std::size_t i = 0; i < n; ++i) {
    const bool fraud = i >= cfg.n_normal;
    const std::size_t fm = fraud ? pick_fraud(rng) : 0;
    const std::size_t nm = fraud ? fm % cfg.n_normal_modes : pick_normal(rng);
    for (auto& v : z) v = gauss(rng);
    for (std::size_t c = 0; c < d; ++c) {
      double dev = cfg.noise_std * gauss(rng);
      for (std::size_t k = 0; k < l; ++k) dev += loading(c, k) * z[k];
      x(i, c) = normal_centres[nm][c] + (fraud ? cfg.fraud_scale * dev + fraud_shifts[fm][c] : dev);
    }
    y[i] = fraud ? 1 : 0;
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  SyntheticData out{x.select_rows(perm), Labels{}};
  std::vector<int> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = y[perm[i]];
  out.labels = Labels(std::move(shuffled));
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded partition of [0, n); both index lists are returned sorted.
inline SplitIndices split_indices(std::size_t n, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ConfigError("train_frac must lie strictly between 0 and 1");
  }
  if (n < 2) throw DataError("need at least 2 rows to split");
  auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::shuffle(perm.begin(), perm.end(), rng);
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct DataSplit {
  SplitIndices indices;
  FeatureMatrix train;
  FeatureMatrix test;
  Labels train_labels;
  Labels test_labels;
};

inline DataSplit split(const FeatureMatrix& table, const Labels& labels, double train_frac,
                       std::uint64_t seed) {
  if (labels.size() != table.rows()) throw DataError("labels length does not match rows");
  DataSplit s;
  s.indices = split_indices(table.rows(), train_frac, seed);
  s.train = table.select_rows(s.indices.train);
  s.test = table.select_rows(s.indices.test);
  s.train_labels = labels.select(s.indices.train);
  s.test_labels = labels.select(s.indices.test);
  return s;
}

}  // namespace fraudcl
