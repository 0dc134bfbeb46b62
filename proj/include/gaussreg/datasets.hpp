// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/*
 * Tabular data: CSV ingestion, column standardization, seeded splitting and
 * synthetic generators whose conditional densities are known in closed form.
 */

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaussreg/error.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/rng.hpp"
#include "gaussreg/tensor.hpp"

namespace gaussreg {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Parses a complete field as a double; surrounding blanks and a leading '+'
/// are accepted. Returns nullopt for anything else.
inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    out.emplace_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace detail

/// Per-column location and scale.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;
  /// Columns with zero variance; their std is stored as 1.
  std::vector<bool> degenerate;

  std::size_t size() const { return mean.size(); }
};

class Standardizer;

struct Dataset {
  Tensor features;  // N x P
  Tensor targets;   // N x D
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::string provenance;
  /// Number of input rows dropped because of non-finite values.
  std::size_t rejected_rows = 0;
  /// Set when features/targets hold standardized values; holds the stats
  /// that map them back.
  std::shared_ptr<const Standardizer> standardizer;

  std::size_t size() const { return features.rows(); }
  std::size_t n_features() const { return features.cols(); }
  std::size_t n_targets() const { return targets.cols(); }

  /// Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const {
    if (rows.empty()) throw DataError("Dataset::subset: empty row selection");
    std::vector<double> f, t;
    f.reserve(rows.size() * n_features());
    t.reserve(rows.size() * n_targets());
    for (auto r : rows) {
      if (r >= size()) throw std::out_of_range(detail::concat("Dataset::subset: row ", r, " out of range"));
      const auto fr = features.row(r);
      const auto tr = targets.row(r);
      f.insert(f.end(), fr.begin(), fr.end());
      t.insert(t.end(), tr.begin(), tr.end());
    }
    Dataset out = *this;
    out.features = Tensor::matrix(rows.size(), n_features(), std::move(f));
    out.targets = Tensor::matrix(rows.size(), n_targets(), std::move(t));
    out.rejected_rows = 0;
    return out;
  }

  /// All rows except the listed ones, original order preserved.
  Dataset without_rows(std::span<const std::size_t> removed) const {
    std::vector<bool> drop(size(), false);
    for (auto r : removed) {
      if (r >= size()) throw std::out_of_range(detail::concat("Dataset::without_rows: row ", r, " out of range"));
      drop[r] = true;
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < size(); ++i) {
      if (!drop[i]) keep.push_back(i);
    }
    if (keep.empty()) throw DataError("Dataset::without_rows: removal would leave no rows");
    return subset(keep);
  }
};

namespace detail {

inline ColumnStats fit_columns(const Tensor& m) {
  const std::size_t n = m.rows(), p = m.cols();
  ColumnStats s{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0), std::vector<bool>(p, false)};
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += m(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = m(i, j) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.mean[j] = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.std[j] = sd;
    } else {
      s.std[j] = 1.0;
      s.degenerate[j] = true;
    }
  }
  return s;
}

inline Tensor apply_columns(const ColumnStats& s, const Tensor& m, bool inverse) {
  if (m.cols() != s.size()) {
    throw DimensionError(concat("Standardizer: expected ", s.size(), " columns, got ", m.cols()));
  }
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(i, j) = inverse ? m(i, j) * s.std[j] + s.mean[j] : (m(i, j) - s.mean[j]) / s.std[j];
    }
  }
  return out;
}

}  // namespace detail

/// Column-wise (v - mean) / std for features and targets, with population
/// standard deviations taken from the training split.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(ColumnStats features, ColumnStats targets)
      : features_(std::move(features)), targets_(std::move(targets)), fitted_(true) {}

  static Standardizer fit(const Dataset& train) {
    if (train.size() == 0) throw DataError("Standardizer::fit: empty dataset");
    return Standardizer(detail::fit_columns(train.features), detail::fit_columns(train.targets));
  }

  bool fitted() const { return fitted_; }
  const ColumnStats& feature_stats() const { return features_; }
  const ColumnStats& target_stats() const { return targets_; }

  /// Per-dimension target standard deviation (the nll_rescale argument).
  std::span<const double> target_scale() const {
    require_fit();
    return targets_.std;
  }

  Tensor apply_features(const Tensor& x) const {
    require_fit();
    return detail::apply_columns(features_, x, false);
  }
  Tensor apply_targets(const Tensor& y) const {
    require_fit();
    return detail::apply_columns(targets_, y, false);
  }
  Tensor invert_features(const Tensor& x) const {
    require_fit();
    return detail::apply_columns(features_, x, true);
  }
  Tensor invert_targets(const Tensor& y) const {
    require_fit();
    return detail::apply_columns(targets_, y, true);
  }

  /// Maps predictions made in standardized target units back to original units.
  GaussianBatch invert(const GaussianBatch& pred) const {
    require_fit();
    GaussianBatch out{invert_targets(pred.mu), pred.sigma};
    for (std::size_t i = 0; i < out.sigma.rows(); ++i) {
      for (std::size_t d = 0; d < out.sigma.cols(); ++d) out.sigma(i, d) *= targets_.std[d];
    }
    return out;
  }

  Dataset apply(const Dataset& raw) const {
    require_fit();
    if (raw.standardizer) throw DataError("Standardizer::apply: dataset is already standardized");
    Dataset out = raw;
    out.features = apply_features(raw.features);
    out.targets = apply_targets(raw.targets);
    out.standardizer = std::make_shared<const Standardizer>(*this);
    return out;
  }

 private:
  void require_fit() const {
    if (!fitted_) throw std::logic_error("Standardizer: used before fit()");
  }

  ColumnStats features_;
  ColumnStats targets_;
  bool fitted_ = false;
};

/// Reads a header-first CSV. Non-target columns become features. Rows with
/// a non-finite value are dropped and counted in rejected_rows.
inline Dataset parse_csv(std::istream& in, std::span<const std::string> target_columns, std::string provenance = {}) {
  if (target_columns.empty()) throw DataError("load_csv: no target column given");
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    if (!detail::blank(line)) have_header = true;
  }
  if (!have_header) throw DataError("load_csv: empty file" + (provenance.empty() ? "" : " " + provenance));
  const auto header = detail::split_csv_line(line);
  const std::size_t ncols = header.size();

  std::vector<std::size_t> target_idx;
  for (const auto& name : target_columns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("load_csv: missing target column '" + name + "'");
    target_idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<std::size_t> feature_idx;
  for (std::size_t j = 0; j < ncols; ++j) {
    if (std::find(target_idx.begin(), target_idx.end(), j) == target_idx.end()) feature_idx.push_back(j);
  }
  if (feature_idx.empty()) throw DataError("load_csv: no feature columns remain after selecting targets");

  Dataset ds;
  ds.provenance = std::move(provenance);
  for (auto j : feature_idx) ds.feature_names.push_back(header[j]);
  for (auto j : target_idx) ds.target_names.push_back(header[j]);

  std::vector<double> f, t;
  std::size_t n = 0;
  std::vector<double> row(ncols);
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != ncols) {
      throw DataError(detail::concat("load_csv: line ", line_no, " has ", cells.size(), " fields, expected ", ncols));
    }
    bool finite = true;
    for (std::size_t j = 0; j < ncols; ++j) {
      const auto v = parse_double(cells[j]);
      if (!v) {
        throw DataError(detail::concat("load_csv: non-numeric value '", cells[j], "' at line ", line_no, ", column '",
                                       header[j], "'"));
      }
      row[j] = *v;
      finite = finite && std::isfinite(*v);
    }
    if (!finite) {
      ++ds.rejected_rows;
      continue;
    }
    for (auto j : feature_idx) f.push_back(row[j]);
    for (auto j : target_idx) t.push_back(row[j]);
    ++n;
  }
  if (n == 0) throw DataError("load_csv: no usable data rows");
  ds.features = Tensor::matrix(n, feature_idx.size(), std::move(f));
  ds.targets = Tensor::matrix(n, target_idx.size(), std::move(t));
  return ds;
}

inline Dataset load_csv(const std::string& path, std::span<const std::string> target_columns) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");
  return parse_csv(in, target_columns, path);
}

/// Features first, then targets, one row per sample.
inline void write_csv(const Dataset& ds, std::ostream& out) {
  std::vector<std::string> names = ds.feature_names;
  names.insert(names.end(), ds.target_names.begin(), ds.target_names.end());
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bool first = true;
    for (double v : ds.features.row(i)) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    for (double v : ds.targets.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "' for writing");
  write_csv(ds, out);
}

/// Univariate series; labels are opaque (dates or indices).
struct Series {
  std::vector<std::string> labels;
  std::vector<double> values;
};

/// Accepts `date,value` or a single `value` column.
inline Series parse_series(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    if (!detail::blank(line)) have_header = true;
  }
  if (!have_header) throw DataError("load_series: empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 1 && header.size() != 2) {
    throw DataError("load_series: expected columns 'date,value' or 'value'");
  }
  const std::size_t value_col = header.size() - 1;
  Series s;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(detail::concat("load_series: line ", line_no, " has ", cells.size(), " fields"));
    }
    const auto v = parse_double(cells[value_col]);
    if (!v || !std::isfinite(*v)) {
      throw DataError(detail::concat("load_series: bad value '", cells[value_col], "' at line ", line_no));
    }
    s.labels.push_back(header.size() == 2 ? cells[0] : std::to_string(s.values.size()));
    s.values.push_back(*v);
  }
  if (s.values.empty()) throw DataError("load_series: no data rows");
  return s;
}

inline Series load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_series: cannot open '" + path + "'");
  return parse_series(in);
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded partition; the test part has round(N * fraction) rows (at least
/// one, and at least one row is left for training). Both parts keep file order.
inline Split random_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError(detail::concat("random_split: fraction must be in (0, 1), got ", test_fraction));
  }
  const std::size_t n = data.size();
  if (n < 2) throw DataError("random_split: need at least 2 rows");
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed, Stream::split);
  rng.shuffle(std::span<std::size_t>(perm));

  Split s;
  s.test_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  s.train = data.subset(s.train_rows);
  s.test = data.subset(s.test_rows);
  return s;
}

// Synthetic generators ------------------------------------------------------

/// y = sin(2x) + (0.1 + 0.2 x^2) * eps with x ~ U[-2, 2], eps ~ N(0, 1).
struct Heteroscedastic {
  static double mu_star(double x) { return std::sin(2.0 * x); }
  static double sigma_star(double x) { return 0.1 + 0.2 * x * x; }
  static constexpr double x_min = -2.0;
  static constexpr double x_max = 2.0;
};

inline Dataset gen_heteroscedastic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DataError("gen_heteroscedastic: n must be positive");
  Rng rng(seed, Stream::noise);
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(Heteroscedastic::x_min, Heteroscedastic::x_max);
    xs[i] = x;
    ys[i] = Heteroscedastic::mu_star(x) + Heteroscedastic::sigma_star(x) * rng.normal();
  }
  Dataset ds;
  ds.features = Tensor::matrix(n, 1, std::move(xs));
  ds.targets = Tensor::matrix(n, 1, std::move(ys));
  ds.feature_names = {"x"};
  ds.target_names = {"y"};
  ds.provenance = detail::concat("synthetic:hetero n=", n, " seed=", seed);
  return ds;
}

/// One constant feature (1.0); y ~ N(mu_star, sigma_star^2).
inline Dataset gen_constant_gaussian(std::size_t n, double mu_star, double sigma_star, std::uint64_t seed) {
  if (n == 0) throw DataError("gen_constant_gaussian: n must be positive");
  if (!(sigma_star > 0.0)) throw DomainError("gen_constant_gaussian: sigma_star must be positive");
  Rng rng(seed, Stream::noise);
  std::vector<double> ys(n);
  for (auto& y : ys) y = rng.normal(mu_star, sigma_star);
  Dataset ds;
  ds.features = Tensor::filled(Shape{n, 1}, 1.0);
  ds.targets = Tensor::matrix(n, 1, std::move(ys));
  ds.feature_names = {"x"};
  ds.target_names = {"y"};
  ds.provenance = detail::concat("synthetic:constant n=", n, " seed=", seed);
  return ds;
}

struct CorruptedDataset {
  Dataset data;
  /// mask[i] is true when row i had its target replaced.
  std::vector<bool> mask;

  std::vector<std::size_t> corrupted_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) rows.push_back(i);
    }
    return rows;
  }
};

/// Replaces the targets of round(N * fraction) seeded rows with targets of
/// other rows: the chosen rows' targets are rotated among themselves, so
/// every corrupted row receives another row's label.
inline CorruptedDataset gen_corrupted(const Dataset& base, double corrupt_fraction, std::uint64_t seed) {
  if (!(corrupt_fraction >= 0.0 && corrupt_fraction < 1.0)) {
    throw DomainError(detail::concat("gen_corrupted: fraction must be in [0, 1), got ", corrupt_fraction));
  }
  const std::size_t n = base.size();
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * corrupt_fraction));
  CorruptedDataset out{base, std::vector<bool>(n, false)};
  if (k == 0) return out;

  Rng rng(seed, Stream::corrupt);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  const std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));

  const std::size_t d = base.n_targets();
  auto& t = out.data.targets;
  if (k == 1) {
    // Borrow from a row outside the selection.
    const std::size_t donor = perm[1 + static_cast<std::size_t>(rng.below(n - 1))];
    for (std::size_t c = 0; c < d; ++c) t(chosen[0], c) = base.targets(donor, c);
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t src = chosen[(i + 1) % k];
      for (std::size_t c = 0; c < d; ++c) t(chosen[i], c) = base.targets(src, c);
    }
  }
  for (auto r : chosen) out.mask[r] = true;
  out.data.provenance = detail::concat(base.provenance, " corrupted fraction=", corrupt_fraction, " seed=", seed);
  return out;
}

struct SeriesOptions {
  double ar_coefficient = 0.7;
  double trend = 0.02;
  double level = 100.0;
  /// Innovation standard deviation of the AR(1) part; anomaly sizes are
  /// expressed in this unit.
  double noise_sigma = 1.0;
  bool inject = true;
  std::size_t min_anomalies = 3;
  std::size_t max_anomalies = 5;
  double min_shift = 6.0;
  double max_shift = 10.0;
  /// Number of consecutive steps each level shift lasts.
  std::size_t shift_length = 3;
  /// Anomalies are kept this far from the series ends and from each other.
  std::size_t margin = 20;
};

struct AnomalySeries {
  std::vector<double> values;
  std::vector<std::size_t> anomalies;
  /// Signed shift applied at each anomaly, in series units.
  std::vector<double> shifts;
  double base_sigma = 1.0;
};

/// AR(1) noise around a linear trend with seeded level shifts of 6-10 base
/// standard deviations at 3-5 positions.
inline AnomalySeries gen_series_with_anomalies(std::size_t length, std::uint64_t seed, const SeriesOptions& opt = {}) {
  if (length <= 30) throw DataError(detail::concat("gen_series_with_anomalies: length must exceed 30, got ", length));
  if (opt.min_anomalies > opt.max_anomalies || opt.shift_length == 0) {
    throw std::invalid_argument("gen_series_with_anomalies: inconsistent options");
  }
  Rng noise(seed, Stream::noise);
  AnomalySeries s;
  s.base_sigma = opt.noise_sigma;
  s.values.resize(length);
  double ar = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    ar = opt.ar_coefficient * ar + opt.noise_sigma * noise.normal();
    s.values[t] = opt.level + opt.trend * static_cast<double>(t) + ar;
  }
  if (!opt.inject) return s;

  Rng pick(seed, Stream::anomaly);
  const std::size_t want =
      opt.min_anomalies + static_cast<std::size_t>(pick.below(opt.max_anomalies - opt.min_anomalies + 1));
  const std::size_t lo = opt.margin;
  const std::size_t hi = length > opt.margin + opt.shift_length ? length - opt.margin - opt.shift_length : lo;
  if (hi <= lo) return s;
  std::size_t attempts = 0;
  while (s.anomalies.size() < want && attempts++ < 10000) {
    const std::size_t at = lo + static_cast<std::size_t>(pick.below(hi - lo));
    const bool clear = std::all_of(s.anomalies.begin(), s.anomalies.end(), [&](std::size_t a) {
      return (at > a ? at - a : a - at) >= opt.margin;
    });
    if (clear) s.anomalies.push_back(at);
  }
  std::sort(s.anomalies.begin(), s.anomalies.end());
  for (auto at : s.anomalies) {
    const double size = pick.uniform(opt.min_shift, opt.max_shift) * opt.noise_sigma;
    const double shift = pick.uniform() < 0.5 ? -size : size;
    s.shifts.push_back(shift);
    for (std::size_t t = at; t < at + opt.shift_length; ++t) s.values[t] += shift;
  }
  return s;
}

}  // namespace gaussreg
