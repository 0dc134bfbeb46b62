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
 * Uses of the predicted standard deviation: flagging anomalous points of a
 * time series from a look-back regressor, and removing the most uncertain
 * training rows before retraining.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaussreg/datasets.hpp"
#include "gaussreg/error.hpp"
#include "gaussreg/evaluation.hpp"
#include "gaussreg/network.hpp"
#include "gaussreg/trainer.hpp"

namespace gaussreg {

inline constexpr std::size_t kDefaultLookback = 10;
inline constexpr double kDefaultAnomalyThreshold = 0.5;
inline constexpr double kDefaultCleaningFraction = 0.05;

/// Row t holds series[t .. t+n-1]; its target is series[t+n].
struct WindowedSeries {
  Tensor windows;       // M x n
  Tensor next_values;   // M x 1
  std::vector<std::size_t> target_index;
  std::size_t lookback = 0;
  std::size_t series_length = 0;

  std::size_t size() const { return target_index.size(); }

  Dataset to_dataset() const {
    Dataset ds;
    ds.features = windows;
    ds.targets = next_values;
    for (std::size_t j = 0; j < lookback; ++j) ds.feature_names.push_back("lag" + std::to_string(lookback - j));
    ds.target_names = {"next"};
    ds.provenance = detail::concat("windowed series lookback=", lookback);
    return ds;
  }
};

inline WindowedSeries windowize(std::span<const double> series, std::size_t lookback = kDefaultLookback) {
  if (lookback == 0) throw std::invalid_argument("windowize: lookback must be positive");
  if (series.size() <= lookback) {
    throw DataError(detail::concat("windowize: series of length ", series.size(), " is too short for lookback ", lookback));
  }
  const std::size_t m = series.size() - lookback;
  WindowedSeries ws;
  ws.lookback = lookback;
  ws.series_length = series.size();
  std::vector<double> w;
  w.reserve(m * lookback);
  std::vector<double> y(m);
  for (std::size_t t = 0; t < m; ++t) {
    w.insert(w.end(), series.begin() + static_cast<std::ptrdiff_t>(t),
             series.begin() + static_cast<std::ptrdiff_t>(t + lookback));
    y[t] = series[t + lookback];
    ws.target_index.push_back(t + lookback);
  }
  ws.windows = Tensor::matrix(m, lookback, std::move(w));
  ws.next_values = Tensor::matrix(m, 1, std::move(y));
  return ws;
}

/// Predicted mean and standard deviation per series index, original units.
/// The first `lookback` indices have no prediction.
struct UncertaintySeries {
  std::vector<std::optional<double>> mu;
  std::vector<std::optional<double>> sigma;

  /// Indices that carry a prediction, ascending.
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      if (sigma[i]) out.push_back(i);
    }
    return out;
  }
  std::vector<double> sigma_values() const {
    std::vector<double> out;
    for (const auto& s : sigma) {
      if (s) out.push_back(*s);
    }
    return out;
  }
};

inline UncertaintySeries uncertainty_series(const Network& net, const WindowedSeries& ws, const Standardizer& standardizer) {
  if (net.spec().input_dim != ws.lookback) {
    throw DimensionError(detail::concat("uncertainty_series: network expects lookback ", net.spec().input_dim,
                                        ", windows have ", ws.lookback));
  }
  const GaussianBatch pred = standardizer.invert(net.predict(standardizer.apply_features(ws.windows)));
  UncertaintySeries out;
  out.mu.resize(ws.series_length);
  out.sigma.resize(ws.series_length);
  for (std::size_t r = 0; r < ws.size(); ++r) {
    out.mu[ws.target_index[r]] = pred.mu(r, 0);
    out.sigma[ws.target_index[r]] = pred.sigma(r, 0);
  }
  return out;
}

struct FlagOptions {
  double threshold = kDefaultAnomalyThreshold;
  /// Threshold min-max normalized uncertainty (true) or raw sigma (false).
  bool normalize = true;
};

struct AnomalyInterval {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double peak = 0.0;    // largest raw uncertainty inside the run
};

struct AnomalyReport {
  std::vector<std::size_t> time_index;
  std::vector<double> uncertainty;
  /// Min-max normalized uncertainty, in [0, 1].
  std::vector<double> normalized;
  double threshold = kDefaultAnomalyThreshold;
  bool normalized_threshold = true;
  std::vector<std::size_t> flagged;
  std::vector<AnomalyInterval> intervals;
  std::optional<std::string> warning;
};

/// Flags the positions whose (normalized) uncertainty exceeds the threshold
/// and merges consecutive time indices into maximal intervals. time_index
/// defaults to 0..n-1.
inline AnomalyReport flag_anomalies(std::span<const double> sigma, const FlagOptions& opt = {},
                                    std::span<const std::size_t> time_index = {}) {
  if (sigma.empty()) throw DataError("flag_anomalies: empty uncertainty series");
  if (!time_index.empty() && time_index.size() != sigma.size()) {
    throw DimensionError("flag_anomalies: time index and uncertainty lengths differ");
  }
  if (opt.normalize ? !(opt.threshold > 0.0 && opt.threshold < 1.0) : !(opt.threshold > 0.0)) {
    throw DomainError(detail::concat("flag_anomalies: threshold ", opt.threshold, " out of range"));
  }
  AnomalyReport rep;
  rep.threshold = opt.threshold;
  rep.normalized_threshold = opt.normalize;
  rep.uncertainty.assign(sigma.begin(), sigma.end());
  if (time_index.empty()) {
    rep.time_index.resize(sigma.size());
    std::iota(rep.time_index.begin(), rep.time_index.end(), std::size_t{0});
  } else {
    rep.time_index.assign(time_index.begin(), time_index.end());
  }

  const auto [lo_it, hi_it] = std::minmax_element(sigma.begin(), sigma.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  rep.normalized.assign(sigma.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < sigma.size(); ++i) rep.normalized[i] = (sigma[i] - lo) / range;
  } else {
    rep.warning = "uncertainty series is constant; normalization is degenerate";
  }

  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const bool hit = opt.normalize ? (range > 0.0 && rep.normalized[i] > opt.threshold) : sigma[i] > opt.threshold;
    if (!hit) continue;
    const std::size_t t = rep.time_index[i];
    if (!rep.intervals.empty() && rep.flagged.back() + 1 == t) {
      rep.intervals.back().end = t;
      rep.intervals.back().peak = std::max(rep.intervals.back().peak, sigma[i]);
    } else {
      rep.intervals.push_back({t, t, sigma[i]});
    }
    rep.flagged.push_back(t);
  }
  return rep;
}

inline AnomalyReport flag_anomalies(const UncertaintySeries& us, const FlagOptions& opt = {}) {
  const auto idx = us.indices();
  const auto values = us.sigma_values();
  return flag_anomalies(values, opt, idx);
}

inline nlohmann::json to_json(const AnomalyReport& r) {
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& iv : r.intervals) intervals.push_back({{"start", iv.start}, {"end", iv.end}, {"peak_uncertainty", iv.peak}});
  nlohmann::json j{{"threshold", r.threshold},
                   {"normalized_threshold", r.normalized_threshold},
                   {"time_index", r.time_index},
                   {"uncertainty", r.uncertainty},
                   {"normalized_uncertainty", r.normalized},
                   {"flagged", r.flagged},
                   {"intervals", intervals}};
  j["warning"] = r.warning ? nlohmann::json(*r.warning) : nlohmann::json();
  return j;
}

/// start_index,end_index,peak_uncertainty
inline void write_intervals_csv(const AnomalyReport& r, std::ostream& out) {
  out << "start_index,end_index,peak_uncertainty\n";
  for (const auto& iv : r.intervals) out << iv.start << ',' << iv.end << ',' << format_double(iv.peak) << '\n';
}

struct AnomalyConfig {
  std::size_t lookback = kDefaultLookback;
  FlagOptions flag;
  NetworkSpec spec = default_spec();
  TrainConfig train = default_train();

  static NetworkSpec default_spec() {
    NetworkSpec s;
    s.input_dim = kDefaultLookback;
    return s;
  }
  static TrainConfig default_train() {
    TrainConfig c;
    c.epochs = 300;
    return c;
  }
};

struct AnomalyDetection {
  Network network;
  Standardizer standardizer;
  UncertaintySeries uncertainty;
  AnomalyReport report;
  TrainHistory history;
};

/// Fits a look-back regressor to the series itself and flags the indices
/// where its predicted standard deviation is unusually high.
inline AnomalyDetection detect_anomalies(std::span<const double> series, const AnomalyConfig& cfg) {
  const WindowedSeries ws = windowize(series, cfg.lookback);
  const Dataset raw = ws.to_dataset();
  const Standardizer st = Standardizer::fit(raw);
  NetworkSpec spec = cfg.spec;
  spec.input_dim = cfg.lookback;
  spec.output_dim = 1;
  auto trained = train(Network::init(spec), st.apply(raw), nullptr, cfg.train);
  UncertaintySeries us = uncertainty_series(trained.network, ws, st);
  AnomalyReport rep = flag_anomalies(us, cfg.flag);
  return {std::move(trained.network), st, std::move(us), std::move(rep), std::move(trained.history)};
}

struct CleanedDataset {
  Dataset cleaned;
  /// Removed row indices, ascending.
  std::vector<std::size_t> removed;
};

/// Number of rows removed for a fraction: ceil(fraction * n), guarded
/// against representation error in the product.
inline std::size_t cleaning_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

/// Removes the ceil(fraction * N) rows with the largest predicted sigma
/// (mean over output dimensions); ties go to the lower row index. The
/// dataset must be in the units the network was trained on.
inline CleanedDataset clean_dataset(const Network& net, const Dataset& train, double fraction = kDefaultCleaningFraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw DomainError(detail::concat("clean_dataset: fraction must be in [0, 1), got ", fraction));
  }
  const std::size_t n = train.size();
  const std::size_t k = cleaning_count(fraction, n);
  if (k >= n) throw DataError("clean_dataset: removal would empty the dataset");
  if (k == 0) return {train, {}};

  const GaussianBatch pred = net.predict(train.features);
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double s : pred.sigma.row(i)) score[i] += s;
    score[i] /= static_cast<double>(pred.dim());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::size_t> removed(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(removed.begin(), removed.end());
  return {train.without_rows(removed), std::move(removed)};
}

struct CleaningResult {
  std::vector<std::size_t> removed;
  double fraction_removed = 0.0;
  EvalReport before;
  EvalReport after;
  Network before_network;
  Network after_network;
};

/// Train, drop the most uncertain training rows, retrain from the same
/// initialization on what is left, and evaluate both models on the same
/// untouched validation data. train and val are raw (unstandardized).
inline CleaningResult clean_and_retrain(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train_raw,
                                        const Dataset& val_raw, double fraction = kDefaultCleaningFraction) {
  if (train_raw.standardizer || val_raw.standardizer) throw DataError("clean_and_retrain: expects raw datasets");
  const Standardizer st_before = Standardizer::fit(train_raw);
  auto before = train(Network::init(spec), st_before.apply(train_raw), nullptr, cfg);
  const CleanedDataset cleaned = clean_dataset(before.network, st_before.apply(train_raw), fraction);

  const Dataset kept_raw = cleaned.removed.empty() ? train_raw : train_raw.without_rows(cleaned.removed);
  const Standardizer st_after = Standardizer::fit(kept_raw);
  auto after = train(Network::init(spec), st_after.apply(kept_raw), nullptr, cfg);

  return {cleaned.removed,
          static_cast<double>(cleaned.removed.size()) / static_cast<double>(train_raw.size()),
          evaluate(before.network, val_raw, st_before),
          evaluate(after.network, val_raw, st_after),
          std::move(before.network),
          std::move(after.network)};
}

inline nlohmann::json to_json(const CleaningResult& r) {
  return {{"removed", r.removed},
          {"n_removed", r.removed.size()},
          {"fraction_removed", r.fraction_removed},
          {"before", to_json(r.before)},
          {"after", to_json(r.after)}};
}

}  // namespace gaussreg
