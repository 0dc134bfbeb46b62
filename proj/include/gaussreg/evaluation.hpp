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

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "gaussreg/datasets.hpp"
#include "gaussreg/error.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/network.hpp"
#include "gaussreg/trainer.hpp"

namespace gaussreg {

inline constexpr std::array<double, 3> kCoverageLevels{1.0, 2.0, 3.0};

struct EvalReport {
  /// Mean per-sample NLL in original target units.
  double mean_nll = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  /// k -> fraction of targets inside mu +/- k sigma.
  std::map<double, double> coverage;
  std::size_t n_samples = 0;
};

/// Fraction of (sample, dimension) entries with |y - mu| <= k sigma.
inline double coverage_at(const GaussianBatch& pred, const Tensor& y, double k) {
  detail::check_batch(pred, y);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::abs(y[i] - pred.mu[i]) <= k * pred.sigma[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

/// Metrics for predictions already expressed in original units. RMSE and MAE
/// are taken over all entries.
inline EvalReport evaluate_predictions(const GaussianBatch& pred, const Tensor& y) {
  detail::check_batch(pred, y);
  EvalReport r;
  r.n_samples = y.rows();
  r.mean_nll = nll_batch(pred, y);
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - pred.mu[i];
    se += e * e;
    ae += std::abs(e);
  }
  r.rmse = std::sqrt(se / static_cast<double>(y.size()));
  r.mae = ae / static_cast<double>(y.size());
  for (double k : kCoverageLevels) r.coverage[k] = coverage_at(pred, y, k);
  return r;
}

/// Evaluates on raw (unstandardized) test data. NLL is computed in
/// standardized units and shifted by ln(target scale); point metrics and
/// coverage use destandardized predictions.
inline EvalReport evaluate(const Network& net, const Dataset& test, const Standardizer& standardizer) {
  if (test.standardizer) throw DataError("evaluate: expects raw test data, got a standardized dataset");
  if (standardizer.feature_stats().size() != test.n_features() || standardizer.target_stats().size() != test.n_targets()) {
    throw DimensionError(detail::concat("evaluate: standardizer covers ", standardizer.feature_stats().size(), "/",
                                        standardizer.target_stats().size(), " columns, data has ", test.n_features(), "/",
                                        test.n_targets()));
  }
  const GaussianBatch std_pred = net.predict(standardizer.apply_features(test.features));
  const Tensor std_targets = standardizer.apply_targets(test.targets);
  const double nll = nll_rescale(nll_batch(std_pred, std_targets), standardizer.target_scale());
  EvalReport r = evaluate_predictions(standardizer.invert(std_pred), test.targets);
  r.mean_nll = nll;
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cov = nlohmann::json::object();
  for (const auto& [k, v] : r.coverage) cov[format_double(k)] = v;
  return {{"mean_nll", r.mean_nll}, {"rmse", r.rmse}, {"mae", r.mae}, {"coverage", cov}, {"n_samples", r.n_samples}};
}

/// Mean and sample (n-1) standard deviation; std is absent for n < 2.
struct Aggregate {
  double mean = 0.0;
  std::optional<double> std;
  std::size_t count = 0;
};

inline Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

inline nlohmann::json to_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"std", a.std ? nlohmann::json(*a.std) : nlohmann::json()}, {"count", a.count}};
}

struct SplitRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  EvalReport report;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::string error;
};

struct BenchmarkOptions {
  std::size_t n_splits = 20;
  double test_fraction = 0.1;
  /// Split i uses seed first_seed + i.
  std::uint64_t first_seed = 0;
  std::size_t threads = 1;
};

struct BenchmarkResult {
  std::vector<SplitRecord> splits;
  Aggregate nll;
  Aggregate rmse;
  std::size_t n_failed = 0;

  std::vector<double> nll_values() const {
    std::vector<double> v;
    for (const auto& s : splits) {
      if (s.ok) v.push_back(s.report.mean_nll);
    }
    return v;
  }
  std::vector<double> rmse_values() const {
    std::vector<double> v;
    for (const auto& s : splits) {
      if (s.ok) v.push_back(s.report.rmse);
    }
    return v;
  }
};

/// Split -> fit standardizer on train -> train -> evaluate, once per split.
/// Network and shuffling seeds are derived from the split seed; results do
/// not depend on the thread count.
inline SplitRecord run_split(const Dataset& data, std::size_t index, const BenchmarkOptions& opt, const TrainConfig& cfg,
                             const NetworkSpec& spec) {
  SplitRecord rec;
  rec.index = index;
  rec.seed = opt.first_seed + index;
  const Split split = random_split(data, opt.test_fraction, rec.seed);
  rec.train_size = split.train.size();
  rec.test_size = split.test.size();
  const Standardizer st = Standardizer::fit(split.train);

  NetworkSpec s = spec;
  s.seed = derive_seed(spec.seed, rec.seed);
  TrainConfig c = cfg;
  c.seed = derive_seed(cfg.seed, rec.seed);
  try {
    auto trained = train(Network::init(s), st.apply(split.train), nullptr, c);
    rec.report = evaluate(trained.network, split.test, st);
    rec.ok = true;
  } catch (const TrainingAborted& e) {
    rec.error = e.what();
  }
  return rec;
}

inline void finalize(BenchmarkResult& result) {
  result.n_failed = 0;
  for (const auto& s : result.splits) result.n_failed += s.ok ? 0 : 1;
  const auto nll = result.nll_values();
  const auto rmse = result.rmse_values();
  result.nll = aggregate(nll);
  result.rmse = aggregate(rmse);
}

inline BenchmarkResult run_benchmark(const Dataset& data, const BenchmarkOptions& opt, const TrainConfig& cfg,
                                     const NetworkSpec& spec) {
  if (opt.n_splits == 0) throw std::invalid_argument("run_benchmark: n_splits must be positive");
  if (data.standardizer) throw DataError("run_benchmark: expects raw data");
  BenchmarkResult result;
  result.splits.resize(opt.n_splits);
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads, opt.n_splits));
  if (workers == 1) {
    for (std::size_t i = 0; i < opt.n_splits; ++i) result.splits[i] = run_split(data, i, opt, cfg, spec);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < opt.n_splits; i = next++) result.splits[i] = run_split(data, i, opt, cfg, spec);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  finalize(result);
  return result;
}

inline nlohmann::json to_json(const BenchmarkResult& r) {
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : r.splits) {
    nlohmann::json j{{"index", s.index}, {"seed", s.seed}, {"ok", s.ok}, {"train_size", s.train_size},
                     {"test_size", s.test_size}};
    if (s.ok) {
      j["report"] = to_json(s.report);
    } else {
      j["error"] = s.error;
    }
    splits.push_back(std::move(j));
  }
  return {{"splits", splits},
          {"aggregate", {{"nll", to_json(r.nll)}, {"rmse", to_json(r.rmse)}, {"n_failed", r.n_failed}}}};
}

/// One CSV row per split: index,seed,ok,nll,rmse,mae,coverage_1,coverage_2,coverage_3
inline void write_benchmark_csv(const BenchmarkResult& r, std::ostream& out) {
  out << "split,seed,ok,nll,rmse,mae,coverage_1,coverage_2,coverage_3\n";
  for (const auto& s : r.splits) {
    out << s.index << ',' << s.seed << ',' << (s.ok ? 1 : 0);
    if (s.ok) {
      out << ',' << format_double(s.report.mean_nll) << ',' << format_double(s.report.rmse) << ','
          << format_double(s.report.mae);
      for (double k : kCoverageLevels) out << ',' << format_double(s.report.coverage.at(k));
    } else {
      out << ",,,,,,";
    }
    out << '\n';
  }
}

}  // namespace gaussreg
