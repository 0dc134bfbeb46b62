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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gaussreg/datasets.hpp"
#include "gaussreg/error.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/network.hpp"
#include "gaussreg/rng.hpp"
#include "gaussreg/tensor.hpp"

namespace gaussreg {

enum class LossKind {
  /// Batch-mean Gaussian negative log-likelihood on (mu, sigma).
  gaussian_nll,
  /// Batch-mean squared error on mu only; sigma outputs receive no gradient.
  squared_error,
};

inline std::string_view loss_name(LossKind k) { return k == LossKind::gaussian_nll ? "gaussian_nll" : "squared_error"; }

inline LossKind parse_loss(std::string_view s) {
  if (s == "gaussian_nll" || s == "nll") return LossKind::gaussian_nll;
  if (s == "squared_error" || s == "mse") return LossKind::squared_error;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

/// Defaults are the desk-scale settings. image_scale() returns the
/// lr 5e-5 / batch 8 setting used for large image regressors.
struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Global-norm gradient clipping threshold; 0 disables clipping.
  double clip_norm = 10.0;
  /// Stop when validation loss has not improved for this many epochs and
  /// restore the best parameters. Needs a validation set.
  std::optional<std::size_t> early_stopping_patience;
  LossKind loss = LossKind::gaussian_nll;

  static TrainConfig image_scale() {
    TrainConfig c;
    c.learning_rate = 5e-5;
    c.batch_size = 8;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("TrainConfig: beta1 must be in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("TrainConfig: beta2 must be in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be positive");
    if (clip_norm < 0.0) throw std::invalid_argument("TrainConfig: clip_norm must be non-negative");
    if (early_stopping_patience && *early_stopping_patience == 0) {
      throw std::invalid_argument("TrainConfig: patience must be positive");
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_epsilon", c.adam_epsilon},
                     {"seed", c.seed},
                     {"shuffle", c.shuffle},
                     {"clip_norm", c.clip_norm},
                     {"loss", loss_name(c.loss)}};
  j["early_stopping_patience"] = c.early_stopping_patience ? nlohmann::json(*c.early_stopping_patience) : nlohmann::json();
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.shuffle = j.at("shuffle").get<bool>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.loss = parse_loss(j.at("loss").get<std::string>());
  const auto& p = j.at("early_stopping_patience");
  c.early_stopping_patience = p.is_null() ? std::nullopt : std::optional<std::size_t>(p.get<std::size_t>());
}

struct TrainHistory {
  /// Mean training loss per completed epoch.
  std::vector<double> train_loss;
  /// Validation loss per completed epoch, when a validation set was given.
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  std::size_t epochs() const { return train_loss.size(); }
};

/// First and second moment estimates, one tensor per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState like(std::span<const Tensor> params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.push_back(Tensor::zeros(p.shape()));
      s.v.push_back(Tensor::zeros(p.shape()));
    }
    return s;
  }
};

/// Bias-corrected Adam update at step t (1-based).
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, std::size_t t,
                      const TrainConfig& cfg) {
  if (t == 0) throw std::invalid_argument("adam_step: step index starts at 1");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (grads[k].shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
      throw DimensionError(detail::concat("adam_step: shape mismatch at parameter ", k, ": ", shape_str(p.shape()),
                                          " vs gradient ", shape_str(grads[k].shape())));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[k][i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
}

/// Scales gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
inline double clip_by_global_norm(std::span<Tensor> grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double v : g.data()) ss += v * v;
  }
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (auto& v : g.data()) v *= s;
    }
  }
  return norm;
}

/// Batch-mean sum over dimensions of (y - mu)^2.
inline Var squared_error_loss(Graph& g, Var mu, Var y) {
  const auto n = static_cast<double>(g.value(y).rows());
  return g.scale(g.sum(g.square(g.sub(y, mu))), 1.0 / n);
}

inline Var training_loss(Graph& g, const ForwardPass& pass, Var y, LossKind kind) {
  return kind == LossKind::gaussian_nll ? nll_loss(g, pass.mu, pass.sigma, y) : squared_error_loss(g, pass.mu, y);
}

namespace detail {

inline Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * m.cols());
  for (auto r : rows) {
    const auto row = m.row(r);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::matrix(rows.size(), m.cols(), std::move(out));
}

inline void require_unit_scale(const Dataset& ds) {
  if (ds.standardizer) return;
  const auto stats = fit_columns(ds.targets);
  for (std::size_t d = 0; d < stats.size(); ++d) {
    const double sd = stats.degenerate[d] ? 0.0 : stats.std[d];
    if (std::abs(stats.mean[d]) > 1.0 || sd > 4.0) {
      throw DataError(concat("train: target column ", d, " is not standardized (mean ", stats.mean[d], ", std ", sd,
                             "); apply a Standardizer first"));
    }
  }
}

inline std::string parameter_norms(const Network& net) {
  std::ostringstream oss;
  for (std::size_t k = 0; k < net.parameters().size(); ++k) {
    double ss = 0.0;
    for (double v : net.parameters()[k].data()) ss += v * v;
    oss << (k ? ", " : "") << std::sqrt(ss);
  }
  return oss.str();
}

}  // namespace detail

/// Mean loss of the network over a whole dataset, evaluated in chunks.
inline double dataset_loss(const Network& net, const Dataset& ds, LossKind kind = LossKind::gaussian_nll,
                           std::size_t chunk = 4096) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    Graph g;
    const Var x = g.input(detail::gather_rows(ds.features, rows));
    const Var y = g.input(detail::gather_rows(ds.targets, rows));
    const auto pass = net.forward(g, x, false);
    total += g.value(training_loss(g, pass, y, kind)).item() * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(ds.size());
}

struct TrainResult {
  Network network;
  TrainHistory history;
};

/// Mini-batch Adam on the configured loss. Batch order comes from
/// cfg.seed only; the last partial batch is kept.
inline TrainResult train(Network net, const Dataset& train_set, const Dataset* val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");
  if (train_set.n_features() != net.spec().input_dim || train_set.n_targets() != net.spec().output_dim) {
    throw DimensionError(detail::concat("train: dataset has ", train_set.n_features(), " features / ",
                                        train_set.n_targets(), " targets, network expects ", net.spec().input_dim, " / ",
                                        net.spec().output_dim));
  }
  detail::require_unit_scale(train_set);
  const bool early_stop = cfg.early_stopping_patience.has_value() && val_set != nullptr;

  TrainHistory history;
  AdamState state = AdamState::like(net.parameters());
  Rng rng(cfg.seed, Stream::shuffle);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Tensor> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  std::vector<Tensor> grads;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      double loss_value = 0.0;
      try {
        Graph g;
        const Var x = g.input(detail::gather_rows(train_set.features, rows));
        const Var y = g.input(detail::gather_rows(train_set.targets, rows));
        const auto pass = net.forward(g, x);
        const Var loss = training_loss(g, pass, y, cfg.loss);
        loss_value = g.value(loss).item();
        g.backward(loss);
        grads.clear();
        for (auto p : pass.params) grads.push_back(g.grad(p));
      } catch (const NumericError& e) {
        throw TrainingAborted(detail::concat("train: non-finite value at epoch ", epoch + 1, ", batch ", batch_index, " (",
                                             e.what(), "); parameter norms [", detail::parameter_norms(net), "]"));
      } catch (const DomainError& e) {
        throw TrainingAborted(detail::concat("train: domain error at epoch ", epoch + 1, ", batch ", batch_index, " (",
                                             e.what(), "); parameter norms [", detail::parameter_norms(net), "]"));
      }
      if (!std::isfinite(loss_value)) {
        throw TrainingAborted(detail::concat("train: NaN loss at epoch ", epoch + 1, ", batch ", batch_index,
                                             "; parameter norms [", detail::parameter_norms(net), "]"));
      }
      clip_by_global_norm(grads, cfg.clip_norm);
      adam_step(net.parameters(), grads, state, ++step, cfg);
      epoch_total += loss_value * static_cast<double>(rows.size());
    }
    history.train_loss.push_back(epoch_total / static_cast<double>(order.size()));

    if (val_set) {
      const double vl = dataset_loss(net, *val_set, cfg.loss);
      history.val_loss.push_back(vl);
      if (vl < best_val) {
        best_val = vl;
        history.best_epoch = epoch;
        if (early_stop) best_params = net.parameters();
      } else if (early_stop && epoch - history.best_epoch >= *cfg.early_stopping_patience) {
        history.stopped_early = true;
        break;
      }
    } else {
      history.best_epoch = epoch;
    }
  }
  if (early_stop && !best_params.empty()) net.parameters() = std::move(best_params);
  return {std::move(net), std::move(history)};
}

}  // namespace gaussreg
