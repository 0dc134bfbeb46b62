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

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "gaussreg/error.hpp"
#include "gaussreg/tensor.hpp"

namespace gaussreg {

/// 0.5 * ln(2 pi)
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Independent Gaussian per output dimension for one sample.
struct GaussianPrediction {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t dim() const { return mu.size(); }
};

/// Predictions for a batch: mu and sigma are both N x D.
struct GaussianBatch {
  Tensor mu;
  Tensor sigma;

  std::size_t size() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }

  GaussianPrediction at(std::size_t i) const {
    const auto m = mu.row(i);
    const auto s = sigma.row(i);
    return {{m.begin(), m.end()}, {s.begin(), s.end()}};
  }
};

struct IntervalBand {
  std::vector<double> lower;
  std::vector<double> upper;
  double k = 0.0;
};

namespace detail {

inline void check_sample(std::span<const double> mu, std::span<const double> sigma, std::span<const double> y) {
  if (mu.size() != sigma.size() || mu.size() != y.size() || mu.empty()) {
    throw DimensionError(concat("Gaussian NLL: dimension mismatch (mu ", mu.size(), ", sigma ", sigma.size(),
                                ", y ", y.size(), ")"));
  }
  for (double s : sigma) {
    if (!(s > 0.0)) throw DomainError(concat("Gaussian NLL: sigma must be positive, got ", s));
  }
}

inline double nll_terms(std::span<const double> mu, std::span<const double> sigma, std::span<const double> y) {
  check_sample(mu, sigma, y);
  double total = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    const double z = (y[d] - mu[d]) / sigma[d];
    total += 0.5 * z * z + kHalfLog2Pi + std::log(sigma[d]);
  }
  return total;
}

inline void check_batch(const GaussianBatch& preds, const Tensor& ys) {
  if (preds.mu.rank() != 2 || preds.mu.shape() != preds.sigma.shape() || preds.mu.shape() != ys.shape()) {
    throw DimensionError(concat("Gaussian NLL: batch shapes differ (mu ", shape_str(preds.mu.shape()), ", sigma ",
                                shape_str(preds.sigma.shape()), ", y ", shape_str(ys.shape()), ")"));
  }
}

}  // namespace detail

/// Negative log-likelihood of y under the diagonal Gaussian, summed over
/// dimensions: 0.5 * sum_d [((y-mu)/sigma)^2 + ln(2 pi) + 2 ln sigma].
inline double nll_sample(const GaussianPrediction& pred, std::span<const double> y) {
  return detail::nll_terms(pred.mu, pred.sigma, y);
}

/// Mean of nll_sample over the rows of a batch.
inline double nll_batch(const GaussianBatch& preds, const Tensor& ys) {
  detail::check_batch(preds, ys);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += detail::nll_terms(preds.mu.row(i), preds.sigma.row(i), ys.row(i));
  }
  return total / static_cast<double>(preds.size());
}

/// Constant-free objective sum(((y-mu)/sigma)^2) + 2 sum(ln sigma), divided
/// by the batch size. nll_batch == 0.5 * reduced_objective + D * 0.5 ln(2 pi).
inline double reduced_objective(const GaussianBatch& preds, const Tensor& ys) {
  detail::check_batch(preds, ys);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto mu = preds.mu.row(i);
    const auto sigma = preds.sigma.row(i);
    const auto y = ys.row(i);
    detail::check_sample(mu, sigma, y);
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double z = (y[d] - mu[d]) / sigma[d];
      total += z * z + 2.0 * std::log(sigma[d]);
    }
  }
  return total / static_cast<double>(preds.size());
}

/// mu +/- k sigma, per dimension.
inline IntervalBand confidence_interval(const GaussianPrediction& pred, double k) {
  if (!(k > 0.0)) throw DomainError(detail::concat("confidence_interval: k must be positive, got ", k));
  if (pred.mu.size() != pred.sigma.size()) throw DimensionError("confidence_interval: mu/sigma size mismatch");
  IntervalBand band{std::vector<double>(pred.dim()), std::vector<double>(pred.dim()), k};
  for (std::size_t d = 0; d < pred.dim(); ++d) {
    band.lower[d] = pred.mu[d] - k * pred.sigma[d];
    band.upper[d] = pred.mu[d] + k * pred.sigma[d];
  }
  return band;
}

/// Converts an NLL measured on standardized targets to original units:
/// y = mean + scale * y_std adds ln(scale_d) per dimension.
inline double nll_rescale(double nll_standardized, std::span<const double> target_scale) {
  double out = nll_standardized;
  for (double s : target_scale) {
    if (!(s > 0.0)) throw DomainError(detail::concat("nll_rescale: target scale must be positive, got ", s));
    out += std::log(s);
  }
  return out;
}

/// Batch-mean Gaussian NLL recorded on a graph. mu, sigma and y are N x D;
/// the value matches nll_batch.
inline Var nll_loss(Graph& g, Var mu, Var sigma, Var y) {
  const Tensor& yv = g.value(y);
  const auto n = static_cast<double>(yv.rows());
  const auto dims = static_cast<double>(yv.cols());
  const Var residual = g.sub(y, mu);
  const Var log_sigma = g.log(sigma);
  const Var z = g.mul(residual, g.exp(g.scale(log_sigma, -1.0)));
  const Var per_entry = g.add(g.scale(g.square(z), 0.5), log_sigma);
  return g.shift(g.scale(g.sum(per_entry), 1.0 / n), dims * kHalfLog2Pi);
}

}  // namespace gaussreg
