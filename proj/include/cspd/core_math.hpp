/* Copyright 2026 The cspd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Gaussian primitives in log space. Diagonal covariance throughout.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cspd/error.hpp"

namespace cspd {

using Vec = std::vector<double>;

inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*ln(2*pi)

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// A continuous-valued token: d >= 1 finite components.
class Token {
 public:
  Token() = default;
  explicit Token(Vec values) : values_(std::move(values)) {
    if (values_.empty()) throw UsageError("token must have dimension >= 1");
    if (!all_finite(values_)) throw UsageError("token has non-finite component");
  }

  std::size_t dim() const noexcept { return values_.size(); }
  const Vec& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> span() const noexcept { return values_; }

  friend bool operator==(const Token&, const Token&) = default;

 private:
  Vec values_;
};

// Mean and diagonal variance of one Gaussian conditional. Variances are
// clamped to kVarianceFloor on construction.
class GaussianParams {
 public:
  GaussianParams() = default;
  GaussianParams(Vec mean, Vec variance)
      : mean_(std::move(mean)), variance_(std::move(variance)) {
    if (mean_.size() != variance_.size()) {
      throw UsageError("gaussian params: mean has dimension " +
                       std::to_string(mean_.size()) + ", variance has " +
                       std::to_string(variance_.size()));
    }
    if (mean_.empty()) throw UsageError("gaussian params: dimension must be >= 1");
    if (!all_finite(mean_) || !all_finite(variance_)) {
      throw UsageError("gaussian params: non-finite component");
    }
    for (double& v : variance_) {
      if (v < kVarianceFloor) v = kVarianceFloor;
    }
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const Vec& mean() const noexcept { return mean_; }
  const Vec& variance() const noexcept { return variance_; }

  friend bool operator==(const GaussianParams&, const GaussianParams&) = default;

 private:
  Vec mean_;
  Vec variance_;
};

// Sum over components of -0.5*ln(2*pi*var) - (x-mean)^2/(2*var).
inline double gaussian_logpdf(std::span<const double> x, const GaussianParams& params) {
  if (x.size() != params.dim()) {
    throw UsageError("gaussian_logpdf: point has dimension " + std::to_string(x.size()) +
                     ", params have " + std::to_string(params.dim()));
  }
  if (!all_finite(x)) throw UsageError("gaussian_logpdf: non-finite point");
  const Vec& mean = params.mean();
  const Vec& var = params.variance();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - mean[i];
    acc += -kHalfLog2Pi - 0.5 * std::log(var[i]) - diff * diff / (2.0 * var[i]);
  }
  return acc;
}

inline double gaussian_logpdf(const Token& x, const GaussianParams& params) {
  return gaussian_logpdf(x.span(), params);
}

// x_i = sqrt(var_i) * eps_i + mean_i. Returns raw components; callers that
// need a Token check finiteness themselves.
inline Vec reparameterize_values(const GaussianParams& params, std::span<const double> eps) {
  if (eps.size() != params.dim()) {
    throw UsageError("reparameterize: noise has dimension " + std::to_string(eps.size()) +
                     ", params have " + std::to_string(params.dim()));
  }
  Vec out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    out[i] = std::sqrt(params.variance()[i]) * eps[i] + params.mean()[i];
  }
  return out;
}

inline Token reparameterize(const GaussianParams& params, std::span<const double> eps) {
  return Token(reparameterize_values(params, eps));
}

// 0.5 * sum_i (ln var_q_i - ln var_p_i): log of sqrt|Sigma_q| / sqrt|Sigma_p|.
inline double log_sigma_ratio_term(std::span<const double> var_q, std::span<const double> var_p) {
  if (var_q.size() != var_p.size()) {
    throw UsageError("log_sigma_ratio_term: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < var_q.size(); ++i) {
    if (!(var_q[i] >= kVarianceFloor) || !(var_p[i] >= kVarianceFloor) ||
        !std::isfinite(var_q[i]) || !std::isfinite(var_p[i])) {
      throw UsageError("log_sigma_ratio_term: variance below floor or non-finite");
    }
    acc += 0.5 * (std::log(var_q[i]) - std::log(var_p[i]));
  }
  return acc;
}

// 0.5 * sum_i ln var_i, the log of sqrt|Sigma| for a diagonal covariance.
inline double half_log_det(std::span<const double> var) {
  double acc = 0.0;
  for (double v : var) acc += 0.5 * std::log(v);
  return acc;
}

}  // namespace cspd
