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

// Reverse-diffusion chains over continuous tokens.
//
// A DenoiserSpec describes T Gaussian conditionals p(x_{t-1} | x_t, cond)
// with mean  g(A_t * x_t + C_t * cond + b_t)  (component-wise, g = id or tanh)
// and a fixed diagonal variance var_t. Sampling goes through the
// reparameterization x_{t-1} = sqrt(var_t) * eps_t + mean_t, with the noise
// drawn up front in a NoiseRecord so two chains can share it.
//
// Step coefficients are stored in execution order: steps[0] is t = T,
// steps[T-1] is t = 1.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cspd/core_math.hpp"
#include "cspd/error.hpp"
#include "cspd/random.hpp"

namespace cspd {

enum class MeanRule { kIdentity, kTanh };

struct StepCoefficients {
  Vec state_coupling;  // A_t
  Vec cond_coupling;   // C_t
  Vec offset;          // b_t
  Vec variance;        // var_t

  friend bool operator==(const StepCoefficients&, const StepCoefficients&) = default;
};

class DenoiserSpec {
 public:
  DenoiserSpec() = default;
  DenoiserSpec(std::vector<StepCoefficients> steps, MeanRule rule)
      : steps_(std::move(steps)), rule_(rule) {
    validate();
  }

  int num_steps() const noexcept { return static_cast<int>(steps_.size()); }
  std::size_t dim() const noexcept { return steps_.empty() ? 0 : steps_.front().offset.size(); }
  MeanRule rule() const noexcept { return rule_; }
  const std::vector<StepCoefficients>& steps() const noexcept { return steps_; }

  // Coefficients of the conditional producing x_{t-1}, 1 <= t <= T.
  const StepCoefficients& at(int t) const {
    if (t < 1 || t > num_steps()) {
      throw UsageError("denoiser step t=" + std::to_string(t) + " out of range");
    }
    return steps_[static_cast<std::size_t>(num_steps() - t)];
  }

  Vec mean(int t, std::span<const double> x_t, std::span<const double> cond) const {
    const StepCoefficients& c = at(t);
    if (x_t.size() != dim() || cond.size() != dim()) {
      throw UsageError("denoiser mean: dimension mismatch at t=" + std::to_string(t));
    }
    Vec m(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      const double a = c.state_coupling[i] * x_t[i] + c.cond_coupling[i] * cond[i] + c.offset[i];
      m[i] = rule_ == MeanRule::kTanh ? std::tanh(a) : a;
    }
    return m;
  }

  // Conditional at step t with variance scaled by temperature^2.
  GaussianParams params(int t, std::span<const double> x_t, std::span<const double> cond,
                        double temperature) const {
    Vec var = at(t).variance;
    const double scale = temperature * temperature;
    for (double& v : var) v *= scale;
    return GaussianParams(mean(t, x_t, cond), std::move(var));
  }

  friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;

 private:
  void validate() const {
    if (steps_.size() < 2) throw UsageError("denoiser needs T >= 2 steps");
    const std::size_t d = steps_.front().offset.size();
    if (d == 0) throw UsageError("denoiser dimension must be >= 1");
    for (std::size_t k = 0; k < steps_.size(); ++k) {
      const StepCoefficients& c = steps_[k];
      const std::string where = "denoiser step t=" + std::to_string(steps_.size() - k);
      if (c.state_coupling.size() != d || c.cond_coupling.size() != d || c.offset.size() != d ||
          c.variance.size() != d) {
        throw UsageError(where + ": coefficient vectors must all have dimension " +
                         std::to_string(d));
      }
      if (!all_finite(c.state_coupling) || !all_finite(c.cond_coupling) ||
          !all_finite(c.offset) || !all_finite(c.variance)) {
        throw UsageError(where + ": non-finite coefficient");
      }
      for (double v : c.variance) {
        if (v < kVarianceFloor) throw UsageError(where + ": variance below floor");
      }
    }
  }

  std::vector<StepCoefficients> steps_;
  MeanRule rule_ = MeanRule::kIdentity;
};

// Initial noise x_T and the T per-step standard-normal draws, in execution
// order (eps[0] drives t = T).
struct NoiseRecord {
  Vec x_T;
  std::vector<Vec> eps;

  int num_steps() const noexcept { return static_cast<int>(eps.size()); }
  const Vec& eps_for(int t) const { return eps[eps.size() - static_cast<std::size_t>(t)]; }

  friend bool operator==(const NoiseRecord&, const NoiseRecord&) = default;
};

inline NoiseRecord draw_noise_record(int num_steps, std::size_t dim, RandomStream& rng) {
  if (num_steps < 2) throw UsageError("noise record needs T >= 2");
  if (dim < 1) throw UsageError("noise record needs d >= 1");
  NoiseRecord rec;
  rec.x_T.resize(dim);
  for (double& v : rec.x_T) v = rng.normal();
  rec.eps.assign(static_cast<std::size_t>(num_steps), Vec(dim));
  for (Vec& e : rec.eps) {
    for (double& v : e) v = rng.normal();
  }
  return rec;
}

struct TrajectoryStep {
  int t = 0;
  GaussianParams params;
  Vec eps;
  Token x_out;  // x_{t-1}
};

struct DenoisingTrajectory {
  Token x_T;
  std::vector<TrajectoryStep> steps;  // t = T .. 1
  double log_var_tail = 0.0;          // sum over t = 2..T of 0.5 * ln|Sigma_t|

  int num_steps() const noexcept { return static_cast<int>(steps.size()); }
  std::size_t dim() const noexcept { return x_T.dim(); }
  const TrajectoryStep& step_for(int t) const {
    return steps[steps.size() - static_cast<std::size_t>(t)];
  }
  // x_1, the input to the final step.
  const Token& penultimate() const { return steps.size() >= 2 ? steps[steps.size() - 2].x_out : x_T; }
  const Token& output() const { return steps.back().x_out; }
  // log density of the chain's own output under its final conditional.
  double last_step_logpdf() const { return gaussian_logpdf(output(), steps.back().params); }
};

inline DenoisingTrajectory run_chain(const DenoiserSpec& spec, std::span<const double> cond,
                                     const NoiseRecord& noise, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw UsageError("run_chain: temperature must be positive");
  }
  if (noise.num_steps() != spec.num_steps()) {
    throw UsageError("run_chain: noise record has " + std::to_string(noise.num_steps()) +
                     " steps, denoiser has " + std::to_string(spec.num_steps()));
  }
  if (noise.x_T.size() != spec.dim() || cond.size() != spec.dim()) {
    throw UsageError("run_chain: dimension mismatch");
  }
  DenoisingTrajectory traj;
  traj.x_T = Token(noise.x_T);
  traj.steps.reserve(static_cast<std::size_t>(spec.num_steps()));
  Vec x = noise.x_T;
  for (int t = spec.num_steps(); t >= 1; --t) {
    const Vec mean = spec.mean(t, x, cond);
    if (!all_finite(mean)) {
      throw NumericalDivergenceError(t, "chain diverged at step t=" + std::to_string(t));
    }
    Vec var = spec.at(t).variance;
    for (double& v : var) v *= temperature * temperature;
    GaussianParams params(mean, std::move(var));
    const Vec& eps = noise.eps_for(t);
    x = reparameterize_values(params, eps);
    if (!all_finite(x)) {
      throw NumericalDivergenceError(t, "chain diverged at step t=" + std::to_string(t));
    }
    if (t >= 2) traj.log_var_tail += half_log_det(params.variance());
    traj.steps.push_back(TrajectoryStep{t, std::move(params), eps, Token(x)});
  }
  return traj;
}

// log p(x_0 | x_1) by substitution: the density of the step-1 conditional
// evaluated at a supplied point.
inline double last_step_logpdf(const DenoiserSpec& spec, std::span<const double> cond,
                               const Token& x_1, const Token& x_0, double temperature) {
  return gaussian_logpdf(x_0, spec.params(1, x_1.span(), cond, temperature));
}

// ln of prod_{t=2..T} sqrt|Sigma_q,t| / sqrt|Sigma_p,t|.
inline double log_sigma_product(const DenoisingTrajectory& traj_q, const DenoisingTrajectory& traj_p) {
  if (traj_q.num_steps() != traj_p.num_steps() || traj_q.dim() != traj_p.dim()) {
    throw UsageError("log_sigma_product: trajectories differ in T or d");
  }
  return traj_q.log_var_tail - traj_p.log_var_tail;
}

// Exact Gaussian marginal of x_0 for an affine chain started at x_T ~ N(0, I).
inline GaussianParams analytic_marginal(const DenoiserSpec& spec, std::span<const double> cond,
                                        double temperature) {
  if (spec.rule() != MeanRule::kIdentity) {
    throw UnsupportedOracleError("analytic_marginal: only affine (identity) chains have a closed form");
  }
  if (cond.size() != spec.dim()) throw UsageError("analytic_marginal: dimension mismatch");
  Vec mean(spec.dim(), 0.0);
  Vec var(spec.dim(), 1.0);
  const double scale = temperature * temperature;
  for (int t = spec.num_steps(); t >= 1; --t) {
    const StepCoefficients& c = spec.at(t);
    for (std::size_t i = 0; i < spec.dim(); ++i) {
      const double a = c.state_coupling[i];
      mean[i] = a * mean[i] + c.cond_coupling[i] * cond[i] + c.offset[i];
      var[i] = a * a * var[i] + scale * c.variance[i];
    }
  }
  return GaussianParams(std::move(mean), std::move(var));
}

}  // namespace cspd
