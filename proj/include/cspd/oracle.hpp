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

// Independent reference computations used to judge the engine: grid
// integration of the residual distribution, the unsimplified chain ratio, and
// two-sample / goodness-of-fit statistics.
//
// Nothing here calls into the sampling engine; the chain ratio re-derives every
// step mean and density from the raw coefficients.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "cspd/diffusion.hpp"
#include "cspd/error.hpp"
#include "cspd/run_stats.hpp"

namespace cspd::oracle {

inline double normal_pdf(double x, double mean, double var) {
  const double z = x - mean;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double normal_cdf(double x, double mean, double var) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var));
}

using Density = std::function<double(double)>;

inline Density normal_density(double mean, double var) {
  return [mean, var](double x) { return normal_pdf(x, mean, var); };
}

// Midpoint-rule discretization of [lo, hi].
struct Grid1D {
  double lo = -10.0;
  double hi = 10.0;
  std::size_t bins = 200000;

  void validate() const {
    if (!(lo < hi)) throw UsageError("grid: lo must be below hi");
    if (bins < 100) throw UsageError("grid: need at least 100 bins");
  }
  double width() const { return (hi - lo) / static_cast<double>(bins); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width(); }
  std::size_t bin_of(double x) const {
    if (x <= lo) return 0;
    if (x >= hi) return bins - 1;
    return std::min(bins - 1, static_cast<std::size_t>((x - lo) / width()));
  }

  // Covers +-sigmas standard deviations of every listed normal.
  static Grid1D covering(std::initializer_list<std::pair<double, double>> mean_var,
                         double sigmas = 10.0, std::size_t bins = 200000) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (auto [m, v] : mean_var) {
      lo = std::min(lo, m - sigmas * std::sqrt(v));
      hi = std::max(hi, m + sigmas * std::sqrt(v));
    }
    return Grid1D{lo, hi, bins};
  }
};

// p'(x) = max(0, p - q) / Z on a grid.
struct ModifiedDistribution {
  Grid1D grid;
  std::vector<double> pmf;
  double z = 0.0;

  // Inverse-CDF draw from the bin masses, uniform within the bin.
  double sample(double u_bin, double u_within) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      acc += pmf[i];
      if (u_bin <= acc) return grid.center(i) + (u_within - 0.5) * grid.width();
    }
    return grid.center(pmf.size() - 1);
  }
};

inline ModifiedDistribution modified_distribution_grid(const Density& p, const Density& q,
                                                       const Grid1D& grid) {
  grid.validate();
  ModifiedDistribution m;
  m.grid = grid;
  m.pmf.resize(grid.bins);
  const double w = grid.width();
  double z = 0.0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double x = grid.center(i);
    const double pv = p(x);
    const double qv = q(x);
    if (!(pv >= 0.0) || !(qv >= 0.0)) throw UsageError("modified_distribution_grid: negative density");
    const double mass = std::max(0.0, pv - qv) * w;
    m.pmf[i] = mass;
    z += mass;
  }
  if (z < 1e-12) {
    throw IndistinguishableDensitiesError("residual max(0, p - q) has zero mass; p' is undefined");
  }
  for (double& v : m.pmf) v /= z;
  m.z = z;
  return m;
}

// beta = integral of min(p, q): the draft acceptance probability.
inline double overlap_mass(const Density& p, const Density& q, const Grid1D& grid) {
  grid.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double x = grid.center(i);
    acc += std::min(p(x), q(x));
  }
  return acc * grid.width();
}

inline double residual_mass(const Density& p, const Density& q, const Grid1D& grid) {
  grid.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < grid.bins; ++i) {
    const double x = grid.center(i);
    acc += std::max(0.0, p(x) - q(x));
  }
  return acc * grid.width();
}

namespace detail {

inline double diag_normal_logpdf(std::span<const double> x, std::span<const double> mean,
                                 std::span<const double> var) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = x[i] - mean[i];
    acc += -0.5 * std::log(2.0 * std::numbers::pi * var[i]) - 0.5 * z * z / var[i];
  }
  return acc;
}

struct StepView {
  std::vector<double> mean;
  std::vector<double> var;
};

inline StepView step_view(const StepCoefficients& c, MeanRule rule, std::span<const double> x,
                          std::span<const double> cond, double temperature) {
  StepView s;
  s.mean.resize(x.size());
  s.var.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double a = c.state_coupling[i] * x[i] + c.cond_coupling[i] * cond[i] + c.offset[i];
    s.mean[i] = rule == MeanRule::kTanh ? std::tanh(a) : a;
    s.var[i] = std::max(kVarianceFloor, temperature * temperature * c.variance[i]);
  }
  return s;
}

}  // namespace detail

// Per-step terms log p_t(x^p_{t-1} | x^p_t) - log q_t(x^q_{t-1} | x^q_t) for
// t = T..1 along the two aligned chains, with the final target term evaluated
// at the supplied x_0 instead of the target's own sample. p(x_T) = q(x_T)
// cancels and is omitted.
inline std::vector<double> full_chain_step_log_ratios(const DenoiserSpec& draft, const DenoiserSpec& target,
                                                      std::span<const double> cond_q,
                                                      std::span<const double> cond_p,
                                                      const NoiseRecord& noise, std::span<const double> x_0,
                                                      double temperature) {
  if (draft.num_steps() != target.num_steps() || draft.dim() != target.dim()) {
    throw UsageError("full_chain_log_ratio: draft and target differ in T or d");
  }
  const int T = draft.num_steps();
  const std::size_t d = draft.dim();
  std::vector<double> xq(noise.x_T), xp(noise.x_T);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    const auto& cq = draft.steps()[static_cast<std::size_t>(k)];
    const auto& cp = target.steps()[static_cast<std::size_t>(k)];
    const auto sq = detail::step_view(cq, draft.rule(), xq, cond_q, temperature);
    const auto sp = detail::step_view(cp, target.rule(), xp, cond_p, temperature);
    const auto& eps = noise.eps[static_cast<std::size_t>(k)];
    std::vector<double> nq(d), np(d);
    for (std::size_t i = 0; i < d; ++i) {
      nq[i] = std::sqrt(sq.var[i]) * eps[i] + sq.mean[i];
      np[i] = std::sqrt(sp.var[i]) * eps[i] + sp.mean[i];
    }
    if (k == T - 1) {
      terms.push_back(detail::diag_normal_logpdf(x_0, sp.mean, sp.var) -
                      detail::diag_normal_logpdf(x_0, sq.mean, sq.var));
    } else {
      terms.push_back(detail::diag_normal_logpdf(np, sp.mean, sp.var) -
                      detail::diag_normal_logpdf(nq, sq.mean, sq.var));
    }
    xq = std::move(nq);
    xp = std::move(np);
  }
  return terms;
}

inline double full_chain_log_ratio(const DenoiserSpec& draft, const DenoiserSpec& target,
                                   std::span<const double> cond_q, std::span<const double> cond_p,
                                   const NoiseRecord& noise, std::span<const double> x_0,
                                   double temperature) {
  double acc = 0.0;
  for (double v : full_chain_step_log_ratios(draft, target, cond_q, cond_p, noise, x_0, temperature)) {
    acc += v;
  }
  return acc;
}

// Asymptotic Kolmogorov distribution tail Q(lambda) = P(K > lambda).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline double ks_p_value(double statistic, double effective_n) {
  const double root = std::sqrt(effective_n);
  return kolmogorov_tail((root + 0.12 + 0.11 / root) * statistic);
}

// Critical value of the two-sample statistic at the given significance, from
// the asymptotic distribution (c(alpha) * sqrt((n + m) / (n m))).
inline double ks_critical_value(double significance, std::size_t n, std::size_t m) {
  const double c = std::sqrt(-0.5 * std::log(significance / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw UsageError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, ks_p_value(d, na * nb / (na + nb))};
}

inline KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw UsageError("ks_one_sample: empty sample");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, ks_p_value(d, n)};
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;

  double critical_value(double significance) const {
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), significance));
  }
};

// Pearson goodness of fit against a grid pmf. Grid cells are merged into
// roughly equiprobable classes, each with expected count >= 5; samples
// outside the grid fall into the edge classes.
inline ChiSquareResult chi_square_gof(std::span<const double> samples, const ModifiedDistribution& reference,
                                      std::size_t target_classes = 50) {
  const double n = static_cast<double>(samples.size());
  std::size_t classes = std::min<std::size_t>(target_classes, static_cast<std::size_t>(n / 5.0));
  if (classes < 2) throw UsageError("chi_square_gof: need at least 10 samples");

  // Cell index -> class index, cutting whenever accumulated mass reaches 1/classes.
  std::vector<std::size_t> class_of(reference.pmf.size());
  std::vector<double> class_mass;
  const double quota = 1.0 / static_cast<double>(classes);
  double acc = 0.0;
  class_mass.push_back(0.0);
  for (std::size_t i = 0; i < reference.pmf.size(); ++i) {
    if (acc >= quota && class_mass.size() < classes) {
      class_mass.push_back(0.0);
      acc = 0.0;
    }
    class_of[i] = class_mass.size() - 1;
    class_mass.back() += reference.pmf[i];
    acc += reference.pmf[i];
  }
  // Fold a thin tail class into its neighbour.
  while (class_mass.size() > 2 && class_mass.back() * n < 5.0) {
    const std::size_t last = class_mass.size() - 1;
    class_mass[last - 1] += class_mass[last];
    for (auto& c : class_of) {
      if (c == last) c = last - 1;
    }
    class_mass.pop_back();
  }
  for (double m : class_mass) {
    if (m * n < 5.0) throw UsageError("chi_square_gof: insufficient samples for expected count >= 5");
  }

  std::vector<double> observed(class_mass.size(), 0.0);
  for (double x : samples) observed[class_of[reference.grid.bin_of(x)]] += 1.0;

  ChiSquareResult r;
  for (std::size_t k = 0; k < class_mass.size(); ++k) {
    const double expected = class_mass[k] * n;
    const double diff = observed[k] - expected;
    r.statistic += diff * diff / expected;
  }
  r.dof = static_cast<int>(class_mass.size()) - 1;
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.dof), r.statistic));
  return r;
}

struct AcceptanceSummary {
  std::vector<std::optional<double>> per_position;  // accepted / examined
  std::optional<double> overall;                    // accepted / proposed
};

inline AcceptanceSummary empirical_acceptance(const RunStats& stats) {
  AcceptanceSummary s;
  s.per_position.resize(stats.examined.size());
  for (std::size_t i = 0; i < stats.examined.size(); ++i) {
    if (stats.examined[i] > 0) {
      s.per_position[i] = static_cast<double>(stats.accepted[i]) / static_cast<double>(stats.examined[i]);
    }
  }
  s.overall = stats.overall_alpha();
  return s;
}

}  // namespace cspd::oracle
