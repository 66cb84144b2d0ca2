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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cspd/diffusion.hpp"
#include "cspd/oracle.hpp"
#include "test_models.hpp"

namespace cspd {
namespace {

using testing::chain_1d;
using testing::scalar_step;

NoiseRecord fixed_noise(double x_T, std::vector<double> eps_in_execution_order) {
  NoiseRecord r;
  r.x_T = {x_T};
  for (double e : eps_in_execution_order) r.eps.push_back({e});
  return r;
}

TEST(DrawNoiseRecord, DeterministicGivenSeed) {
  RandomStream a(11), b(11);
  EXPECT_EQ(draw_noise_record(2, 1, a), draw_noise_record(2, 1, b));
}

TEST(DrawNoiseRecord, DistinctSeedsDiffer) {
  RandomStream a(11), b(12);
  EXPECT_NE(draw_noise_record(2, 1, a), draw_noise_record(2, 1, b));
}

TEST(DrawNoiseRecord, Shape) {
  RandomStream rng(3);
  const NoiseRecord r = draw_noise_record(3, 2, rng);
  ASSERT_EQ(r.eps.size(), 3u);
  EXPECT_EQ(r.x_T.size(), 2u);
  for (const auto& e : r.eps) EXPECT_EQ(e.size(), 2u);
  EXPECT_THROW(draw_noise_record(1, 2, rng), UsageError);
  EXPECT_THROW(draw_noise_record(3, 0, rng), UsageError);
}

TEST(DenoiserSpec, RequiresTwoSteps) {
  EXPECT_THROW(DenoiserSpec({scalar_step(1, 0, 0, 1)}, MeanRule::kIdentity), UsageError);
  EXPECT_THROW(chain_1d(2, scalar_step(1, 0, 0, 1e-13), scalar_step(1, 0, 0, 1)), UsageError);
}

TEST(RunChain, NoiseFreeIdentityMapReturnsStart) {
  const DenoiserSpec spec = chain_1d(5, scalar_step(1, 0, 0, kVarianceFloor), scalar_step(1, 0, 0, kVarianceFloor));
  const auto traj = run_chain(spec, std::vector<double>{0.7}, fixed_noise(1.25, {0, 0, 0, 0, 0}), 1.0);
  EXPECT_EQ(traj.output(), Token({1.25}));
}

TEST(RunChain, HandIteration) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0, 1));
  const auto traj = run_chain(spec, std::vector<double>{0.0}, fixed_noise(5.0, {0.3, -0.7}), 1.0);
  EXPECT_DOUBLE_EQ(traj.step_for(2).x_out[0], 0.3);
  EXPECT_DOUBLE_EQ(traj.output()[0], -0.7);
  EXPECT_DOUBLE_EQ(traj.log_var_tail, 0.0);
}

TEST(RunChain, TemperatureScalesVariance) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0, 1));
  const auto cold = run_chain(spec, std::vector<double>{0.0}, fixed_noise(5.0, {0.3, -0.7}), 1.0);
  const auto hot = run_chain(spec, std::vector<double>{0.0}, fixed_noise(5.0, {0.3, -0.7}), 2.0);
  EXPECT_DOUBLE_EQ(hot.step_for(2).x_out[0], 0.6);
  EXPECT_DOUBLE_EQ(hot.output()[0], -1.4);
  EXPECT_NEAR(hot.log_var_tail - cold.log_var_tail, 0.5 * std::log(4.0), 1e-15);
}

TEST(RunChain, ReportsDivergentStep) {
  const DenoiserSpec spec = chain_1d(4, scalar_step(1e300, 0, 0, 1), scalar_step(1, 0, 0, 1));
  try {
    run_chain(spec, std::vector<double>{0.0}, fixed_noise(10.0, {0, 0, 0, 0}), 1.0);
    FAIL() << "expected divergence";
  } catch (const NumericalDivergenceError& e) {
    EXPECT_EQ(e.step(), 3);
    EXPECT_NE(std::string(e.what()).find("t=3"), std::string::npos);
  }
}

TEST(RunChain, RejectsMismatchedNoise) {
  const DenoiserSpec spec = chain_1d(3, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0, 1));
  EXPECT_THROW(run_chain(spec, std::vector<double>{0.0}, fixed_noise(0.0, {0, 0}), 1.0), UsageError);
  EXPECT_THROW(run_chain(spec, std::vector<double>{0.0}, fixed_noise(0.0, {0, 0, 0}), 0.0), UsageError);
}

TEST(LastStepLogpdf, AtTheMode) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0.5, 0.2, 0.1, 1), scalar_step(0.5, 0.2, 0.1, 1));
  const Token x1({0.8});
  const std::vector<double> cond{1.0};
  const Token x0({0.5 * 0.8 + 0.2 * 1.0 + 0.1});
  EXPECT_NEAR(last_step_logpdf(spec, cond, x1, x0, 1.0), -0.9189385, 1e-7);
}

TEST(LastStepLogpdf, OffMode) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0.0, 0.25));
  EXPECT_NEAR(last_step_logpdf(spec, std::vector<double>{0.0}, Token({3.0}), Token({0.5}), 1.0), -0.7257913, 1e-7);
}

TEST(LastStepLogpdf, SelfConsistentWithRecordedStep) {
  const DenoiserSpec spec = chain_1d(6, scalar_step(0.9, 0.3, 0.1, 0.2), scalar_step(1.0, 0.3, 0.0, 0.1));
  RandomStream rng(5);
  const std::vector<double> cond{0.4};
  const auto traj = run_chain(spec, cond, draw_noise_record(6, 1, rng), 1.3);
  EXPECT_EQ(last_step_logpdf(spec, cond, traj.penultimate(), traj.output(), 1.3), traj.last_step_logpdf());
}

DenoisingTrajectory three_step_trajectory(double var3, double var2) {
  const DenoiserSpec spec({scalar_step(0, 0, 0, var3), scalar_step(0, 0, 0, var2), scalar_step(0, 0, 0, 1.0)},
                          MeanRule::kIdentity);
  return run_chain(spec, std::vector<double>{0.0}, fixed_noise(0.0, {0.1, 0.2, 0.3}), 1.0);
}

TEST(LogSigmaProduct, Examples) {
  const auto q = three_step_trajectory(0.04, 0.25);
  const auto p = three_step_trajectory(0.25, 1.0);
  EXPECT_EQ(log_sigma_product(q, q), 0.0);
  // (sqrt(0.25) sqrt(0.04)) / (sqrt(1.0) sqrt(0.25)) = 0.2
  EXPECT_NEAR(log_sigma_product(q, p), std::log(0.2), 1e-12);
  EXPECT_NEAR(log_sigma_product(q, p), -1.6094379, 1e-7);
  EXPECT_NEAR(log_sigma_product(three_step_trajectory(0.08, 0.5), three_step_trajectory(0.5, 2.0)),
              log_sigma_product(q, p), 1e-12);
}

TEST(LogSigmaProduct, RejectsMismatchedShapes) {
  const auto q = three_step_trajectory(0.04, 0.25);
  const DenoiserSpec two = chain_1d(2, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0, 1));
  const auto p = run_chain(two, std::vector<double>{0.0}, fixed_noise(0.0, {0.1, 0.2}), 1.0);
  EXPECT_THROW(log_sigma_product(q, p), UsageError);
}

TEST(AnalyticMarginal, IdentityChainPassesStartThrough) {
  const DenoiserSpec spec = chain_1d(4, scalar_step(1, 0, 0, kVarianceFloor), scalar_step(1, 0, 0, kVarianceFloor));
  const GaussianParams m = analytic_marginal(spec, std::vector<double>{3.0}, 1.0);
  EXPECT_NEAR(m.mean()[0], 0.0, 1e-12);
  EXPECT_NEAR(m.variance()[0], 1.0, 1e-9);
}

TEST(AnalyticMarginal, DecoupledStateKeepsLastStep) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0, 0, 0, 1), scalar_step(0, 0, 0, 1));
  const GaussianParams m = analytic_marginal(spec, std::vector<double>{0.0}, 1.0);
  EXPECT_EQ(m.mean()[0], 0.0);
  EXPECT_EQ(m.variance()[0], 1.0);
}

TEST(AnalyticMarginal, AffineCompositionMatchesMonteCarlo) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0.5, 0, 0, 0.25), scalar_step(0.5, 0, 0, 0.25));
  const GaussianParams m = analytic_marginal(spec, std::vector<double>{0.0}, 1.0);
  EXPECT_DOUBLE_EQ(m.variance()[0], 0.375);
  RandomStream rng(99);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = run_chain(spec, std::vector<double>{0.0}, draw_noise_record(2, 1, rng), 1.0).output()[0];
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_LT(std::fabs(mean), 3 * std::sqrt(0.375 / n));
  EXPECT_NEAR(var, 0.375, 0.375 * 0.01);
}

TEST(AnalyticMarginal, TanhUnsupported) {
  const DenoiserSpec spec = chain_1d(2, scalar_step(0.5, 0, 0, 0.25), scalar_step(0.5, 0, 0, 0.25), MeanRule::kTanh);
  EXPECT_THROW(analytic_marginal(spec, std::vector<double>{0.0}, 1.0), UnsupportedOracleError);
}

// Random affine/tanh chains in d dimensions with coefficients in a tame range.
DenoiserSpec random_spec(std::mt19937_64& rng, int T, std::size_t d, MeanRule rule) {
  std::uniform_real_distribution<double> a(-1.1, 1.1), c(-1.0, 1.0), b(-0.5, 0.5), lv(std::log(0.01), std::log(2.0));
  std::vector<StepCoefficients> steps;
  for (int k = 0; k < T; ++k) {
    StepCoefficients s;
    for (std::size_t i = 0; i < d; ++i) {
      s.state_coupling.push_back(a(rng));
      s.cond_coupling.push_back(c(rng));
      s.offset.push_back(b(rng));
      s.variance.push_back(std::exp(lv(rng)));
    }
    steps.push_back(std::move(s));
  }
  return DenoiserSpec(std::move(steps), rule);
}

TEST(DiffusionProperty, FullChainEqualsSimplifiedRatio) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 2 + static_cast<int>(rng() % 20);
    const std::size_t d = 1 + rng() % 4;
    const MeanRule rule = trial % 2 ? MeanRule::kTanh : MeanRule::kIdentity;
    const DenoiserSpec q = random_spec(rng, T, d, rule), p = random_spec(rng, T, d, rule);
    RandomStream stream(rng());
    const NoiseRecord noise = draw_noise_record(T, d, stream);
    std::vector<double> cond(d, 0.3);
    const auto tq = run_chain(q, cond, noise, 1.0);
    const auto tp = run_chain(p, cond, noise, 1.0);
    // Step-by-step sum of log p_t - log q_t with the final target term at the draft's x_0.
    double full = 0.0;
    for (int t = T; t >= 2; --t) {
      full += gaussian_logpdf(tp.step_for(t).x_out, tp.step_for(t).params) -
              gaussian_logpdf(tq.step_for(t).x_out, tq.step_for(t).params);
    }
    const double last_p = last_step_logpdf(p, cond, tp.penultimate(), tq.output(), 1.0);
    full += last_p - tq.last_step_logpdf();
    const double simplified = log_sigma_product(tq, tp) + last_p - tq.last_step_logpdf();
    EXPECT_NEAR(full, simplified, 1e-9) << "T=" << T << " d=" << d;
  }
}

TEST(DiffusionProperty, Deterministic) {
  std::mt19937_64 rng(1);
  const DenoiserSpec spec = random_spec(rng, 10, 3, MeanRule::kTanh);
  RandomStream s(8);
  const NoiseRecord noise = draw_noise_record(10, 3, s);
  const std::vector<double> cond{0.1, 0.2, 0.3};
  const auto a = run_chain(spec, cond, noise, 0.9), b = run_chain(spec, cond, noise, 0.9);
  ASSERT_EQ(a.num_steps(), b.num_steps());
  for (int t = 1; t <= 10; ++t) {
    EXPECT_EQ(a.step_for(t).x_out, b.step_for(t).x_out);
    EXPECT_EQ(a.step_for(t).params, b.step_for(t).params);
  }
  EXPECT_EQ(a.log_var_tail, b.log_var_tail);
}

TEST(DiffusionProperty, TrajectoryInvariants) {
  std::mt19937_64 rng(4);
  const DenoiserSpec spec = random_spec(rng, 7, 2, MeanRule::kIdentity);
  RandomStream s(9);
  const auto traj = run_chain(spec, std::vector<double>{0.5, -0.5}, draw_noise_record(7, 2, s), 1.1);
  ASSERT_EQ(traj.num_steps(), 7);
  double tail = 0.0;
  for (const auto& step : traj.steps) {
    EXPECT_EQ(step.x_out, reparameterize(step.params, step.eps));
    if (step.t >= 2) tail += half_log_det(step.params.variance());
  }
  EXPECT_EQ(tail, traj.log_var_tail);
}

TEST(DiffusionProperty, MonteCarloMatchesAnalyticMarginal) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    const DenoiserSpec spec = random_spec(rng, 6, 1, MeanRule::kIdentity);
    const std::vector<double> cond{0.7};
    const GaussianParams m = analytic_marginal(spec, cond, 1.0);
    RandomStream s(rng());
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = run_chain(spec, cond, draw_noise_record(6, 1, s), 1.0).output()[0];
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    EXPECT_LT(std::fabs(mean - m.mean()[0]), 3 * std::sqrt(m.variance()[0] / n));
    EXPECT_NEAR(var, m.variance()[0], 0.05 * m.variance()[0]);
  }
}

}  // namespace
}  // namespace cspd
