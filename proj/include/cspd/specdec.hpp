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

// Speculative decoding over continuous tokens whose per-token distributions
// are denoising chains.
//
// One step drafts gamma tokens with the draft model, re-scores each with the
// target on the same noise record (trajectory alignment), keeps the longest
// prefix passing r_i <= p/q, and replaces the first rejected token with a
// sample from the residual max(0, p - q) obtained by acceptance-rejection
// against the target. With noise shared the path-density ratio collapses to
//
//   log p/q = log Sigma + log p(x_0 | x_1^p) - log q(x_0 | x_1^q),
//   log Sigma = sum_{t=2..T} 0.5 (ln|Sigma_q,t| - ln|Sigma_p,t|).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cspd/autoregressive.hpp"
#include "cspd/core_math.hpp"
#include "cspd/diffusion.hpp"
#include "cspd/error.hpp"
#include "cspd/random.hpp"
#include "cspd/run_stats.hpp"

namespace cspd {

inline constexpr long kDefaultMaxResampleTrials = 10000;

// Switches for ablations. The defaults are the algorithm as designed;
// the others exist to measure what each ingredient contributes.
struct EngineOptions {
  // Share x_T and every eps_t between draft and target chains.
  bool align_noise = true;
  // Multiply the last-step ratio by the variance product Sigma.
  bool include_variance_product = true;
  long max_resample_trials = kDefaultMaxResampleTrials;

  friend bool operator==(const EngineOptions&, const EngineOptions&) = default;
};

struct SpecDecodeConfig {
  int gamma = 8;
  std::size_t length = 32;
  double rho = 0.0;
  double temperature = 1.0;
  long max_resample_trials = kDefaultMaxResampleTrials;

  void validate() const {
    if (gamma < 1) throw UsageError("gamma must be >= 1");
    if (length < 1) throw UsageError("sequence length must be >= 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw UsageError("rho must lie in [0, 1]");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw UsageError("temperature must be positive");
    }
    if (max_resample_trials < 1) throw UsageError("max_resample_trials must be >= 1");
  }

  friend bool operator==(const SpecDecodeConfig&, const SpecDecodeConfig&) = default;
};

inline void check_model_pair(const ToyModel& target, const ToyModel& draft) {
  if (target.num_steps() != draft.num_steps()) {
    throw UsageError("draft has T=" + std::to_string(draft.num_steps()) + ", target has T=" +
                     std::to_string(target.num_steps()));
  }
  if (target.dim() != draft.dim()) {
    throw UsageError("draft has d=" + std::to_string(draft.dim()) + ", target has d=" +
                     std::to_string(target.dim()));
  }
  target.backbone.validate(target.dim());
  draft.backbone.validate(draft.dim());
}

struct RatioEvaluation {
  double log_ratio = 0.0;
  double log_sigma = 0.0;   // as applied; 0 when the variance product is disabled
  double log_p = 0.0;       // log p(x_0 | x_1^p)
  double log_q = 0.0;       // log q(x_0 | x_1^q)
  DenoisingTrajectory traj_p;
};

// Runs the target chain on `noise` and scores the draft's x_0 against it.
// `noise` must be the draft's own record for the aligned ratio to hold.
inline RatioEvaluation acceptance_log_ratio(const DenoisingTrajectory& traj_q, const ToyModel& target,
                                            std::span<const double> cond_p, const NoiseRecord& noise,
                                            const Token& x_0, double temperature,
                                            const EngineOptions& options = {}) {
  if (traj_q.num_steps() != target.num_steps() || traj_q.dim() != target.dim() ||
      x_0.dim() != target.dim()) {
    throw UsageError("acceptance_log_ratio: draft trajectory and target differ in T or d");
  }
  RatioEvaluation r;
  r.traj_p = run_chain(target.denoiser, cond_p, noise, temperature);
  r.log_sigma = options.include_variance_product ? log_sigma_product(traj_q, r.traj_p) : 0.0;
  r.log_p = last_step_logpdf(target.denoiser, cond_p, r.traj_p.penultimate(), x_0, temperature);
  r.log_q = gaussian_logpdf(x_0, traj_q.steps.back().params);
  r.log_ratio = r.log_sigma + r.log_p - r.log_q;
  return r;
}

// n = min({i - 1 : r_i > p_i/q_i} U {gamma}). Ratios >= 1 accept without
// touching exp.
inline std::size_t verify_drafts(std::span<const double> log_ratios, std::span<const double> uniforms) {
  if (log_ratios.size() != uniforms.size()) {
    throw UsageError("verify_drafts: ratio and uniform counts differ");
  }
  for (std::size_t i = 0; i < log_ratios.size(); ++i) {
    if (log_ratios[i] >= 0.0) continue;
    if (uniforms[i] > std::exp(log_ratios[i])) return i;
  }
  return log_ratios.size();
}

// alpha_s = max(0, Sigma p - q) / (Sigma p), from log-densities.
inline double acceptance_threshold(double log_sigma, double log_p, double log_q) {
  const double log_q_over_sigma_p = log_q - log_sigma - log_p;
  if (log_q_over_sigma_p >= 0.0) return 0.0;
  return -std::expm1(log_q_over_sigma_p);
}

struct ResampleResult {
  Token token;
  long trials = 0;
};

// Samples the residual distribution by proposing from the target and
// accepting with probability alpha_s. Each trial draws a fresh noise record;
// the draft chain is re-run on it only to obtain q and Sigma.
inline ResampleResult rejection_resample(const ToyModel& target, std::span<const double> cond_p,
                                         const ToyModel& draft, std::span<const double> cond_q,
                                         double temperature, RandomStream& rng,
                                         const EngineOptions& options = {},
                                         RunStats* stats = nullptr) {
  double threshold_sum = 0.0;
  for (long trial = 1; trial <= options.max_resample_trials; ++trial) {
    const NoiseRecord noise = draw_noise_record(target.num_steps(), target.dim(), rng);
    DenoisingTrajectory traj_p = run_chain(target.denoiser, cond_p, noise, temperature);
    const DenoisingTrajectory traj_q =
        options.align_noise
            ? run_chain(draft.denoiser, cond_q, noise, temperature)
            : run_chain(draft.denoiser, cond_q, draw_noise_record(draft.num_steps(), draft.dim(), rng),
                        temperature);
    if (stats != nullptr) {
      ++stats->target_chain_calls;
      ++stats->draft_chain_calls;
    }
    const Token& candidate = traj_p.output();
    const double log_sigma = options.include_variance_product ? log_sigma_product(traj_q, traj_p) : 0.0;
    const double log_p = traj_p.last_step_logpdf();
    const double log_q =
        last_step_logpdf(draft.denoiser, cond_q, traj_q.penultimate(), candidate, temperature);
    const double alpha_s = acceptance_threshold(log_sigma, log_p, log_q);
    threshold_sum += alpha_s;
    if (rng.uniform() <= alpha_s) return ResampleResult{candidate, trial};
  }
  const double estimate = threshold_sum / static_cast<double>(options.max_resample_trials);
  throw ResampleExhaustedError(
      options.max_resample_trials, estimate,
      "rejection sampler exhausted " + std::to_string(options.max_resample_trials) +
          " trials; estimated per-trial acceptance " + std::to_string(estimate) +
          " (draft and target nearly identical here?)");
}

struct DraftEntry {
  Token token;
  Vec cond_q;
  NoiseRecord noise;
  DenoisingTrajectory traj_q;
  double log_q = 0.0;  // log q(x | x_1^q) of the draft's own sample
};

// gamma drafts x_1..x_gamma at positions start, start+1, ...
using DraftBundle = std::vector<DraftEntry>;

inline DraftBundle draft_proposals(const ToyModel& draft, std::span<const Token> prefix,
                                   std::size_t count, std::uint64_t seed, double temperature) {
  if (count < 1) throw UsageError("draft count must be >= 1");
  DraftBundle bundle;
  bundle.reserve(count);
  std::vector<Token> tokens(prefix.begin(), prefix.end());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = tokens.size();
    RandomStream rng = RandomStream::for_position(seed, pos, StreamPurpose::kDraft);
    DraftEntry e;
    e.noise = draw_noise_record(draft.num_steps(), draft.dim(), rng);
    e.cond_q = condition(draft.backbone, tokens, pos);
    e.traj_q = run_chain(draft.denoiser, e.cond_q, e.noise, temperature);
    e.token = e.traj_q.output();
    e.log_q = e.traj_q.last_step_logpdf();
    tokens.push_back(e.token);
    bundle.push_back(std::move(e));
  }
  return bundle;
}

struct VerificationOutcome {
  std::size_t start = 0;     // sequence position of the first draft
  std::size_t proposed = 0;  // drafts generated (gamma, truncated at L)
  std::size_t accepted = 0;  // n
  std::vector<double> log_ratios;
  std::vector<double> uniforms;
  std::optional<Token> resampled;
  long resample_trials = 0;
  bool bonus = false;  // extra target token after full acceptance
};

// Per-position record of how the final sequence came to be.
struct PositionRecord {
  Origin origin = Origin::kTargetFallthrough;
  std::optional<double> log_ratio;  // ratio of the draft tested at this position
  std::optional<double> uniform;
  long trials = 0;
};

// Appends n accepted drafts plus one target-derived token (resampled or
// bonus) to `state`, never exceeding `length`.
inline VerificationOutcome speculative_step(const ToyModel& target, const ToyModel& draft,
                                            SequenceState& state, std::size_t length, int gamma,
                                            double temperature, std::uint64_t seed,
                                            const EngineOptions& options = {},
                                            RunStats* stats = nullptr,
                                            std::vector<PositionRecord>* trace = nullptr) {
  if (gamma < 1) throw UsageError("gamma must be >= 1");
  const std::size_t start = state.size();
  if (start + 1 > length) throw UsageError("speculative_step: sequence already complete");
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(gamma), length - start);

  VerificationOutcome out;
  out.start = start;
  out.proposed = count;

  const DraftBundle bundle = draft_proposals(draft, state.tokens, count, seed, temperature);

  // Verification: target conditioned on prefix + preceding drafts.
  std::vector<Token> scored(state.tokens);
  std::vector<Vec> conds_p;
  conds_p.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t pos = start + i;
    Vec cond_p = condition(target.backbone, scored, pos);
    const DraftEntry& e = bundle[i];
    RatioEvaluation eval;
    if (options.align_noise) {
      eval = acceptance_log_ratio(e.traj_q, target, cond_p, e.noise, e.token, temperature, options);
    } else {
      RandomStream vrng = RandomStream::for_position(seed, pos, StreamPurpose::kVerifyNoise);
      const NoiseRecord independent = draw_noise_record(target.num_steps(), target.dim(), vrng);
      eval = acceptance_log_ratio(e.traj_q, target, cond_p, independent, e.token, temperature, options);
    }
    out.log_ratios.push_back(eval.log_ratio);
    out.uniforms.push_back(RandomStream::for_position(seed, pos, StreamPurpose::kUniform).uniform());
    conds_p.push_back(std::move(cond_p));
    scored.push_back(e.token);
  }
  const std::size_t n = verify_drafts(out.log_ratios, out.uniforms);
  out.accepted = n;

  for (std::size_t i = 0; i < n; ++i) {
    state.push(bundle[i].token, Origin::kDraftAccepted);
    if (trace) trace->push_back({Origin::kDraftAccepted, out.log_ratios[i], out.uniforms[i], 0});
  }
  std::size_t target_calls = count;
  if (n < count) {
    const std::size_t pos = start + n;
    RandomStream rrng = RandomStream::for_position(seed, pos, StreamPurpose::kResample);
    ResampleResult rs = rejection_resample(target, conds_p[n], draft, bundle[n].cond_q, temperature,
                                           rrng, options, stats);
    out.resampled = rs.token;
    out.resample_trials = rs.trials;
    state.push(std::move(rs.token), Origin::kResampled);
    if (trace) trace->push_back({Origin::kResampled, out.log_ratios[n], out.uniforms[n], rs.trials});
    if (stats) stats->record_trials(static_cast<std::uint64_t>(rs.trials));
  } else if (state.size() < length) {
    state.push(sample_model_token(target, state.tokens, seed, StreamPurpose::kBonus, temperature),
               Origin::kTargetFallthrough);
    out.bonus = true;
    ++target_calls;
    if (trace) trace->push_back({Origin::kTargetFallthrough, std::nullopt, std::nullopt, 0});
  }

  if (stats) {
    stats->ensure_length(length);
    for (std::size_t i = 0; i < count; ++i) {
      ++stats->proposed[start + i];
      if (i <= n && i < count) ++stats->examined[start + i];
      if (i < n) ++stats->accepted[start + i];
    }
    const std::size_t appended = state.size() - start;
    ++stats->steps;
    stats->tokens_appended += appended;
    stats->sum_accepted_n += n;
    if (length - start >= static_cast<std::size_t>(gamma) + 1) {
      ++stats->full_steps;
      stats->full_step_tokens += appended;
    }
    stats->draft_chain_calls += count;
    stats->target_chain_calls += target_calls;
  }
  return out;
}

struct GenerationResult {
  SequenceState state;
  RunStats stats;
  std::vector<PositionRecord> trace;
};

inline GenerationResult generate(const ToyModel& target, const ToyModel& draft,
                                 const SpecDecodeConfig& config, std::uint64_t seed,
                                 const EngineOptions& options = {}) {
  config.validate();
  check_model_pair(target, draft);
  GenerationResult res;
  res.state = prefill(target, config.length, config.rho, seed, config.temperature);
  res.stats.replicates = 1;
  res.stats.ensure_length(config.length);
  res.stats.target_chain_calls += res.state.size();
  res.trace.assign(res.state.size(), PositionRecord{Origin::kPrefilled, std::nullopt, std::nullopt, 0});
  EngineOptions opts = options;
  opts.max_resample_trials = config.max_resample_trials;
  while (res.state.size() < config.length) {
    try {
      speculative_step(target, draft, res.state, config.length, config.gamma, config.temperature, seed,
                       opts, &res.stats, &res.trace);
    } catch (const NumericalDivergenceError& e) {
      throw NumericalDivergenceError(e.step(), "speculative step starting at position " +
                                                   std::to_string(res.state.size()) + ": " + e.what());
    }
  }
  return res;
}

}  // namespace cspd
