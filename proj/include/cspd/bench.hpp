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

// Replicated experiments: acceptance sweeps over gamma / pre-fill ratio /
// temperature, rejection-trial histograms, the distribution-equivalence
// check, and the expected-walltime model.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cspd/autoregressive.hpp"
#include "cspd/error.hpp"
#include "cspd/oracle.hpp"
#include "cspd/random.hpp"
#include "cspd/run_stats.hpp"
#include "cspd/specdec.hpp"

namespace cspd {

// Expected walltime improvement (1 - a^(g+1)) / ((1 - a)(g c + 1)).
inline double theoretical_improvement(double alpha, int gamma, double cost_ratio) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in [0, 1)");
  if (gamma < 0) throw UsageError("gamma must be >= 0");
  if (!(cost_ratio >= 0.0) || !std::isfinite(cost_ratio)) throw UsageError("cost ratio must be >= 0");
  return (1.0 - std::pow(alpha, gamma + 1)) / ((1.0 - alpha) * (gamma * cost_ratio + 1.0));
}

// Throughput relative to target-only decoding under a cost model where a
// draft chain costs `cost_ratio` and a target pass costs 1. Uses only steps
// that had room for all gamma drafts.
inline std::optional<double> simulated_improvement(const RunStats& stats, int gamma, double cost_ratio) {
  const auto tps = stats.full_tokens_per_step();
  if (!tps) return std::nullopt;
  return *tps / (1.0 + gamma * cost_ratio);
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t replicate) {
  return derive_seed(master, replicate, static_cast<std::uint64_t>(StreamPurpose::kReplicate));
}

// Seeds for the target-only reference runs; disjoint from replicate_seed.
inline std::uint64_t reference_seed(std::uint64_t master, std::uint64_t replicate) {
  return derive_seed(master ^ 0x5bd1e9955bd1e995ULL, replicate,
                     static_cast<std::uint64_t>(StreamPurpose::kTarget));
}

// Evaluates fn(i) for i in [0, n) on a worker pool; results are stored by
// index so the output never depends on scheduling.
template <typename Fn>
auto parallel_map(std::size_t n, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct ReplicateBatch {
  RunStats stats;                           // merged over replicates
  std::vector<std::optional<double>> alpha;  // per replicate, accepted / proposed
};

inline ReplicateBatch run_replicates(const ToyModel& target, const ToyModel& draft,
                                     const SpecDecodeConfig& config, std::uint64_t master_seed,
                                     std::size_t replicates, const EngineOptions& options = {}) {
  if (replicates < 1) throw UsageError("replicates must be >= 1");
  auto per = parallel_map(replicates, [&](std::size_t r) {
    return generate(target, draft, config, replicate_seed(master_seed, r), options).stats;
  });
  ReplicateBatch batch;
  for (const RunStats& s : per) {
    batch.stats.merge(s);
    batch.alpha.push_back(s.overall_alpha());
  }
  return batch;
}

struct SweepRow {
  double axis_value = 0.0;
  std::optional<double> mean_alpha;
  std::optional<double> stderr_alpha;
  std::optional<double> token_alpha;
  std::vector<std::optional<double>> per_position_alpha;
  std::optional<double> mean_trials;
  std::optional<double> tokens_per_step;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  RunStats stats;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepRow> rows;
};

inline SweepRow summarize(double axis_value, const ReplicateBatch& batch, std::size_t replicates,
                          std::uint64_t seed) {
  SweepRow row;
  row.axis_value = axis_value;
  row.replicates = replicates;
  row.seed = seed;
  std::vector<double> defined;
  for (const auto& a : batch.alpha) {
    if (a) defined.push_back(*a);
  }
  if (!defined.empty()) {
    double mean = 0.0;
    for (double a : defined) mean += a;
    mean /= static_cast<double>(defined.size());
    row.mean_alpha = mean;
    if (defined.size() > 1) {
      double ss = 0.0;
      for (double a : defined) ss += (a - mean) * (a - mean);
      row.stderr_alpha = std::sqrt(ss / static_cast<double>(defined.size() - 1) /
                                   static_cast<double>(defined.size()));
    } else {
      row.stderr_alpha = 0.0;
    }
  }
  row.token_alpha = batch.stats.token_alpha();
  row.per_position_alpha = oracle::empirical_acceptance(batch.stats).per_position;
  row.mean_trials = batch.stats.mean_trials();
  row.tokens_per_step = batch.stats.tokens_per_step();
  row.stats = batch.stats;
  return row;
}

inline SweepResult sweep_gamma(const ToyModel& target, const ToyModel& draft, SpecDecodeConfig config,
                               std::span<const int> gammas, std::size_t replicates,
                               std::uint64_t master_seed, const EngineOptions& options = {}) {
  SweepResult res{"gamma", {}};
  for (int g : gammas) {
    config.gamma = g;
    res.rows.push_back(summarize(g, run_replicates(target, draft, config, master_seed, replicates, options),
                                 replicates, master_seed));
  }
  return res;
}

inline SweepResult sweep_prefill(const ToyModel& target, const ToyModel& draft, SpecDecodeConfig config,
                                 std::span<const double> rhos, std::size_t replicates,
                                 std::uint64_t master_seed, const EngineOptions& options = {}) {
  SweepResult res{"rho", {}};
  for (double rho : rhos) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw UsageError("pre-fill ratios must lie in [0, 1]");
    config.rho = rho;
    res.rows.push_back(summarize(rho, run_replicates(target, draft, config, master_seed, replicates, options),
                                 replicates, master_seed));
  }
  return res;
}

inline SweepResult sweep_temperature(const ToyModel& target, const ToyModel& draft, SpecDecodeConfig config,
                                     std::span<const double> taus, std::size_t replicates,
                                     std::uint64_t master_seed, const EngineOptions& options = {}) {
  SweepResult res{"temperature", {}};
  for (double tau : taus) {
    if (!(tau > 0.0)) throw UsageError("temperatures must be positive");
    config.temperature = tau;
    res.rows.push_back(summarize(tau, run_replicates(target, draft, config, master_seed, replicates, options),
                                 replicates, master_seed));
  }
  return res;
}

struct TrialsHistogram {
  std::map<std::uint64_t, std::uint64_t> counts;
  std::uint64_t events = 0;
  double mean = 0.0;
  std::uint64_t p99 = 0;
  std::uint64_t max = 0;

  bool empty() const noexcept { return events == 0; }
};

inline TrialsHistogram trials_histogram(std::span<const RunStats> stats) {
  TrialsHistogram h;
  std::uint64_t total = 0;
  for (const RunStats& s : stats) {
    for (const auto& [trials, count] : s.trial_counts) {
      h.counts[trials] += count;
      h.events += count;
      total += trials * count;
    }
  }
  if (h.events == 0) return h;
  h.mean = static_cast<double>(total) / static_cast<double>(h.events);
  const auto rank = static_cast<std::uint64_t>(std::ceil(0.99 * static_cast<double>(h.events)));
  std::uint64_t seen = 0;
  for (const auto& [trials, count] : h.counts) {
    seen += count;
    if (seen >= rank) {
      h.p99 = trials;
      break;
    }
  }
  h.max = h.counts.rbegin()->first;
  return h;
}

// First coordinate (or a projection) of every position across runs.
using PositionSamples = std::vector<std::vector<double>>;  // [position][run]

inline std::vector<SequenceState> generated_sequences(const ToyModel& target, const ToyModel& draft,
                                                      const SpecDecodeConfig& config, std::uint64_t master_seed,
                                                      std::size_t runs, const EngineOptions& options = {}) {
  return parallel_map(runs, [&](std::size_t r) {
    return generate(target, draft, config, replicate_seed(master_seed, r), options).state;
  });
}

inline std::vector<SequenceState> reference_sequences(const ToyModel& target, const SpecDecodeConfig& config,
                                                      std::uint64_t master_seed, std::size_t runs) {
  return parallel_map(runs, [&](std::size_t r) {
    return target_only_generate(target, config.length, reference_seed(master_seed, r), config.temperature);
  });
}

inline PositionSamples project(std::span<const SequenceState> runs, std::span<const double> direction) {
  if (runs.empty()) return {};
  const std::size_t length = runs.front().size();
  PositionSamples out(length);
  for (const SequenceState& s : runs) {
    for (std::size_t i = 0; i < length; ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < direction.size(); ++k) v += direction[k] * s.tokens[i][k];
      out[i].push_back(v);
    }
  }
  return out;
}

struct PositionCheck {
  std::size_t position = 0;
  std::string statistic_label;  // "x[k]" or "proj"
  oracle::KsResult ks;
  bool pass = false;
};

struct DistributionCheck {
  std::vector<PositionCheck> checks;
  double per_test_significance = 0.0;
  double max_statistic = 0.0;
  bool pass = true;
};

// Two-sample KS between speculative and target-only outputs at every
// position: each coordinate plus one seeded random projection when d > 1.
// The significance is split across all tests (Bonferroni).
inline DistributionCheck check_distribution(const ToyModel& target, const ToyModel& draft,
                                            const SpecDecodeConfig& config, std::size_t runs,
                                            std::uint64_t master_seed, double significance,
                                            const EngineOptions& options = {}) {
  if (runs < 100) throw UsageError("distribution check needs at least 100 runs");
  if (!(significance > 0.0 && significance < 1.0)) throw UsageError("significance must lie in (0, 1)");
  const auto spec_runs = generated_sequences(target, draft, config, master_seed, runs, options);
  const auto ref_runs = reference_sequences(target, config, master_seed, runs);
  const std::size_t d = target.dim();

  std::vector<std::pair<std::string, Vec>> directions;
  for (std::size_t k = 0; k < d; ++k) {
    Vec e(d, 0.0);
    e[k] = 1.0;
    directions.emplace_back("x[" + std::to_string(k) + "]", std::move(e));
  }
  if (d > 1) {
    RandomStream rng(derive_seed(master_seed, 0xd1ec7));
    Vec dir(d);
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    for (double& v : dir) v /= std::sqrt(norm);
    directions.emplace_back("proj", std::move(dir));
  }

  DistributionCheck result;
  const double tests = static_cast<double>(config.length * directions.size());
  result.per_test_significance = significance / tests;
  for (const auto& [label, dir] : directions) {
    const PositionSamples a = project(spec_runs, dir);
    const PositionSamples b = project(ref_runs, dir);
    for (std::size_t i = 0; i < config.length; ++i) {
      PositionCheck c;
      c.position = i;
      c.statistic_label = label;
      c.ks = oracle::ks_two_sample(a[i], b[i]);
      c.pass = c.ks.p_value >= result.per_test_significance;
      result.max_statistic = std::max(result.max_statistic, c.ks.statistic);
      result.pass = result.pass && c.pass;
      result.checks.push_back(std::move(c));
    }
  }
  std::stable_sort(result.checks.begin(), result.checks.end(),
                   [](const PositionCheck& x, const PositionCheck& y) { return x.position < y.position; });
  return result;
}

}  // namespace cspd
