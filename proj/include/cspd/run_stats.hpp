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

// Aggregated counters from one or more generation runs. Merging is a
// component-wise sum, so it is associative and order independent.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace cspd {

struct RunStats {
  std::uint64_t replicates = 0;

  // Indexed by sequence position.
  std::vector<std::uint64_t> proposed;  // drafts generated for the position
  std::vector<std::uint64_t> examined;  // drafts that reached the ratio test
  std::vector<std::uint64_t> accepted;  // drafts kept

  std::uint64_t steps = 0;
  std::uint64_t tokens_appended = 0;    // by speculative steps, excluding prefill
  std::uint64_t sum_accepted_n = 0;
  // Steps with room for all gamma drafts plus the extra target token.
  std::uint64_t full_steps = 0;
  std::uint64_t full_step_tokens = 0;

  std::map<std::uint64_t, std::uint64_t> trial_counts;  // resample trials -> events
  std::uint64_t rejections = 0;
  std::uint64_t total_trials = 0;

  std::uint64_t target_chain_calls = 0;
  std::uint64_t draft_chain_calls = 0;

  void ensure_length(std::size_t n) {
    if (proposed.size() < n) {
      proposed.resize(n, 0);
      examined.resize(n, 0);
      accepted.resize(n, 0);
    }
  }

  void record_trials(std::uint64_t trials) {
    ++trial_counts[trials];
    ++rejections;
    total_trials += trials;
  }

  RunStats& merge(const RunStats& o) {
    replicates += o.replicates;
    ensure_length(o.proposed.size());
    for (std::size_t i = 0; i < o.proposed.size(); ++i) {
      proposed[i] += o.proposed[i];
      examined[i] += o.examined[i];
      accepted[i] += o.accepted[i];
    }
    steps += o.steps;
    tokens_appended += o.tokens_appended;
    sum_accepted_n += o.sum_accepted_n;
    full_steps += o.full_steps;
    full_step_tokens += o.full_step_tokens;
    for (const auto& [k, v] : o.trial_counts) trial_counts[k] += v;
    rejections += o.rejections;
    total_trials += o.total_trials;
    target_chain_calls += o.target_chain_calls;
    draft_chain_calls += o.draft_chain_calls;
    return *this;
  }

  std::uint64_t total_proposed() const { return sum(proposed); }
  std::uint64_t total_examined() const { return sum(examined); }
  std::uint64_t total_accepted() const { return sum(accepted); }

  // Accepted drafts over proposed drafts; absent when nothing was proposed.
  std::optional<double> overall_alpha() const {
    const auto p = total_proposed();
    if (p == 0) return std::nullopt;
    return static_cast<double>(total_accepted()) / static_cast<double>(p);
  }

  // Accepted over drafts that actually faced the ratio test: the per-token
  // acceptance probability.
  std::optional<double> token_alpha() const {
    const auto e = total_examined();
    if (e == 0) return std::nullopt;
    return static_cast<double>(total_accepted()) / static_cast<double>(e);
  }

  std::optional<double> mean_trials() const {
    if (rejections == 0) return std::nullopt;
    return static_cast<double>(total_trials) / static_cast<double>(rejections);
  }

  std::optional<double> tokens_per_step() const {
    if (steps == 0) return std::nullopt;
    return static_cast<double>(tokens_appended) / static_cast<double>(steps);
  }

  std::optional<double> full_tokens_per_step() const {
    if (full_steps == 0) return std::nullopt;
    return static_cast<double>(full_step_tokens) / static_cast<double>(full_steps);
  }

  friend bool operator==(const RunStats&, const RunStats&) = default;

 private:
  static std::uint64_t sum(const std::vector<std::uint64_t>& v) {
    std::uint64_t s = 0;
    for (auto x : v) s += x;
    return s;
  }
};

}  // namespace cspd
