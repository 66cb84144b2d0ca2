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

// Toy autoregressive backbone: the condition for position i is
//   cond_0 = prefix_embedding
//   cond_i = g(W * token_{i-1} + u)    (component-wise, g = id or tanh)
// A ToyModel pairs a backbone with the denoiser that turns a condition into a
// token.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cspd/core_math.hpp"
#include "cspd/diffusion.hpp"
#include "cspd/error.hpp"
#include "cspd/random.hpp"

namespace cspd {

struct ARBackboneSpec {
  Vec prefix_embedding;
  Vec recurrence;  // W
  Vec offset;      // u
  MeanRule rule = MeanRule::kIdentity;

  std::size_t dim() const noexcept { return prefix_embedding.size(); }

  void validate(std::size_t d) const {
    if (prefix_embedding.size() != d || recurrence.size() != d || offset.size() != d) {
      throw UsageError("backbone coefficients must have dimension " + std::to_string(d));
    }
    if (!all_finite(prefix_embedding) || !all_finite(recurrence) || !all_finite(offset)) {
      throw UsageError("backbone has non-finite coefficient");
    }
  }

  friend bool operator==(const ARBackboneSpec&, const ARBackboneSpec&) = default;
};

struct ToyModel {
  DenoiserSpec denoiser;
  ARBackboneSpec backbone;

  std::size_t dim() const noexcept { return denoiser.dim(); }
  int num_steps() const noexcept { return denoiser.num_steps(); }

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

enum class Origin { kPrefilled, kDraftAccepted, kResampled, kTargetFallthrough };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::kPrefilled: return "prefilled";
    case Origin::kDraftAccepted: return "draft-accepted";
    case Origin::kResampled: return "resampled";
    case Origin::kTargetFallthrough: return "target-fallthrough";
  }
  return "unknown";
}

struct SequenceState {
  std::vector<Token> tokens;
  std::vector<Origin> origins;

  std::size_t size() const noexcept { return tokens.size(); }
  void push(Token t, Origin o) {
    tokens.push_back(std::move(t));
    origins.push_back(o);
  }
};

inline Vec condition(const ARBackboneSpec& backbone, std::span<const Token> tokens, std::size_t i) {
  if (i > tokens.size()) {
    throw UsageError("condition: position " + std::to_string(i) + " beyond sequence length " +
                     std::to_string(tokens.size()));
  }
  if (i == 0) return backbone.prefix_embedding;
  const Token& prev = tokens[i - 1];
  if (prev.dim() != backbone.dim()) throw UsageError("condition: token dimension mismatch");
  Vec cond(backbone.dim());
  for (std::size_t k = 0; k < cond.size(); ++k) {
    const double a = backbone.recurrence[k] * prev[k] + backbone.offset[k];
    cond[k] = backbone.rule == MeanRule::kTanh ? std::tanh(a) : a;
  }
  return cond;
}

inline Vec condition(const ARBackboneSpec& backbone, const SequenceState& state, std::size_t i) {
  return condition(backbone, std::span<const Token>(state.tokens), i);
}

// One token from the target at the next position, on the sub-stream
// (seed, position, purpose).
inline Token sample_model_token(const ToyModel& model, std::span<const Token> tokens,
                                std::uint64_t seed, StreamPurpose purpose, double temperature) {
  const std::size_t pos = tokens.size();
  RandomStream rng = RandomStream::for_position(seed, pos, purpose);
  const NoiseRecord noise = draw_noise_record(model.num_steps(), model.dim(), rng);
  return run_chain(model.denoiser, condition(model.backbone, tokens, pos), noise, temperature).output();
}

inline SequenceState target_only_generate(const ToyModel& target, std::size_t length,
                                          std::uint64_t seed, double temperature) {
  if (length < 1) throw UsageError("target_only_generate: length must be >= 1");
  SequenceState state;
  state.tokens.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    state.push(sample_model_token(target, state.tokens, seed, StreamPurpose::kTarget, temperature),
               Origin::kTargetFallthrough);
  }
  return state;
}

// round-half-up(rho * L)
inline std::size_t prefill_count(double rho, std::size_t length) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw UsageError("prefill ratio must lie in [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(length) + 0.5));
  return std::min(k, length);
}

inline SequenceState prefill(const ToyModel& target, std::size_t length, double rho,
                             std::uint64_t seed, double temperature) {
  const std::size_t k = prefill_count(rho, length);
  SequenceState state;
  state.tokens.reserve(length);
  for (std::size_t i = 0; i < k; ++i) {
    state.push(sample_model_token(target, state.tokens, seed, StreamPurpose::kTarget, temperature),
               Origin::kPrefilled);
  }
  return state;
}

}  // namespace cspd
