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

// Seeded random streams. Every stream is keyed by (seed, position, purpose)
// so that a run is reproducible regardless of how replicates are scheduled.

#pragma once

#include <cstdint>
#include <random>

namespace cspd {

// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) noexcept {
  return mix64(seed ^ mix64(a + 0x632be59bd9b4e019ULL));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b) noexcept {
  return derive_seed(derive_seed(seed, a), b);
}

// What a sub-stream is used for. Values are part of the reproducibility
// contract; do not renumber.
enum class StreamPurpose : std::uint64_t {
  kTarget = 1,       // target-only and prefilled tokens
  kDraft = 2,        // draft proposals
  kVerifyNoise = 3,  // target noise when trajectory alignment is disabled
  kUniform = 4,      // acceptance test draws r_i
  kResample = 5,     // rejection-phase trials
  kBonus = 6,        // extra target token after full acceptance
  kReplicate = 7,
};

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  static RandomStream for_position(std::uint64_t seed, std::uint64_t position,
                                   StreamPurpose purpose) {
    return RandomStream(derive_seed(seed, position, static_cast<std::uint64_t>(purpose)));
  }

  double normal() { return normal_(engine_); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    double u = 0.0;
    while (u == 0.0) u = uniform_(engine_);
    return u;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cspd
