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

#pragma once

#include <stdexcept>
#include <string>

namespace cspd {

// Caller passed something malformed: mismatched dimensions, out-of-range
// arguments, invalid configuration. Maps to exit status 2 in the CLI.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Model configuration failed to parse or validate.
class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Closed-form oracle requested for a model it cannot describe.
class UnsupportedOracleError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Something went non-finite or a sampler failed to terminate. Exit status 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalDivergenceError : public NumericalError {
 public:
  NumericalDivergenceError(int step, const std::string& what)
      : NumericalError(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class ResampleExhaustedError : public NumericalError {
 public:
  ResampleExhaustedError(long trials, double acceptance_estimate,
                         const std::string& what)
      : NumericalError(what),
        trials_(trials),
        acceptance_estimate_(acceptance_estimate) {}
  long trials() const noexcept { return trials_; }
  // Mean of the acceptance thresholds seen across all trials; estimates the
  // per-trial success probability Z.
  double acceptance_estimate() const noexcept { return acceptance_estimate_; }

 private:
  long trials_;
  double acceptance_estimate_;
};

// The residual max(0, p - q) has (numerically) zero mass.
class IndistinguishableDensitiesError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace cspd
