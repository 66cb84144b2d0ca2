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

// JSON model configuration and result serialization.
//
// Model config (schema_version 1):
//   {
//     "schema_version": 1, "d": 1, "T": 8,
//     "draft":  { "denoiser": {...}, "backbone": {...} },
//     "target": { "denoiser": {...}, "backbone": {...} },
//     "run":    { "gamma": 8, "length": 32, "rho": 0.0, "temperature": 1.0,
//                 "max_resample_trials": 10000 },        // optional
//     "engine": { "align_noise": true,
//                 "include_variance_product": true },    // optional
//     "seed": 42                                         // optional
//   }
//   denoiser: { "mean_rule": "identity"|"tanh",
//               "steps": [ {"t": T, "A": [..d], "C": [..d], "b": [..d], "var": [..d]},
//                          ... down to t = 1 ] }
//   backbone: { "rule": "identity"|"tanh", "prefix_embedding": [..d],
//               "W": [..d], "u": [..d] }
//
// A results JSON file embeds the same keys, so it can be fed back as a config.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspd/autoregressive.hpp"
#include "cspd/diffusion.hpp"
#include "cspd/error.hpp"
#include "cspd/run_stats.hpp"
#include "cspd/specdec.hpp"

namespace cspd::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct ModelConfig {
  std::size_t dim = 1;
  int num_steps = 2;
  ToyModel draft;
  ToyModel target;
  SpecDecodeConfig run;
  EngineOptions engine;
  std::optional<std::uint64_t> seed;
};

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path + ": missing key \"" + key + "\"");
  return *it;
}

inline Vec read_vec(const json& obj, const char* key, const std::string& path, std::size_t dim) {
  const json& v = require(obj, key, path);
  const std::string where = path + "/" + key;
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  if (v.size() != dim) {
    throw ConfigError(where + ": expected " + std::to_string(dim) + " entries, got " +
                      std::to_string(v.size()));
  }
  Vec out;
  out.reserve(dim);
  for (const json& x : v) {
    if (!x.is_number()) throw ConfigError(where + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline MeanRule read_rule(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return MeanRule::kIdentity;
  if (!it->is_string()) throw ConfigError(path + "/" + key + ": expected a string");
  const auto s = it->get<std::string>();
  if (s == "identity") return MeanRule::kIdentity;
  if (s == "tanh") return MeanRule::kTanh;
  throw ConfigError(path + "/" + key + ": unknown rule \"" + s + "\" (identity|tanh)");
}

inline const char* rule_name(MeanRule r) { return r == MeanRule::kTanh ? "tanh" : "identity"; }

template <typename T>
T read_number(const json& obj, const char* key, const std::string& path, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw ConfigError(path + "/" + key + ": expected a number");
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ConfigError(path + "/" + key + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (it->is_number_integer() && !it->is_number_unsigned()) {
        throw ConfigError(path + "/" + key + ": expected a non-negative integer");
      }
    }
  }
  return it->get<T>();
}

inline bool read_bool(const json& obj, const char* key, const std::string& path, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) throw ConfigError(path + "/" + key + ": expected true or false");
  return it->get<bool>();
}

inline DenoiserSpec read_denoiser(const json& obj, const std::string& path, std::size_t dim, int num_steps) {
  const MeanRule rule = read_rule(obj, "mean_rule", path);
  const json& steps = require(obj, "steps", path);
  if (!steps.is_array()) throw ConfigError(path + "/steps: expected an array");
  if (steps.size() != static_cast<std::size_t>(num_steps)) {
    throw ConfigError(path + "/steps: expected T=" + std::to_string(num_steps) + " entries, got " +
                      std::to_string(steps.size()));
  }
  std::vector<StepCoefficients> coeffs;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const std::string sp = path + "/steps/" + std::to_string(k);
    const json& s = steps[k];
    const int expected_t = num_steps - static_cast<int>(k);
    const int t = read_number<int>(s, "t", sp, expected_t);
    if (t != expected_t) {
      throw ConfigError(sp + "/t: steps run from t=T down to t=1; expected " + std::to_string(expected_t) +
                        ", got " + std::to_string(t));
    }
    StepCoefficients c{read_vec(s, "A", sp, dim), read_vec(s, "C", sp, dim), read_vec(s, "b", sp, dim),
                       read_vec(s, "var", sp, dim)};
    for (double v : c.variance) {
      if (!(v >= kVarianceFloor)) throw ConfigError(sp + "/var: variances must be >= 1e-12");
    }
    coeffs.push_back(std::move(c));
  }
  try {
    return DenoiserSpec(std::move(coeffs), rule);
  } catch (const UsageError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ToyModel read_model(const json& obj, const std::string& path, std::size_t dim, int num_steps) {
  ToyModel m;
  m.denoiser = read_denoiser(require(obj, "denoiser", path), path + "/denoiser", dim, num_steps);
  const json& bb = require(obj, "backbone", path);
  const std::string bp = path + "/backbone";
  m.backbone.rule = read_rule(bb, "rule", bp);
  m.backbone.prefix_embedding = read_vec(bb, "prefix_embedding", bp, dim);
  m.backbone.recurrence = read_vec(bb, "W", bp, dim);
  m.backbone.offset = read_vec(bb, "u", bp, dim);
  return m;
}

inline json write_model(const ToyModel& m) {
  json steps = json::array();
  const int T = m.denoiser.num_steps();
  for (int k = 0; k < T; ++k) {
    const StepCoefficients& c = m.denoiser.steps()[static_cast<std::size_t>(k)];
    steps.push_back({{"t", T - k}, {"A", c.state_coupling}, {"C", c.cond_coupling}, {"b", c.offset},
                     {"var", c.variance}});
  }
  return {{"denoiser", {{"mean_rule", rule_name(m.denoiser.rule())}, {"steps", steps}}},
          {"backbone",
           {{"rule", rule_name(m.backbone.rule)},
            {"prefix_embedding", m.backbone.prefix_embedding},
            {"W", m.backbone.recurrence},
            {"u", m.backbone.offset}}}};
}

}  // namespace detail

inline ModelConfig config_from_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("/: expected a JSON object");
  const int version = read_number<int>(doc, "schema_version", "", -1);
  if (version != kSchemaVersion) {
    throw ConfigError("/schema_version: expected " + std::to_string(kSchemaVersion) + ", got " +
                      std::to_string(version));
  }
  ModelConfig cfg;
  const auto d = read_number<long long>(doc, "d", "", -1);
  const auto t = read_number<long long>(doc, "T", "", -1);
  if (d < 1) throw ConfigError("/d: dimension must be >= 1");
  if (t < 2) throw ConfigError("/T: step count must be >= 2");
  cfg.dim = static_cast<std::size_t>(d);
  cfg.num_steps = static_cast<int>(t);
  cfg.draft = read_model(require(doc, "draft", ""), "/draft", cfg.dim, cfg.num_steps);
  cfg.target = read_model(require(doc, "target", ""), "/target", cfg.dim, cfg.num_steps);

  if (auto it = doc.find("run"); it != doc.end()) {
    const json& r = *it;
    if (!r.is_object()) throw ConfigError("/run: expected an object");
    cfg.run.gamma = read_number<int>(r, "gamma", "/run", cfg.run.gamma);
    cfg.run.length = read_number<std::size_t>(r, "length", "/run", cfg.run.length);
    cfg.run.rho = read_number<double>(r, "rho", "/run", cfg.run.rho);
    cfg.run.temperature = read_number<double>(r, "temperature", "/run", cfg.run.temperature);
    cfg.run.max_resample_trials = read_number<long>(r, "max_resample_trials", "/run", cfg.run.max_resample_trials);
  }
  if (auto it = doc.find("engine"); it != doc.end()) {
    cfg.engine.align_noise = read_bool(*it, "align_noise", "/engine", true);
    cfg.engine.include_variance_product = read_bool(*it, "include_variance_product", "/engine", true);
  }
  cfg.engine.max_resample_trials = cfg.run.max_resample_trials;
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ConfigError("/seed: expected a non-negative integer");
    cfg.seed = it->get<std::uint64_t>();
  }
  try {
    cfg.run.validate();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("/run: ") + e.what());
  }
  return cfg;
}

inline json config_to_json(const ModelConfig& cfg) {
  json doc = {{"schema_version", kSchemaVersion},
              {"d", cfg.dim},
              {"T", cfg.num_steps},
              {"draft", detail::write_model(cfg.draft)},
              {"target", detail::write_model(cfg.target)},
              {"run",
               {{"gamma", cfg.run.gamma},
                {"length", cfg.run.length},
                {"rho", cfg.run.rho},
                {"temperature", cfg.run.temperature},
                {"max_resample_trials", cfg.run.max_resample_trials}}},
              {"engine",
               {{"align_noise", cfg.engine.align_noise},
                {"include_variance_product", cfg.engine.include_variance_product}}}};
  if (cfg.seed) doc["seed"] = *cfg.seed;
  return doc;
}

inline ModelConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "... at line L, column C: ..." for syntax errors.
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(doc);
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline json stats_to_json(const RunStats& s) {
  json trials = json::array();
  for (const auto& [k, v] : s.trial_counts) trials.push_back({k, v});
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  return {{"replicates", s.replicates},
          {"proposed", s.proposed},
          {"examined", s.examined},
          {"accepted", s.accepted},
          {"steps", s.steps},
          {"tokens_appended", s.tokens_appended},
          {"sum_accepted_n", s.sum_accepted_n},
          {"full_steps", s.full_steps},
          {"full_step_tokens", s.full_step_tokens},
          {"trial_counts", trials},
          {"rejections", s.rejections},
          {"total_trials", s.total_trials},
          {"target_chain_calls", s.target_chain_calls},
          {"draft_chain_calls", s.draft_chain_calls},
          {"overall_alpha", opt(s.overall_alpha())},
          {"token_alpha", opt(s.token_alpha())},
          {"mean_trials", opt(s.mean_trials())},
          {"tokens_per_step", opt(s.tokens_per_step())}};
}

inline RunStats stats_from_json(const json& j) {
  RunStats s;
  s.replicates = j.at("replicates").get<std::uint64_t>();
  s.proposed = j.at("proposed").get<std::vector<std::uint64_t>>();
  s.examined = j.at("examined").get<std::vector<std::uint64_t>>();
  s.accepted = j.at("accepted").get<std::vector<std::uint64_t>>();
  s.steps = j.at("steps").get<std::uint64_t>();
  s.tokens_appended = j.at("tokens_appended").get<std::uint64_t>();
  s.sum_accepted_n = j.at("sum_accepted_n").get<std::uint64_t>();
  s.full_steps = j.at("full_steps").get<std::uint64_t>();
  s.full_step_tokens = j.at("full_step_tokens").get<std::uint64_t>();
  for (const json& e : j.at("trial_counts")) s.trial_counts[e[0].get<std::uint64_t>()] = e[1].get<std::uint64_t>();
  s.rejections = j.at("rejections").get<std::uint64_t>();
  s.total_trials = j.at("total_trials").get<std::uint64_t>();
  s.target_chain_calls = j.at("target_chain_calls").get<std::uint64_t>();
  s.draft_chain_calls = j.at("draft_chain_calls").get<std::uint64_t>();
  return s;
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline constexpr const char* kCsvHeader = "replicate,position,origin,accepted,log_ratio,trials";

inline void append_csv_rows(std::string& out, std::size_t replicate, const std::vector<PositionRecord>& trace) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const PositionRecord& r = trace[i];
    out += std::to_string(replicate);
    out += ',';
    out += std::to_string(i);
    out += ',';
    out += to_string(r.origin);
    out += ',';
    out += r.origin == Origin::kDraftAccepted ? '1' : '0';
    out += ',';
    if (r.log_ratio) out += format_double(*r.log_ratio);
    out += ',';
    out += std::to_string(r.trials);
    out += '\n';
  }
}

inline json trace_to_json(const std::vector<PositionRecord>& trace, const SequenceState& state) {
  json rows = json::array();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const PositionRecord& r = trace[i];
    rows.push_back({{"position", i},
                    {"origin", std::string(to_string(r.origin))},
                    {"accepted", r.origin == Origin::kDraftAccepted},
                    {"log_ratio", r.log_ratio ? json(*r.log_ratio) : json(nullptr)},
                    {"uniform", r.uniform ? json(*r.uniform) : json(nullptr)},
                    {"trials", r.trials},
                    {"token", state.tokens[i].values()}});
  }
  return rows;
}

}  // namespace cspd::io
