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

// cspd: command-line front end.
//
//   cspd generate   --config PATH [--seed N] [--replicates N] [--out PATH] [--format json|csv]
//   cspd check-dist --config PATH [--runs N] [--seed N] [--significance F]
//   cspd sweep KIND --config PATH --values LIST [--replicates N] [--seed N] [--out PATH]
//   cspd formula ALPHA GAMMA C
//
// Exit status: 0 ok, 1 distribution check failed, 2 usage/config error,
// 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cspd/cspd.hpp"

namespace {

using cspd::io::json;

constexpr std::uint64_t kDefaultSeed = 42;

struct RunOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> gamma;
  std::optional<int> steps;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> length;
  std::optional<double> rho;
  std::optional<double> temperature;
  std::optional<long> max_trials;
  bool no_align = false;
  bool no_variance_product = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Model configuration JSON")->required();
    cmd->add_option("--seed", seed, "Master seed (default: config seed, else 42)");
    cmd->add_option("--gamma", gamma, "Draft length per speculative step")->check(CLI::PositiveNumber);
    cmd->add_option("--steps", steps, "Expected denoising step count T (must match config)");
    cmd->add_option("--dim", dim, "Expected token dimension d (must match config)");
    cmd->add_option("--len", length, "Sequence length L")->check(CLI::PositiveNumber);
    cmd->add_option("--rho", rho, "Pre-fill ratio in [0,1]");
    cmd->add_option("--temp", temperature, "Sampling temperature");
    cmd->add_option("--max-trials", max_trials, "Cap on rejection-phase trials");
    cmd->add_flag("--no-align", no_align, "Draw independent noise for the target (ablation)");
    cmd->add_flag("--no-variance-product", no_variance_product,
                  "Drop the variance product from both ratios (ablation)");
  }

  cspd::io::ModelConfig resolve() const {
    cspd::io::ModelConfig cfg = cspd::io::load_config(config_path);
    if (steps && *steps != cfg.num_steps) {
      throw cspd::ConfigError("--steps " + std::to_string(*steps) + " does not match config T=" +
                              std::to_string(cfg.num_steps));
    }
    if (dim && *dim != cfg.dim) {
      throw cspd::ConfigError("--dim " + std::to_string(*dim) + " does not match config d=" +
                              std::to_string(cfg.dim));
    }
    if (gamma) cfg.run.gamma = *gamma;
    if (length) cfg.run.length = *length;
    if (rho) cfg.run.rho = *rho;
    if (temperature) cfg.run.temperature = *temperature;
    if (max_trials) cfg.run.max_resample_trials = *max_trials;
    if (no_align) cfg.engine.align_noise = false;
    if (no_variance_product) cfg.engine.include_variance_product = false;
    cfg.engine.max_resample_trials = cfg.run.max_resample_trials;
    cfg.run.validate();
    cfg.seed = seed ? *seed : cfg.seed.value_or(kDefaultSeed);
    return cfg;
  }
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cspd::UsageError("cannot write output file " + path);
  out << text;
  if (!out) throw cspd::UsageError("failed writing output file " + path);
}

std::string opt_field(const std::optional<double>& v) {
  return v ? cspd::io::format_double(*v) : std::string();
}

int cmd_generate(const RunOverrides& o, std::size_t replicates, const std::string& out_path,
                 const std::string& format) {
  const cspd::io::ModelConfig cfg = o.resolve();
  const std::uint64_t seed = *cfg.seed;
  auto results = cspd::parallel_map(replicates, [&](std::size_t r) {
    return cspd::generate(cfg.target, cfg.draft, cfg.run, cspd::replicate_seed(seed, r), cfg.engine);
  });
  if (format == "csv") {
    std::string text = cspd::io::kCsvHeader;
    text += '\n';
    for (std::size_t r = 0; r < results.size(); ++r) cspd::io::append_csv_rows(text, r, results[r].trace);
    write_output(out_path, text);
    return 0;
  }
  json doc = cspd::io::config_to_json(cfg);
  cspd::RunStats merged;
  json reps = json::array();
  for (std::size_t r = 0; r < results.size(); ++r) {
    merged.merge(results[r].stats);
    reps.push_back({{"replicate", r},
                    {"seed", cspd::replicate_seed(seed, r)},
                    {"stats", cspd::io::stats_to_json(results[r].stats)},
                    {"positions", cspd::io::trace_to_json(results[r].trace, results[r].state)}});
  }
  doc["replicate_count"] = replicates;
  doc["stats"] = cspd::io::stats_to_json(merged);
  doc["replicates"] = std::move(reps);
  write_output(out_path, doc.dump(2) + "\n");
  return 0;
}

int cmd_check_dist(const RunOverrides& o, std::size_t runs, double significance) {
  const cspd::io::ModelConfig cfg = o.resolve();
  const auto check = cspd::check_distribution(cfg.target, cfg.draft, cfg.run, runs, *cfg.seed, significance,
                                              cfg.engine);
  std::ostringstream os;
  os << "runs per side: " << runs << ", positions: " << cfg.run.length
     << ", per-test significance: " << cspd::io::format_double(check.per_test_significance) << "\n";
  char line[160];
  for (const auto& c : check.checks) {
    std::snprintf(line, sizeof line, "position %3zu %-6s D=%.6f p=%.4g %s\n", c.position,
                  c.statistic_label.c_str(), c.ks.statistic, c.ks.p_value, c.pass ? "pass" : "FAIL");
    os << line;
  }
  std::snprintf(line, sizeof line, "max D=%.6f: %s\n", check.max_statistic, check.pass ? "PASS" : "FAIL");
  os << line;
  std::cout << os.str();
  return check.pass ? 0 : 1;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw cspd::UsageError("bad axis value \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw cspd::UsageError("axis value list is empty");
  return out;
}

int cmd_sweep(const std::string& kind, const RunOverrides& o, const std::string& values, std::size_t replicates,
              const std::string& out_path, const std::string& curve_path) {
  const cspd::io::ModelConfig cfg = o.resolve();
  const std::uint64_t seed = *cfg.seed;
  std::string text;
  if (kind == "trials") {
    text = "axis_value,rejections,mean_trials,p99_trials,max_trials\n";
    for (int g : parse_list<int>(values)) {
      cspd::SpecDecodeConfig run = cfg.run;
      run.gamma = g;
      run.validate();
      const auto batch = cspd::run_replicates(cfg.target, cfg.draft, run, seed, replicates, cfg.engine);
      const auto h = cspd::trials_histogram(std::span<const cspd::RunStats>(&batch.stats, 1));
      text += std::to_string(g) + "," + std::to_string(h.events) + "," +
              (h.empty() ? std::string() : cspd::io::format_double(h.mean)) + "," +
              (h.empty() ? std::string() : std::to_string(h.p99)) + "," +
              (h.empty() ? std::string() : std::to_string(h.max)) + "\n";
    }
    write_output(out_path, text);
    return 0;
  }

  cspd::SweepResult res;
  if (kind == "gamma") {
    const auto axis = parse_list<int>(values);
    res = cspd::sweep_gamma(cfg.target, cfg.draft, cfg.run, axis, replicates, seed, cfg.engine);
  } else if (kind == "prefill") {
    const auto axis = parse_list<double>(values);
    res = cspd::sweep_prefill(cfg.target, cfg.draft, cfg.run, axis, replicates, seed, cfg.engine);
  } else if (kind == "temperature") {
    const auto axis = parse_list<double>(values);
    res = cspd::sweep_temperature(cfg.target, cfg.draft, cfg.run, axis, replicates, seed, cfg.engine);
  } else {
    throw cspd::UsageError("unknown sweep kind \"" + kind + "\" (gamma|prefill|temperature|trials)");
  }
  text = "axis_value,mean_alpha,stderr_alpha,mean_trials,tokens_per_step\n";
  std::string curve = "axis_value,position,alpha\n";
  for (const auto& row : res.rows) {
    text += cspd::io::format_double(row.axis_value) + "," + opt_field(row.mean_alpha) + "," +
            opt_field(row.stderr_alpha) + "," + opt_field(row.mean_trials) + "," + opt_field(row.tokens_per_step) +
            "\n";
    for (std::size_t i = 0; i < row.per_position_alpha.size(); ++i) {
      curve += cspd::io::format_double(row.axis_value) + "," + std::to_string(i) + "," +
               opt_field(row.per_position_alpha[i]) + "\n";
    }
  }
  write_output(out_path, text);
  if (!curve_path.empty()) write_output(curve_path, curve);
  return 0;
}

int cmd_formula(double alpha, int gamma, double c) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f\n", cspd::theoretical_improvement(alpha, gamma, c));
  std::cout << buf;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous speculative decoding on toy denoising-chain models"};
  app.require_subcommand(1);

  RunOverrides gen_o, chk_o, swp_o;
  std::size_t gen_replicates = 1;
  std::string gen_out, gen_format = "json";
  auto* gen = app.add_subcommand("generate", "Run speculative generation and write per-position results");
  gen_o.attach(gen);
  gen->add_option("--replicates", gen_replicates, "Independent runs")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output path (default stdout)");
  gen->add_option("--format", gen_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  std::size_t chk_runs = 50000;
  double chk_significance = 0.01;
  auto* chk = app.add_subcommand("check-dist", "KS equivalence of speculative vs target-only outputs");
  chk_o.attach(chk);
  chk->add_option("--runs,--replicates", chk_runs, "Runs per side")->check(CLI::Range(1000, 100000000));
  chk->add_option("--significance", chk_significance, "Family-wise significance level");

  std::string swp_kind, swp_values, swp_out, swp_curve;
  std::size_t swp_replicates = 1000;
  auto* swp = app.add_subcommand("sweep", "Acceptance sweeps over gamma, pre-fill, temperature, or trials");
  swp->add_option("kind", swp_kind, "gamma | prefill | temperature | trials")->required();
  swp_o.attach(swp);
  swp->add_option("--values", swp_values, "Comma-separated axis values")->required();
  swp->add_option("--replicates", swp_replicates, "Replicates per axis value")->check(CLI::PositiveNumber);
  swp->add_option("--out", swp_out, "CSV output path (default stdout)");
  swp->add_option("--curve-out", swp_curve, "Optional per-position acceptance CSV");

  double f_alpha = 0.0, f_c = 0.0;
  int f_gamma = 1;
  auto* fml = app.add_subcommand("formula", "Expected walltime improvement for (alpha, gamma, c)");
  fml->add_option("alpha", f_alpha)->required();
  fml->add_option("gamma", f_gamma)->required();
  fml->add_option("c", f_c)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_generate(gen_o, gen_replicates, gen_out, gen_format);
    if (*chk) return cmd_check_dist(chk_o, chk_runs, chk_significance);
    if (*swp) return cmd_sweep(swp_kind, swp_o, swp_values, swp_replicates, swp_out, swp_curve);
    if (*fml) return cmd_formula(f_alpha, f_gamma, f_c);
  } catch (const cspd::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cspd::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
