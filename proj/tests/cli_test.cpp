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

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cspd/config.hpp"
#include "process.hpp"

namespace cspd {
namespace {

using nlohmann::json;
using testing::read_file;
using testing::run_command;

std::string cli() { return CSPD_CLI_PATH; }
std::string config(const std::string& name) { return std::string(CSPD_CONFIG_DIR) + "/" + name; }

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "cspd_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

TEST(Cli, GenerateIsDeterministic) {
  const std::string cmd = cli() + " generate --config " + config("standard_pair.json") + " --seed 7 --replicates 3";
  const auto a = run_command(cmd), b = run_command(cmd);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
  const json doc = json::parse(a.out);
  EXPECT_EQ(doc["replicate_count"], 3);
  EXPECT_EQ(doc["seed"], 7);
  EXPECT_EQ(doc["replicates"].size(), 3u);
  EXPECT_EQ(doc["replicates"][0]["positions"].size(), 32u);
}

TEST(Cli, GenerateCsv) {
  const auto r = run_command(cli() + " generate --config " + config("standard_pair.json") +
                             " --replicates 2 --len 10 --format csv");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), io::kCsvHeader);
  EXPECT_EQ(count_lines(r.out), 1u + 2u * 10u);
}

TEST(Cli, StepMismatchIsUsageError) {
  EXPECT_EQ(run_command(cli() + " generate --config " + config("standard_pair.json") + " --steps 9").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " generate --config " + config("standard_pair.json") + " --dim 3").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " generate --config " + config("standard_pair.json") + " --steps 8").exit_code, 0);
}

TEST(Cli, BadInputsAreUsageErrors) {
  EXPECT_EQ(run_command(cli() + " generate --config /nonexistent.json").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " generate").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " generate --config " + config("standard_pair.json") + " --rho 1.5").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " bogus").exit_code, 2);
}

TEST(Cli, FullPrefill) {
  const auto r = run_command(cli() + " generate --config " + config("standard_pair.json") + " --rho 1");
  ASSERT_EQ(r.exit_code, 0);
  const json doc = json::parse(r.out);
  for (const auto& p : doc["replicates"][0]["positions"]) EXPECT_EQ(p["origin"], "prefilled");
  EXPECT_TRUE(doc["stats"]["overall_alpha"].is_null());
}

TEST(Cli, ResultsReproduceAsConfig) {
  const auto out = scratch("results.json");
  const std::string base = " --config " + config("standard_pair.json") + " --seed 11 --gamma 3 --len 12";
  const auto first = run_command(cli() + " generate" + base + " --out " + out.string());
  ASSERT_EQ(first.exit_code, 0);
  const auto again = run_command(cli() + " generate --config " + out.string());
  ASSERT_EQ(again.exit_code, 0);
  EXPECT_EQ(again.out, read_file(out.string()));
}

TEST(Cli, CheckDistIdenticalPairPasses) {
  const auto r = run_command(cli() + " check-dist --config " + config("identical_pair.json") + " --runs 2000");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  EXPECT_EQ(run_command(cli() + " check-dist --config " + config("identical_pair.json") + " --runs 10").exit_code,
            2);
}

TEST(Cli, SweepRows) {
  const auto curve = scratch("curve.csv");
  const auto r = run_command(cli() + " sweep gamma --config " + config("standard_pair.json") +
                             " --values 2,4,8 --replicates 20 --curve-out " + curve.string());
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(count_lines(r.out), 4u);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "axis_value,mean_alpha,stderr_alpha,mean_trials,tokens_per_step");
  EXPECT_EQ(count_lines(read_file(curve.string())), 1u + 3u * 32u);

  const auto t = run_command(cli() + " sweep trials --config " + config("standard_pair.json") +
                             " --values 4 --replicates 20");
  ASSERT_EQ(t.exit_code, 0);
  EXPECT_EQ(count_lines(t.out), 2u);

  const auto p = run_command(cli() + " sweep prefill --config " + config("prefix_divergent.json") +
                             " --values 0,0.05,1 --replicates 10");
  ASSERT_EQ(p.exit_code, 0);
  EXPECT_EQ(count_lines(p.out), 4u);
  // Full pre-fill leaves alpha empty.
  EXPECT_NE(p.out.find("\n1,,"), std::string::npos) << p.out;
}

TEST(Cli, SweepUnknownKind) {
  EXPECT_EQ(run_command(cli() + " sweep depth --config " + config("standard_pair.json") + " --values 1").exit_code,
            2);
}

TEST(Cli, Formula) {
  auto r = run_command(cli() + " formula 0.5 1 0");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "1.500000\n");
  r = run_command(cli() + " formula 0.19 32 0.38");
  EXPECT_EQ(r.out, "0.093812\n");
  EXPECT_EQ(run_command(cli() + " formula 1.0 4 0.1").exit_code, 2);
  EXPECT_EQ(run_command(cli() + " formula 1.2 4 0.1").exit_code, 2);
}

TEST(Cli, NumericalDivergenceExitsThree) {
  json doc = io::config_to_json(io::load_config(config("standard_pair.json")));
  for (auto& step : doc["target"]["denoiser"]["steps"]) step["A"] = json::array({1e300});
  const auto path = scratch("diverge.json");
  {
    std::ofstream(path) << doc.dump();
  }
  EXPECT_EQ(run_command(cli() + " generate --config " + path.string()).exit_code, 3);
}

}  // namespace
}  // namespace cspd
