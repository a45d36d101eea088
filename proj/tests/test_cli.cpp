/*
 * Copyright 2026 The tfsep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cli.hpp"

using namespace tfsep;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tfsep");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("TFSEP_SEED");
    dir_ = fs::temp_directory_path() /
           ("tfsep_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    unsetenv("TFSEP_SEED");
    fs::remove_all(dir_);
  }
  fs::path sub(const std::string& name) {
    fs::create_directories(dir_ / name);
    return dir_ / name;
  }
  fs::path dir_;
};

// A training run small enough for a unit test.
std::vector<std::string> tiny_train(const fs::path& ckpt) {
  return {"train", "--tau", "8", "--data", "toy", "--out", ckpt.string(), "--seed", "3",
          "--set", "toy.n_classes=3", "--set", "toy.samples_per_class=5", "--set", "toy.freq=32",
          "--set", "toy.time=16", "--set", "train.epochs=2", "--set", "train.warmup_epochs=1",
          "--set", "train.batch_size=4"};
}

}  // namespace

TEST_F(CliTest, SummaryTotalsMatchLibraryCounts) {
  const Result r = run_cli({"summary", "--tau", "40", "--format", "csv", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const SummaryTotals t = totals(parse_summary_csv(r.out));
  NetConfig cfg;
  cfg.tau = 40;
  TfSepNet<float> net(cfg);
  EXPECT_EQ(t.params, count_params(net));
  EXPECT_EQ(t.macs, count_macs(net));
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "summary");
  EXPECT_EQ(manifest.at("config").at("net").at("tau"), 40);
}

TEST_F(CliTest, SummaryAblationAndJsonFormat) {
  const Result r = run_cli({"summary", "--tau", "40", "--ablate", "no_adaresnorm", "--format", "json", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  NetConfig cfg;
  cfg.no_adaresnorm = true;
  TfSepNet<float> net(cfg);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("total").at("params"), count_params(net));
  EXPECT_EQ(run_cli({"summary", "--ablate", "no_pool", "--out", dir_.string()}).code, 1);
}

TEST_F(CliTest, UnknownFlagExitsOneNamingTheFlag) {
  const Result r = run_cli({"summary", "--taux", "40"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE((r.out + r.err).find("--taux"), std::string::npos);
}

TEST_F(CliTest, UnknownConfigKeyAndInvalidValuesExitOne) {
  Result r = run_cli({"summary", "--set", "net.taux=40", "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("net.taux"), std::string::npos);
  r = run_cli({"summary", "--tau", "6", "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("tau"), std::string::npos);

  const fs::path cfg = dir_ / "bad.json";
  std::ofstream(cfg) << R"({"train": {"epochs": 3, "learning_rate": 1}})";
  r = run_cli({"summary", "--config", cfg.string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train.learning_rate"), std::string::npos);
}

TEST_F(CliTest, HelpListsEveryConfigKeyForEverySubcommand) {
  for (const char* cmd : {"preprocess", "summary", "train", "eval", "erf", "gradcheck"}) {
    const Result r = run_cli({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    for (const auto& [key, value] : cli::config_keys()) EXPECT_NE(r.out.find(key), std::string::npos) << cmd << " " << key;
  }
}

TEST_F(CliTest, VersionFlag) {
  const Result r = run_cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(TFSEP_VERSION), std::string::npos);
}

TEST_F(CliTest, GradcheckTau8DoublePasses) {
  const Result r = run_cli({"gradcheck", "--tau", "8", "--precision", "double", "--out", dir_.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto report = nlohmann::json::parse(slurp(dir_ / "gradcheck.json"));
  EXPECT_LT(report.at("max_rel_error").get<double>(), 1e-5);
}

TEST_F(CliTest, TrainIsDeterministicForSameSeed) {
  const fs::path a = sub("a") / "model.ckpt", b = sub("b") / "model.ckpt";
  const Result ra = run_cli(tiny_train(a));
  const Result rb = run_cli(tiny_train(b));
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(slurp(a.parent_path() / "history.csv"), slurp(b.parent_path() / "history.csv"));
  EXPECT_EQ(slurp(a.parent_path() / "manifest.json"), slurp(b.parent_path() / "manifest.json"));
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(ra.out, rb.out);

  auto args = tiny_train(sub("c") / "model.ckpt");
  args[8] = "4";  // --seed value
  ASSERT_EQ(run_cli(args).code, 0);
  EXPECT_NE(slurp(dir_ / "c" / "model.ckpt"), slurp(a));
}

TEST_F(CliTest, EvalReadsConfigFromCheckpoint) {
  const fs::path ckpt = sub("run") / "model.ckpt";
  ASSERT_EQ(run_cli(tiny_train(ckpt)).code, 0);
  const Result r = run_cli({"eval", "--ckpt", ckpt.string(), "--data", "toy", "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto result = nlohmann::json::parse(slurp(dir_ / "eval.json"));
  const double acc = result.at("accuracy").get<double>();
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  setenv("TFSEP_SEED", "5", 1);
  ASSERT_EQ(run_cli({"summary", "--tau", "8", "--out", dir_.string()}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "manifest.json")).at("seed"), 5);
  ASSERT_EQ(run_cli({"summary", "--tau", "8", "--seed", "7", "--out", dir_.string()}).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "manifest.json")).at("seed"), 7);
}

TEST_F(CliTest, SummaryManifestIsByteIdenticalAcrossRuns) {
  const auto a = sub("a"), b = sub("b");
  ASSERT_EQ(run_cli({"summary", "--seed", "1", "--format", "csv", "--out", a.string()}).code, 0);
  ASSERT_EQ(run_cli({"summary", "--seed", "1", "--format", "csv", "--out", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST_F(CliTest, ErfWritesMapAndReport) {
  const Result r = run_cli({"erf", "--tau", "8", "--data", "noise", "--samples", "2", "--thresholds", "0.2,0.5",
                            "--out", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"map.pgm", "map.csv", "report.json", "manifest.json"}) EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  const auto report = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(report.at("ratios").size(), 2u);
  const ErfMap m = decode_map_csv(slurp(dir_ / "map.csv"));
  EXPECT_EQ(m.freq, 256u);
  EXPECT_EQ(m.time, 64u);
}

TEST_F(CliTest, PreprocessConvertsWavsAndRejectsEmptyInput) {
  const auto in = sub("wavs");
  std::vector<float> s(32000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(0.2 * std::sin(2 * std::numbers::pi * 440.0 * i / 32000.0));
  std::ofstream(in / "tone.wav", std::ios::binary) << encode_wav(s, 1, 32000);
  std::ofstream(in / "bad.wav", std::ios::binary) << "junk";
  const auto out = sub("out");
  const Result r = run_cli({"preprocess", "--in", in.string(), "--format", "csv", "--out", out.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("bad.wav"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(slurp(out / "manifest.json")).at("options").at("skipped"), 1);

  const auto empty = sub("empty");
  EXPECT_EQ(run_cli({"preprocess", "--in", empty.string(), "--out", out.string()}).code, 1);
}
