// Copyright 2026 The compsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the command-line binary end to end on the tiny configuration.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout followed by stderr
};

RunResult RunCli(const std::string& args) {
  const std::string command = std::string(COMPSEARCH_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  char buffer[4096];
  size_t n;
  while ((n = fread(buffer, 1, sizeof(buffer), pipe)) > 0) r.output.append(buffer, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Last JSON line of the combined output.
json LastJsonLine(const std::string& output) {
  std::stringstream in(output);
  std::string line;
  json last;
  while (std::getline(in, line)) {
    json j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object()) last = j;
  }
  return last;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("compsearch_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Flags(const std::string& workdir) const {
    return std::string("-c ") + COMPSEARCH_TINY_CONFIG + " --workdir " + (dir_ / workdir).string();
  }

  fs::path dir_;
};

TEST_F(CliTest, PipelineIsReproducibleAndSeedSensitive) {
  ASSERT_EQ(RunCli("pipeline " + Flags("a")).exit_code, 0);
  ASSERT_EQ(RunCli("pipeline " + Flags("b")).exit_code, 0);
  ASSERT_EQ(RunCli("pipeline " + Flags("c") + " --seed 2").exit_code, 0);
  const std::string a = ReadFile(dir_ / "a" / "metrics.json");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, ReadFile(dir_ / "b" / "metrics.json"));
  EXPECT_NE(a, ReadFile(dir_ / "c" / "metrics.json"));
  const json metrics = json::parse(a);
  EXPECT_TRUE(metrics["test_s"].contains("student_map_concat_local"));
  EXPECT_TRUE(metrics["test_r"].contains("teacher"));
}

TEST_F(CliTest, StagesRunOneAtATime) {
  const std::string flags = Flags("w");
  for (const std::string stage :
       {"build-corpus", "pretrain-filter", "mine", "train-teacher", "train-student",
        "build-index"}) {
    const RunResult r = RunCli(stage + " " + flags);
    ASSERT_EQ(r.exit_code, 0) << stage << "\n" << r.output;
  }
  const RunResult eval = RunCli("eval --split r " + flags);
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_NE(eval.output.find("mAP@20"), std::string::npos);
  const RunResult teacher = RunCli("eval --split s --model teacher " + flags);
  ASSERT_EQ(teacher.exit_code, 0) << teacher.output;
  EXPECT_NE(teacher.output.find("R@1"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "w" / "index" / "map_concat_local" / "house.idx"));
}

TEST_F(CliTest, FailuresExitNonzeroWithStructuredError) {
  ASSERT_EQ(RunCli("build-corpus " + Flags("w")).exit_code, 0);
  const RunResult missing = RunCli("eval --split s " + Flags("w"));
  EXPECT_NE(missing.exit_code, 0);
  const json error = LastJsonLine(missing.output);
  EXPECT_EQ(error["level"], "error");
  EXPECT_EQ(error["code"], "not_found");
  EXPECT_NE(error["message"].get<std::string>().find("student_map_concat_local"),
            std::string::npos);

  const RunResult bad_value = RunCli("train-teacher " + Flags("w") + " --set teacher.epochs=0");
  EXPECT_NE(bad_value.exit_code, 0);
  EXPECT_EQ(LastJsonLine(bad_value.output)["code"], "invalid_argument");

  EXPECT_NE(RunCli("eval --split q " + Flags("w")).exit_code, 0);
  EXPECT_NE(RunCli("no-such-command").exit_code, 0);
  EXPECT_NE(RunCli("build-corpus -c /nonexistent.json").exit_code, 0);
}

TEST_F(CliTest, PrintConfigAppliesOverrides) {
  const RunResult r = RunCli("print-config " + Flags("w") + " --set student.epochs=9 --seed 11");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const json c = json::parse(r.output);
  EXPECT_EQ(c["student"]["epochs"], 9);
  EXPECT_EQ(c["seed"], 11);
  EXPECT_EQ(c["corpus"]["seed"], 11);
  EXPECT_EQ(c["corpus"]["train_per_category"], 8);
}

}  // namespace
