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

// Command-line entry point for every pipeline stage and the service.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "compsearch/common.h"
#include "compsearch/config.h"
#include "compsearch/pipeline.h"
#include "compsearch/service.h"
#include "json.hpp"

namespace {

using compsearch::AppConfig;

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string workdir;
  int64_t seed = -1;
  int workers = 0;

  AppConfig Load() const {
    std::vector<std::string> all = overrides;
    if (!workdir.empty()) all.push_back("workdir=\"" + workdir + "\"");
    if (seed >= 0) all.push_back("seed=" + std::to_string(seed));
    if (workers > 0) all.push_back("workers=" + std::to_string(workers));
    return compsearch::LoadAppConfig(config, all);
  }
};

void AddCommon(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config, "JSON config file");
  cmd->add_option("--set", flags.overrides, "Override a config key: key.path=value");
  cmd->add_option("--workdir", flags.workdir, "Artifact directory");
  cmd->add_option("--seed", flags.seed, "Top-level seed");
  cmd->add_option("--workers", flags.workers, "Worker threads");
}

int ReportError(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"level", "error"}, {"code", code}, {"message", message}}.dump()
            << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foreground object search by distilling composite-image features"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string split = "s";
  std::string model = "student";
  std::string mode;
  std::string input = "cropped";

  auto mode_of = [&](const AppConfig& cfg) {
    return mode.empty() ? cfg.mode : compsearch::ParseMode(mode);
  };

  struct Command {
    CLI::App* cmd;
    std::function<void(const AppConfig&)> run;
  };
  std::vector<Command> commands;
  auto add = [&](const std::string& name, const std::string& help,
                 std::function<void(const AppConfig&)> run) {
    CLI::App* cmd = app.add_subcommand(name, help);
    AddCommon(cmd, flags);
    commands.push_back({cmd, std::move(run)});
    return cmd;
  };

  add("build-corpus", "Generate the synthetic corpus", compsearch::BuildCorpusStage);
  add("pretrain-filter", "Train the composite classifier used for mining",
      compsearch::PretrainFilterStage);
  add("mine", "Mine training triplets", compsearch::MineStage);
  add("train-teacher", "Train the composite discriminator",
      [&](const AppConfig& cfg) {
        compsearch::TrainTeacherStage(cfg, compsearch::ParseTeacherInput(input));
      })
      ->add_option("--input", input, "cropped or whole");
  add("train-student", "Distill a student", [&](const AppConfig& cfg) {
    compsearch::TrainStudentStage(cfg, mode_of(cfg));
  })->add_option("--mode", mode, "Interaction mode");
  add("build-index", "Precompute foreground features", [&](const AppConfig& cfg) {
    compsearch::BuildIndexStage(cfg, mode_of(cfg));
  })->add_option("--mode", mode, "Interaction mode");
  CLI::App* eval = add("eval", "Evaluate on a test split", [&](const AppConfig& cfg) {
    const compsearch::Split s =
        split == "s" ? compsearch::Split::kTestS : compsearch::Split::kTestR;
    const compsearch::MetricReport report =
        compsearch::EvalStage(cfg, s, compsearch::ParseEvalModel(model), mode_of(cfg));
    std::cout << compsearch::RenderTable(report, std::string(compsearch::SplitName(s)) + " " +
                                                     model);
  });
  eval->add_option("--split", split, "s or r")
      ->required()
      ->check(CLI::IsMember({"s", "r"}));
  eval->add_option("--model", model, "student, teacher, teacher_whole, random or oracle");
  eval->add_option("--mode", mode, "Student interaction mode");
  add("ablation", "Train and evaluate every interaction mode", compsearch::AblationStage);
  add("bench", "Time retrieval against catalog size", compsearch::BenchStage);
  add("pipeline", "Run every stage from corpus to metrics", compsearch::PipelineStage);
  add("print-config", "Print the resolved configuration", [](const AppConfig& cfg) {
    std::cout << compsearch::ToJson(cfg).dump(2) << '\n';
  });
  add("serve", "Start the HTTP retrieval service", [](const AppConfig& cfg) {
    const auto service = compsearch::SearchService::Load(cfg);
    compsearch::Serve(*service, cfg.serve);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    for (const Command& c : commands) {
      if (c.cmd->parsed()) c.run(flags.Load());
    }
  } catch (const compsearch::Error& e) {
    return ReportError(std::string(compsearch::ErrorCodeName(e.code())), e.what());
  } catch (const std::exception& e) {
    return ReportError("internal", e.what());
  }
  return 0;
}
