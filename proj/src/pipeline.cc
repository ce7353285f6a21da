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

#include "compsearch/pipeline.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>

#include "compsearch/common.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Hex(uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

void EnsureParent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

Corpus LoadWorkCorpus(const AppConfig& cfg) {
  const Paths paths{cfg.workdir};
  Check(std::filesystem::exists(paths.corpus()), ErrorCode::kNotFound,
        "no corpus at " + paths.corpus() + "; run build-corpus first");
  return LoadCorpus(paths.corpus());
}

EpochCallback EpochLogger(const std::string& stage) {
  return [stage](const EpochStats& e) {
    LogEvent(stage, "epoch",
             {{"epoch", e.epoch}, {"steps", e.steps}, {"loss", e.loss}, {"trp", e.trp},
              {"kd", e.kd}, {"cls", e.cls}, {"seconds", e.seconds}});
  };
}


LoadedTeacher LoadWorkTeacher(const AppConfig& cfg, TeacherInput input) {
  const std::string path = Paths{cfg.workdir}.teacher(input);
  LoadedTeacher t = LoadTeacher(path);
  Check(t.input == input, ErrorCode::kInvalidArgument,
        path + " holds a " + std::string(TeacherInputName(t.input)) + " teacher");
  return t;
}

// Student rankers over prebuilt index files.
RankerFactory IndexedRankers(const StudentModel& model, uint64_t checkpoint_hash,
                             const Paths& paths, const RankOptions& options) {
  return [&model, checkpoint_hash, paths, options](const CategoryData& queries,
                                                   const CategoryData& candidates) {
    struct State {
      ForegroundIndex index;
      std::unique_ptr<StudentRanker> ranker;
    };
    auto state = std::make_shared<State>();
    const std::string category(CategoryName(queries.manifest.category));
    state->index = LoadIndex(paths.index(model.mode(), category));
    CheckIndexMatches(state->index, checkpoint_hash, model.mode());
    Check(state->index.entries.size() == candidates.foregrounds.size(),
          ErrorCode::kInvalidArgument,
          "index for " + category + " does not cover the candidate catalog");
    state->ranker = std::make_unique<StudentRanker>(model, state->index);
    return QueryRanker([state, options](const ManifestEntry& entry, const Raster& background) {
      return state->ranker->Rank(background, entry.query_box, options);
    });
  };
}

}  // namespace

uint64_t ModelSeed(const AppConfig& cfg, uint64_t role, uint64_t variant) {
  return MixSeed(cfg.seed, 0x6d6f64656c + role, variant);
}

void LogEvent(const std::string& stage, const std::string& event, json fields) {
  static std::mutex mu;
  if (!fields.is_object()) fields = json::object();
  fields["stage"] = stage;
  fields["event"] = event;
  const std::string line = fields.dump();
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << line << '\n' << std::flush;
}

void WriteJsonFile(const std::string& path, const json& j) {
  EnsureParent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Check(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
  Check(out.good(), ErrorCode::kIo, "failed writing " + path);
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  Check(in.good(), ErrorCode::kNotFound, "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  Check(!j.is_discarded(), ErrorCode::kCorrupt, path + " is not valid JSON");
  return j;
}

std::string FileHash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Check(in.good(), ErrorCode::kNotFound, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Hex(Fnv1a(bytes));
}

void BuildCorpusStage(const AppConfig& cfg) {
  const auto start = Clock::now();
  const Paths paths{cfg.workdir};
  const Corpus corpus = BuildCorpus(cfg.corpus);
  SaveCorpus(corpus, paths.corpus());
  LogEvent("build-corpus", "done",
           {{"path", paths.corpus()}, {"categories", corpus.train.size()},
            {"seconds", Seconds(start)}});
}

void PretrainFilterStage(const AppConfig& cfg) {
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  TrainReport report;
  const TeacherModel filter = PretrainFilterClassifier(corpus, cfg.filter, &report);
  SaveTeacher(filter, TeacherInput::kCroppedComposite, paths.filter());
  report.checkpoint = paths.filter();
  WriteJsonFile(paths.report("pretrain-filter"), report.ToJson());
  LogEvent("pretrain-filter", "done",
           {{"checkpoint", paths.filter()}, {"seconds", report.wall_seconds}});
}

void MineStage(const AppConfig& cfg) {
  const auto start = Clock::now();
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  const LoadedTeacher filter = LoadTeacher(paths.filter());
  std::unique_ptr<LoadedTeacher> teacher;
  if (cfg.mining.positives == PositiveSource::kTeacherTopK) {
    teacher = std::make_unique<LoadedTeacher>(
        LoadWorkTeacher(cfg, TeacherInput::kCroppedComposite));
  }
  const std::vector<TrainTriplet> triplets =
      MineTriplets(corpus, filter.model, teacher ? &teacher->model : nullptr, cfg.mining);
  SaveTriplets(triplets, paths.triplets());
  LogEvent("mine", "done",
           {{"path", paths.triplets()}, {"triplets", triplets.size()},
            {"seconds", Seconds(start)}});
}

void TrainTeacherStage(const AppConfig& cfg, TeacherInput input) {
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  const TrainingSet set(corpus, LoadTriplets(paths.triplets()));
  TeacherModel model(cfg.geometry, ModelSeed(cfg, 1, static_cast<uint64_t>(input)));
  const std::string stage = "train-teacher";
  TrainReport report = TrainTeacher(model, input, set, cfg.teacher, EpochLogger(stage));
  SaveTeacher(model, input, paths.teacher(input));
  report.checkpoint = paths.teacher(input);
  WriteJsonFile(paths.report(stage + "-" + std::string(TeacherInputName(input))),
                report.ToJson());
  LogEvent(stage, "done",
           {{"checkpoint", report.checkpoint}, {"seconds", report.wall_seconds}});
}

void TrainStudentStage(const AppConfig& cfg, InteractionMode mode) {
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  const TrainingSet set(corpus, LoadTriplets(paths.triplets()));
  const LoadedTeacher teacher = LoadWorkTeacher(cfg, TeacherInput::kCroppedComposite);
  StudentModel model(cfg.geometry, mode, ModelSeed(cfg, 2, ModeRow(mode)));
  const std::string stage = "train-student";
  TrainReport report =
      TrainStudent(model, teacher.model, teacher.input, set, cfg.student, EpochLogger(stage));
  SaveStudent(model, paths.student(mode));
  report.checkpoint = paths.student(mode);
  WriteJsonFile(paths.report(stage + "-" + std::string(ModeName(mode))), report.ToJson());
  LogEvent(stage, "done",
           {{"mode", ModeName(mode)}, {"checkpoint", report.checkpoint},
            {"seconds", report.wall_seconds}});
}

void BuildIndexStage(const AppConfig& cfg, InteractionMode mode) {
  const auto start = Clock::now();
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  const LoadedStudent student = LoadStudent(paths.student(mode));
  Check(student.model.mode() == mode, ErrorCode::kInvalidArgument,
        paths.student(mode) + " holds a " + std::string(ModeName(student.model.mode())) +
            " student");
  for (const CategoryData& d : corpus.test_s) {
    const std::string category(CategoryName(d.manifest.category));
    const ForegroundIndex index = BuildIndex(d.foregrounds, student.model, category, student.hash);
    const std::string path = paths.index(mode, category);
    EnsureParent(path);
    SaveIndex(index, path);
    LogEvent("build-index", "category",
             {{"category", category}, {"entries", index.entries.size()}, {"path", path}});
  }
  LogEvent("build-index", "done", {{"mode", ModeName(mode)}, {"seconds", Seconds(start)}});
}

std::string_view EvalModelName(EvalModel model) {
  switch (model) {
    case EvalModel::kStudent: return "student";
    case EvalModel::kTeacher: return "teacher";
    case EvalModel::kTeacherWhole: return "teacher_whole";
    case EvalModel::kRandom: return "random";
    case EvalModel::kOracle: return "oracle";
  }
  return "unknown";
}

EvalModel ParseEvalModel(std::string_view name) {
  for (EvalModel m : {EvalModel::kStudent, EvalModel::kTeacher, EvalModel::kTeacherWhole,
                      EvalModel::kRandom, EvalModel::kOracle}) {
    if (EvalModelName(m) == name) return m;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown model '" + std::string(name) +
                                        "'; expected student, teacher, teacher_whole, "
                                        "random or oracle");
}

MetricReport EvalStage(const AppConfig& cfg, Split split, EvalModel model, InteractionMode mode) {
  const auto start = Clock::now();
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  EvalOptions options;
  options.workers = cfg.workers;
  std::string key(EvalModelName(model));
  json provenance = {{"model", key}, {"ar_threshold", cfg.rank.ar_threshold}};
  MetricReport report;
  switch (model) {
    case EvalModel::kStudent: {
      const LoadedStudent student = LoadStudent(paths.student(mode));
      key += "_" + std::string(ModeName(mode));
      provenance["mode"] = ModeName(mode);
      provenance["checkpoint"] = Hex(student.hash);
      report = Evaluate(corpus, split,
                        IndexedRankers(student.model, student.hash, paths, cfg.rank), options)
                   .report;
      break;
    }
    case EvalModel::kTeacher:
    case EvalModel::kTeacherWhole: {
      const TeacherInput input = model == EvalModel::kTeacher ? TeacherInput::kCroppedComposite
                                                              : TeacherInput::kWholeComposite;
      const LoadedTeacher teacher = LoadWorkTeacher(cfg, input);
      provenance["checkpoint"] = Hex(teacher.hash);
      report = Evaluate(corpus, split, TeacherRankers(teacher.model, input, cfg.rank), options)
                   .report;
      break;
    }
    case EvalModel::kRandom: {
      // Chance level over the whole candidate list.
      RankOptions unfiltered = cfg.rank;
      unfiltered.ar_threshold = 0;
      provenance["ar_threshold"] = 0;
      report = Evaluate(corpus, split, RandomRankers(cfg.seed, unfiltered), options).report;
      break;
    }
    case EvalModel::kOracle:
      report = Evaluate(corpus, split, OracleRankers(cfg.rank), options).report;
      break;
  }
  report.config = provenance;
  json metrics = json::object();
  if (std::filesystem::exists(paths.metrics())) metrics = ReadJsonFile(paths.metrics());
  metrics[std::string(SplitName(split))][key] = report.ToJson();
  WriteJsonFile(paths.metrics(), metrics);
  LogEvent("eval", "done",
           {{"split", SplitName(split)}, {"model", key}, {"mean", report.mean},
            {"seconds", Seconds(start)}});
  return report;
}

void AblationStage(const AppConfig& cfg) {
  const Paths paths{cfg.workdir};
  const Corpus corpus = LoadWorkCorpus(cfg);
  const TrainingSet set(corpus, LoadTriplets(paths.triplets()));
  const LoadedTeacher teacher = LoadWorkTeacher(cfg, TeacherInput::kCroppedComposite);
  std::unique_ptr<LoadedTeacher> whole;
  if (std::filesystem::exists(paths.teacher(TeacherInput::kWholeComposite))) {
    whole = std::make_unique<LoadedTeacher>(LoadWorkTeacher(cfg, TeacherInput::kWholeComposite));
  }
  AblationConfig ac;
  ac.modes = cfg.ablation_modes;
  ac.train = cfg.student;
  ac.rank = cfg.rank;
  ac.eval.workers = cfg.workers;
  ac.model_seed = ModelSeed(cfg, 3, 0);
  const std::vector<AblationRow> rows =
      RunAblation(corpus, set, teacher.model, whole ? &whole->model : nullptr, cfg.geometry, ac,
                  [](const AblationRow& r) {
                    LogEvent("ablation", "row",
                             {{"row", r.row}, {"name", r.name}, {"R@1", r.s.Get("R@1")},
                              {"mAP", r.r.Get("mAP")}, {"train_seconds", r.train_seconds}});
                  });
  WriteJsonFile(paths.ablation(), ToJson(rows));
  std::cout << RenderAblation(rows);
}

void BenchStage(const AppConfig& cfg) {
  const Paths paths{cfg.workdir};
  const LoadedTeacher teacher = LoadWorkTeacher(cfg, TeacherInput::kCroppedComposite);
  const LoadedStudent student = LoadStudent(paths.student(cfg.mode));
  // Timing does not depend on weights, so an untrained encoder stands in
  // when no similarity student was trained.
  std::unique_ptr<StudentModel> encoder;
  const std::string encoder_path = paths.student(InteractionMode::kSimGlobal);
  if (std::filesystem::exists(encoder_path)) {
    encoder = std::make_unique<StudentModel>(std::move(LoadStudent(encoder_path).model));
  } else {
    encoder = std::make_unique<StudentModel>(cfg.geometry, InteractionMode::kSimGlobal,
                                             ModelSeed(cfg, 2, 1));
  }
  const std::vector<BenchRow> rows = RunBench(
      {&teacher.model, teacher.input, encoder.get(), &student.model}, cfg.bench,
      cfg.corpus.scene);
  WriteJsonFile(paths.bench(), ToJson(rows));
  std::printf("%-10s %8s %12s %10s\n", "model", "N", "ms/query", "params");
  for (const BenchRow& r : rows) {
    LogEvent("bench", "row",
             {{"model", r.model}, {"N", r.n}, {"mean_ms", r.mean_ms}, {"params", r.params}});
    std::printf("%-10s %8d %12.3f %10lld\n", r.model.c_str(), r.n, r.mean_ms,
                static_cast<long long>(r.params));
  }
}

void PipelineStage(const AppConfig& cfg) {
  BuildCorpusStage(cfg);
  PretrainFilterStage(cfg);
  MineStage(cfg);
  TrainTeacherStage(cfg, TeacherInput::kCroppedComposite);
  TrainStudentStage(cfg, cfg.mode);
  BuildIndexStage(cfg, cfg.mode);
  for (Split split : {Split::kTestS, Split::kTestR}) {
    for (EvalModel m : {EvalModel::kStudent, EvalModel::kTeacher, EvalModel::kRandom}) {
      EvalStage(cfg, split, m, cfg.mode);
    }
  }
  LogEvent("pipeline", "done",
           {{"metrics", Paths{cfg.workdir}.metrics()},
            {"hash", FileHash(Paths{cfg.workdir}.metrics())}});
}

}  // namespace compsearch
