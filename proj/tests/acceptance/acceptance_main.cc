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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "compsearch/config.h"
#include "compsearch/corpus.h"
#include "compsearch/evaluation.h"
#include "compsearch/imaging.h"
#include "compsearch/models.h"
#include "compsearch/ops.h"
#include "compsearch/pipeline.h"
#include "compsearch/retrieval.h"
#include "compsearch/rng.h"
#include "compsearch/sampling.h"
#include "compsearch/training.h"
#include "oracles.h"

namespace compsearch {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr int kMetricInstances = 1000;
constexpr double kMetricBudgetSeconds = 10;
constexpr int kGradientSeeds = 20;
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientBudgetSeconds = 120;
constexpr double kCropRatioTolerance = 1e-9;
constexpr double kRoiTolerance = 1e-9;
constexpr double kImageTolerance = 1e-6;
constexpr double kOrderingGap = 3;
constexpr double kOrderingBudgetCpuSeconds = 15 * 60;
constexpr double kKdDropFraction = 0.5;
constexpr double kKdAblationGap = 3;
constexpr double kTeacherRatioLow = 8;
constexpr double kTeacherRatioHigh = 12;
constexpr double kStudentRatioMax = 3;
constexpr double kSpeedupMin = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, ...) {
  char buffer[1024];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buffer, sizeof(buffer), fmt, args);
  va_end(args);
  return buffer;
}

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double CpuSeconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

Outcome MetricOracles() {
  const auto start = Clock::now();
  const testing::MetricSuiteResult r = testing::RunMetricSuite(kMetricInstances, 2026);
  const double seconds = Since(start);
  Outcome out;
  out.pass = r.instances == kMetricInstances && r.mismatches == 0 &&
             seconds < kMetricBudgetSeconds;
  out.detail = Format("%d instances, %d comparisons, %d mismatches, %.2f s (limit %.0f s)",
                      r.instances, r.comparisons, r.mismatches, seconds, kMetricBudgetSeconds);
  if (r.mismatches > 0) out.detail += "; first: " + r.first_mismatch;
  return out;
}

Outcome GradientSuite() {
  const auto start = Clock::now();
  const std::vector<testing::GradSuiteRow> rows =
      testing::RunGradientSuite(kGradientSeeds, 2026);
  const double seconds = Since(start);
  Outcome out;
  out.pass = !rows.empty() && seconds < kGradientBudgetSeconds;
  const testing::GradSuiteRow* worst = nullptr;
  std::vector<std::string> failing;
  for (const testing::GradSuiteRow& r : rows) {
    if (!worst || r.max_rel_error > worst->max_rel_error) worst = &r;
    if (!(r.max_rel_error < kGradientTolerance) || r.seeds < kGradientSeeds) {
      out.pass = false;
      failing.push_back(r.name);
    }
  }
  out.detail = Format("%zu cases x %d seeds, worst %s rel err %.2e (limit %.0e), %.1f s (limit %.0f s)",
                      rows.size(), kGradientSeeds, worst ? worst->name.c_str() : "-",
                      worst ? worst->max_rel_error : 0.0, kGradientTolerance, seconds,
                      kGradientBudgetSeconds);
  for (const std::string& f : failing) out.detail += "; failing " + f;
  return out;
}

Raster RandomRaster(int w, int h, Rng& rng) {
  Raster r(w, h);
  for (float& v : r.data()) v = static_cast<float>(rng.Uniform());
  return r;
}

Box RandomBox(Rng& rng, double lo, double hi) {
  const double w = rng.Uniform(lo, hi), h = rng.Uniform(lo, hi);
  return {rng.Uniform(0, 1 - w), rng.Uniform(0, 1 - h), w, h};
}

Outcome Geometry() {
  Rng rng(2026);
  double crop_err = 0;
  int unclamped = 0;
  for (int i = 0; i < 2000; ++i) {
    const Box q = RandomBox(rng, 0.05, 0.6);
    const int w = i % 2 ? 64 : 96;
    const imaging::CropBox b = imaging::ComputeCropBox(q, w, 64);
    if (b.clamped) continue;
    ++unclamped;
    crop_err = std::max(crop_err, std::abs(q.Area() / b.box.Area() - 0.5));
  }

  double identity_err = 0, constant_err = 0;
  nn::Graph<double> g(false);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + rng.UniformInt(7), w = 2 + rng.UniformInt(7), c = 1 + rng.UniformInt(4);
    nn::Tensor<double> x({1, h, w, c});
    for (double& v : x.storage()) v = rng.Uniform(-1, 1);
    const auto& id = g.value(nn::Resample(g, g.Constant(x), {RoiAlignPlan(h, w, {0, 0, 1, 1}, h, w)}));
    for (size_t i = 0; i < x.size(); ++i) identity_err = std::max(identity_err, std::abs(id[i] - x[i]));
    const double k = rng.Uniform(-2, 2);
    const auto& cst = g.value(nn::Resample(g, g.Constant(nn::Tensor<double>({1, h, w, c}, k)),
                                           {RoiAlignPlan(h, w, RandomBox(rng, 0.1, 1), 1 + rng.UniformInt(6),
                                                         1 + rng.UniformInt(6))}));
    for (double v : cst.values()) constant_err = std::max(constant_err, std::abs(v - k));
  }

  double resize_err = 0, composite_err = 0;
  for (int i = 0; i < 200; ++i) {
    const Raster img = RandomRaster(4 + rng.UniformInt(20), 4 + rng.UniformInt(20), rng);
    const Box b = RandomBox(rng, 0.1, 1);
    const int ow = 1 + rng.UniformInt(16), oh = 1 + rng.UniformInt(16);
    resize_err = std::max(resize_err, testing::MaxAbsDiff(imaging::CropAndResize(img, b, ow, oh),
                                                          testing::OracleCropAndResize(img, b, ow, oh)));

    const int side = 8 + rng.UniformInt(24);
    Raster fg(side, side, 1.0f);
    const int x0 = rng.UniformInt(side / 2), y0 = rng.UniformInt(side / 2);
    const int x1 = x0 + 1 + rng.UniformInt(side / 2), y1 = y0 + 1 + rng.UniformInt(side / 2);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        for (int ch = 0; ch < 3; ++ch) fg.at(x, y, ch) = static_cast<float>(rng.Uniform(0, 0.9));
    const Raster bg = RandomRaster(32 + rng.UniformInt(33), 32 + rng.UniformInt(33), rng);
    const Box q = RandomBox(rng, 0.15, 0.9);
    composite_err = std::max(composite_err, testing::MaxAbsDiff(imaging::Composite(bg, q, fg),
                                                                testing::OracleComposite(bg, q, fg)));
  }

  Outcome out;
  out.pass = unclamped > 1000 && crop_err <= kCropRatioTolerance &&
             identity_err <= kRoiTolerance && constant_err <= kRoiTolerance &&
             resize_err <= kImageTolerance && composite_err <= kImageTolerance;
  out.detail = Format(
      "crop ratio err %.1e over %d boxes (limit %.0e); roi identity %.1e, constant %.1e (limit %.0e); "
      "crop_and_resize %.1e, composite %.1e vs dense oracle (limit %.0e)",
      crop_err, unclamped, kCropRatioTolerance, identity_err, constant_err, kRoiTolerance, resize_err,
      composite_err, kImageTolerance);
  return out;
}

// Models and numbers shared by the training criteria.
struct DeskRun {
  AppConfig cfg;
  std::unique_ptr<Corpus> corpus;
  std::unique_ptr<TrainingSet> set;
  std::unique_ptr<TeacherModel> teacher;
  std::unique_ptr<StudentModel> row8;
  std::unique_ptr<StudentModel> row1;
  TrainReport row8_report;
  double teacher_r1 = 0, row8_r1 = 0, row1_r1 = 0, random_r1 = 0;
  double cpu_seconds = 0, wall_seconds = 0;
};

double TestSRecallAt1(const Corpus& corpus, const RankerFactory& factory, int workers) {
  EvalOptions options;
  options.workers = workers;
  return Evaluate(corpus, Split::kTestS, factory, options).report.Get("R@1");
}

std::string EpochKd(const TrainReport& r) {
  std::string s;
  for (const EpochStats& e : r.epochs) s += (s.empty() ? "" : " ") + Format("%.3f", e.kd);
  return s;
}

std::unique_ptr<DeskRun> TrainDeskRun(const AppConfig& cfg) {
  auto run = std::make_unique<DeskRun>();
  run->cfg = cfg;
  const double cpu = CpuSeconds();
  const auto start = Clock::now();
  auto stage = [&](const char* name) {
    std::fprintf(stderr, "desk run: %s done at %.0f s\n", name, Since(start));
  };
  run->corpus = std::make_unique<Corpus>(BuildCorpus(cfg.corpus));
  stage("corpus");
  const TeacherModel filter = PretrainFilterClassifier(*run->corpus, cfg.filter);
  stage("filter");
  run->set = std::make_unique<TrainingSet>(*run->corpus,
                                           MineTriplets(*run->corpus, filter, &filter, cfg.mining));
  stage("mining");
  run->teacher = std::make_unique<TeacherModel>(
      cfg.geometry, ModelSeed(cfg, 1, static_cast<uint64_t>(TeacherInput::kCroppedComposite)));
  TrainTeacher(*run->teacher, TeacherInput::kCroppedComposite, *run->set, cfg.teacher);
  stage("teacher");
  run->row8 = std::make_unique<StudentModel>(cfg.geometry, InteractionMode::kMapConcatLocal,
                                             ModelSeed(cfg, 2, 8));
  run->row8_report = TrainStudent(*run->row8, *run->teacher, TeacherInput::kCroppedComposite,
                                   *run->set, cfg.student);
  stage("row-8 student");
  run->row1 = std::make_unique<StudentModel>(cfg.geometry, InteractionMode::kSimGlobal,
                                             ModelSeed(cfg, 2, 1));
  TrainStudent(*run->row1, *run->teacher, TeacherInput::kCroppedComposite, *run->set, cfg.student);
  stage("row-1 student");

  RankOptions unfiltered = cfg.rank;
  unfiltered.ar_threshold = 0;
  run->teacher_r1 = TestSRecallAt1(
      *run->corpus, TeacherRankers(*run->teacher, TeacherInput::kCroppedComposite, cfg.rank),
      cfg.workers);
  run->row8_r1 = TestSRecallAt1(*run->corpus, StudentRankers(*run->row8, cfg.rank), cfg.workers);
  run->row1_r1 = TestSRecallAt1(*run->corpus, StudentRankers(*run->row1, cfg.rank), cfg.workers);
  run->random_r1 =
      TestSRecallAt1(*run->corpus, RandomRankers(MixSeed(cfg.seed, 0x72), unfiltered), cfg.workers);
  stage("evaluation");
  run->cpu_seconds = CpuSeconds() - cpu;
  run->wall_seconds = Since(start);
  return run;
}

Outcome Ordering(const DeskRun& run) {
  const double t = run.teacher_r1, s8 = run.row8_r1, s1 = run.row1_r1, r = run.random_r1;
  Outcome out;
  out.pass = t - s8 > kOrderingGap && s8 - s1 > kOrderingGap && s1 - r > kOrderingGap &&
             run.cpu_seconds < kOrderingBudgetCpuSeconds;
  out.detail = Format(
      "R@1 teacher %.2f > row-8 %.2f > row-1 %.2f > random %.2f; gaps %.2f, %.2f, %.2f (need > %.0f); "
      "cpu %.0f s (limit %.0f s), wall %.0f s",
      t, s8, s1, r, t - s8, s8 - s1, s1 - r, kOrderingGap, run.cpu_seconds,
      kOrderingBudgetCpuSeconds, run.wall_seconds);
  return out;
}

Outcome Distillation(const DeskRun& run) {
  const std::vector<EpochStats>& epochs = run.row8_report.epochs;
  const double first = epochs.front().kd, last = epochs.back().kd;
  const double drop = first > 0 ? 1 - last / first : 0;

  AppConfig cfg = run.cfg;
  TrainConfig no_kd = cfg.student;
  no_kd.losses.lambda_kd = 0;
  StudentModel ablated(cfg.geometry, InteractionMode::kMapConcatLocal, ModelSeed(cfg, 2, 8));
  TrainStudent(ablated, *run.teacher, TeacherInput::kCroppedComposite, *run.set, no_kd);
  const double ablated_r1 = TestSRecallAt1(*run.corpus, StudentRankers(ablated, cfg.rank), cfg.workers);

  Outcome out;
  out.pass = drop >= kKdDropFraction && run.row8_r1 - ablated_r1 >= kKdAblationGap;
  out.detail = Format(
      "epoch-mean L_kd %.4f -> %.4f, drop %.1f%% (need >= %.0f%%) [%s]; R@1 row-8 %.2f vs "
      "lambda_kd=0 %.2f, gap %.2f (need >= %.0f)",
      first, last, 100 * drop, 100 * kKdDropFraction, EpochKd(run.row8_report).c_str(),
      run.row8_r1, ablated_r1, run.row8_r1 - ablated_r1, kKdAblationGap);
  return out;
}

Outcome Efficiency(const AppConfig& cfg, const DeskRun* run) {
  std::unique_ptr<TeacherModel> teacher;
  std::unique_ptr<StudentModel> encoder, student;
  BenchModels models;
  if (run) {
    models = {run->teacher.get(), TeacherInput::kCroppedComposite, run->row1.get(), run->row8.get()};
  } else {
    // Timing does not depend on weights.
    teacher = std::make_unique<TeacherModel>(cfg.geometry, 1);
    encoder = std::make_unique<StudentModel>(cfg.geometry, InteractionMode::kSimGlobal, 2);
    student = std::make_unique<StudentModel>(cfg.geometry, InteractionMode::kMapConcatLocal, 3);
    models = {teacher.get(), TeacherInput::kCroppedComposite, encoder.get(), student.get()};
  }
  BenchConfig bench = cfg.bench;
  bench.sizes = {200, 2000};
  const std::vector<BenchRow> rows = RunBench(models, bench, cfg.corpus.scene);
  auto ms = [&](const std::string& model, int n) {
    for (const BenchRow& r : rows) {
      if (r.model == model && r.n == n) return r.mean_ms;
    }
    return 0.0;
  };
  const double t200 = ms("teacher", 200), t2000 = ms("teacher", 2000);
  const double s200 = ms("student", 200), s2000 = ms("student", 2000);
  const double e200 = ms("encoder", 200), e2000 = ms("encoder", 2000);
  const double teacher_ratio = t2000 / t200, student_ratio = s2000 / s200;
  Outcome out;
  out.pass = teacher_ratio >= kTeacherRatioLow && teacher_ratio <= kTeacherRatioHigh &&
             student_ratio < kStudentRatioMax && s2000 < t2000 / kSpeedupMin;
  out.detail = Format(
      "teacher %.1f -> %.1f ms, ratio %.2f (need [%.0f, %.0f]); student %.2f -> %.2f ms, ratio %.2f "
      "(need < %.0f); student/teacher at 2000 = 1/%.0f (need > %.0f); encoder %.2f -> %.2f ms",
      t200, t2000, teacher_ratio, kTeacherRatioLow, kTeacherRatioHigh, s200, s2000, student_ratio,
      kStudentRatioMax, t2000 / s2000, kSpeedupMin, e200, e2000);
  return out;
}

std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome Determinism(const std::string& config_path, const fs::path& scratch) {
  std::vector<std::string> contents;
  for (const char* name : {"run_a", "run_b"}) {
    const fs::path dir = scratch / name;
    fs::remove_all(dir);
    AppConfig cfg = LoadAppConfig(config_path, {"workdir=" + dir.string()});
    PipelineStage(cfg);
    contents.push_back(ReadBytes(dir / "metrics.json"));
  }
  Outcome out;
  out.pass = !contents[0].empty() && contents[0] == contents[1];
  out.detail = Format("metrics.json %zu bytes, fnv %016llx vs %016llx", contents[0].size(),
                      static_cast<unsigned long long>(Fnv1a(contents[0])),
                      static_cast<unsigned long long>(Fnv1a(contents[1])));
  return out;
}

Outcome MiningThresholds() {
  MiningConfig cfg;
  Rng rng(2026);
  bool ok = true;
  int negatives_checked = 0, positives_checked = 0;
  double max_negative = 0, min_positive = 1;
  auto score_of = [](const std::vector<ScoredCandidate>& scored, int id) {
    for (const ScoredCandidate& c : scored) {
      if (c.fg_id == id) return c.score;
    }
    return -1.0;
  };
  for (int trial = 0; trial < 500; ++trial) {
    // Enough confident negatives to fill the quota, plus scores sitting
    // exactly on both thresholds.
    std::vector<ScoredCandidate> scored;
    int id = 1;
    const int confident = cfg.negatives + rng.UniformInt(10);
    for (int i = 0; i < confident; ++i) scored.push_back({id++, rng.Uniform(0, cfg.neg_threshold)});
    for (int i = 0; i < 3; ++i) scored.push_back({id++, cfg.neg_threshold});
    for (int i = 0; i < 3; ++i) scored.push_back({id++, cfg.pos_threshold});
    for (int i = rng.UniformInt(20); i > 0; --i) scored.push_back({id++, rng.Uniform()});
    std::vector<ScoredCandidate> shuffled = scored;
    rng.Shuffle(shuffled.begin(), shuffled.end());
    for (int neg : MineNegatives(0, shuffled, cfg, MixSeed(2026, trial))) {
      const double s = score_of(scored, neg);
      ++negatives_checked;
      max_negative = std::max(max_negative, s);
      if (!(s < cfg.neg_threshold)) ok = false;
    }
    const std::vector<int> pos = ExtendPositives(0, shuffled, cfg);
    if (pos.empty() || pos[0] != 0 || static_cast<int>(pos.size()) > cfg.max_positives) ok = false;
    for (size_t i = 1; i < pos.size(); ++i) {
      const double s = score_of(scored, pos[i]);
      ++positives_checked;
      min_positive = std::min(min_positive, s);
      if (!(s > cfg.pos_threshold)) ok = false;
    }
  }

  // Ratio progression on a fixture with ample candidates on both sides.
  std::vector<ScoredCandidate> fixture;
  for (int i = 1; i <= 12; ++i) fixture.push_back({i, 0.02 * i});
  for (int i = 13; i <= 18; ++i) fixture.push_back({i, 0.81 + 0.02 * (i - 13)});
  auto triplet = [&](const std::vector<int>& positives) {
    TrainTriplet t;
    t.query_box = {0.2, 0.2, 0.3, 0.3};
    for (int id : positives) {
      t.positives.push_back(
          {id, id == 0 ? SampleSource::kSameImageGt : SampleSource::kExtendedPositive});
    }
    for (int id : MineNegatives(0, fixture, cfg, 7, positives)) {
      t.negatives.push_back({id, SampleSource::kMinedNegative});
    }
    t.Validate();
    return t;
  };
  const TrainTriplet base = triplet({0});
  const TrainTriplet extended = triplet(ExtendPositives(0, fixture, cfg));
  const TrainTriplet augmented = ApplyAugmentation(extended, cfg, 7);
  augmented.Validate();
  const std::string ratios =
      Format("%zu:%zu -> %zu:%zu -> %zu:%zu", base.positives.size(), base.negatives.size(),
             extended.positives.size(), extended.negatives.size(), augmented.positives.size(),
             augmented.negatives.size());

  Outcome out;
  out.pass = ok && negatives_checked > 0 && positives_checked > 0 && ratios == "1:10 -> 5:10 -> 7:11";
  out.detail = Format(
      "%d negatives, max score %.6f (< %.1f); %d extended positives, min score %.6f (> %.1f); "
      "ratios %s (need 1:10 -> 5:10 -> 7:11)",
      negatives_checked, max_negative, cfg.neg_threshold, positives_checked, min_positive,
      cfg.pos_threshold, ratios.c_str());
  return out;
}

const char* const kNames[] = {"",
                              "metric oracles",
                              "gradient suite",
                              "geometry suite",
                              "ordering trend",
                              "distillation efficacy",
                              "efficiency trend",
                              "determinism",
                              "mining thresholds"};

int Main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  std::string desk_config = COMPSEARCH_ACCEPTANCE_CONFIG;
  std::string tiny_config = COMPSEARCH_TINY_CONFIG;
  std::string scratch = (fs::temp_directory_path() / "compsearch_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 8));
  app.add_option("--config", desk_config, "Configuration of the desk-scale training run");
  app.add_option("--determinism-config", tiny_config, "Configuration of the determinism run");
  app.add_option("--scratch", scratch, "Directory for pipeline runs");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected =
      only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8} : std::set<int>(only.begin(), only.end());

  const AppConfig cfg = LoadAppConfig(desk_config, {});
  std::unique_ptr<DeskRun> run;
  if (selected.count(4) || selected.count(5)) run = TrainDeskRun(cfg);

  int passed = 0;
  for (int id : selected) {
    Outcome o;
    try {
      switch (id) {
        case 1: o = MetricOracles(); break;
        case 2: o = GradientSuite(); break;
        case 3: o = Geometry(); break;
        case 4: o = Ordering(*run); break;
        case 5: o = Distillation(*run); break;
        case 6: o = Efficiency(cfg, run.get()); break;
        case 7: o = Determinism(tiny_config, scratch); break;
        case 8: o = MiningThresholds(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    passed += o.pass;
    std::printf("criterion %d %-21s %s  %s\n", id, kNames[id], o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%zu criteria passed\n", passed, selected.size());
  fs::remove_all(scratch);
  return passed == static_cast<int>(selected.size()) ? 0 : 1;
}

}  // namespace
}  // namespace compsearch

int main(int argc, char** argv) { return compsearch::Main(argc, argv); }
