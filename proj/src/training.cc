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

#include "compsearch/training.h"

#include <chrono>
#include <cmath>
#include <numeric>

#include "compsearch/common.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

void CheckFinite(double v, const std::string& what, int epoch, int step) {
  Check(std::isfinite(v), ErrorCode::kNumerical,
        what + " is not finite at epoch " + std::to_string(epoch + 1) + ", step " +
            std::to_string(step + 1));
}

std::vector<int> EpochOrder(size_t n, uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.Shuffle(order.begin(), order.end());
  return order;
}

// Mined negatives used in `epoch`: a window rotating through the list.
std::vector<const TripletItem*> RotatingNegatives(const TrainTriplet& t, int per_epoch,
                                                  int epoch) {
  std::vector<const TripletItem*> out;
  const int n = static_cast<int>(t.negatives.size());
  if (per_epoch <= 0 || per_epoch >= n) {
    for (const auto& item : t.negatives) out.push_back(&item);
    return out;
  }
  for (int j = 0; j < per_epoch; ++j) {
    out.push_back(&t.negatives[(static_cast<int64_t>(epoch) * per_epoch + j) % n]);
  }
  return out;
}

Box StepBox(const Box& box, const TrainConfig& cfg, uint64_t seed) {
  return cfg.realworld ? imaging::PadBox(box, seed, cfg.pad_fraction) : box;
}

// Crop of the composite with the foreground placed in `box`, framed by
// `frame_box` (the padded query box during real-world training).
Raster CompositeCrop(const Raster& bg, const Box& box, const Raster& fg, const Box& frame_box,
                     TeacherInput input, int size) {
  return TeacherCrop(imaging::Composite(bg, box, fg), frame_box, input, size);
}

}  // namespace

Adam::Adam(ParamStore& store, const AdamConfig& config)
    : params_(store.All()), config_(config) {
  for (const FParam* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::Step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    FParam& p = *params_[k];
    if (p.grad.shape() != p.value.shape()) continue;  // never touched
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update = config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      p.value[i] = static_cast<float>(p.value[i] - update);
    }
  }
}

void TrainConfig::Validate() const {
  Check(adam.lr > 0, ErrorCode::kInvalidArgument, "learning rate must be positive");
  Check(epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be at least 1");
  Check(batch >= 1 && student_backgrounds >= 1, ErrorCode::kInvalidArgument,
        "batch sizes must be positive");
  Check(pad_fraction >= 0 && pad_fraction <= 1, ErrorCode::kInvalidArgument,
        "pad_fraction must lie in [0, 1]");
  losses.Validate();
}

json ToJson(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"student_backgrounds", c.student_backgrounds},
          {"negatives_per_epoch", c.negatives_per_epoch},
          {"seed", c.seed},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"margin", c.losses.margin},
          {"lambda_kd", c.losses.lambda_kd},
          {"lambda_cls", c.losses.lambda_cls},
          {"realworld", c.realworld},
          {"pad_fraction", c.pad_fraction}};
}

TrainConfig TrainConfigFromJson(const json& j, TrainConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.student_backgrounds = j.value("student_backgrounds", c.student_backgrounds);
  c.negatives_per_epoch = j.value("negatives_per_epoch", c.negatives_per_epoch);
  c.seed = j.value("seed", c.seed);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.losses.margin = j.value("margin", c.losses.margin);
  c.losses.lambda_kd = j.value("lambda_kd", c.losses.lambda_kd);
  c.losses.lambda_cls = j.value("lambda_cls", c.losses.lambda_cls);
  c.realworld = j.value("realworld", c.realworld);
  c.pad_fraction = j.value("pad_fraction", c.pad_fraction);
  c.workers = j.value("workers", c.workers);
  return c;
}

json TrainReport::ToJson() const {
  json rows = json::array();
  for (const EpochStats& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"steps", e.steps},
                    {"loss", e.loss},
                    {"trp", e.trp},
                    {"kd", e.kd},
                    {"cls", e.cls},
                    {"seconds", e.seconds}});
  }
  return {{"kind", kind}, {"epochs", rows}, {"wall_seconds", wall_seconds},
          {"checkpoint", checkpoint}};
}

TrainReport TrainCompositeClassifier(
    TeacherModel& model, TeacherInput input,
    const std::function<std::vector<CompositeExample>(int epoch)>& examples,
    const TrainConfig& cfg, const std::string& kind, const EpochCallback& on_epoch) {
  cfg.Validate();
  const auto start = Clock::now();
  const int size = model.geometry().input_size;
  Adam adam(model.params(), cfg.adam);
  TrainReport report;
  report.kind = kind;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const std::vector<CompositeExample> ex = examples(epoch);
    Check(!ex.empty(), ErrorCode::kInvalidArgument, "no training examples for " + kind);
    const std::vector<int> order = EpochOrder(ex.size(), MixSeed(cfg.seed, 0x6570, epoch));
    EpochStats stats;
    stats.epoch = epoch + 1;
    for (size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const size_t end = std::min(order.size(), begin + cfg.batch);
      const int n = static_cast<int>(end - begin);
      std::vector<Raster> crops(n);
      std::vector<int> labels(n);
      ParallelFor(n, cfg.workers, [&](int i) {
        const int idx = order[begin + i];
        const CompositeExample& e = ex[idx];
        const Box frame = StepBox(e.query_box, cfg, MixSeed(cfg.seed, epoch, idx));
        crops[i] = CompositeCrop(*e.background, e.query_box, *e.foreground, frame, input, size);
        labels[i] = e.label;
      });
      model.params().ZeroGrad();
      FGraph g(true);
      Var x = g.Constant(ImagesToTensor(crops, size));
      Var loss = nn::BceLoss(g, model.Scores(g, model.Features(g, x)), labels);
      const double value = g.value(loss)[0];
      CheckFinite(value, kind + " loss", epoch, stats.steps);
      g.Backward(loss);
      adam.Step();
      stats.loss += value;
      stats.cls += value;
      ++stats.steps;
    }
    stats.loss /= stats.steps;
    stats.cls /= stats.steps;
    stats.seconds = Seconds(epoch_start);
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  report.wall_seconds = Seconds(start);
  return report;
}

std::vector<CompositeExample> TeacherExamples(const TrainingSet& set, const TrainConfig& cfg,
                                              int epoch) {
  std::vector<CompositeExample> out;
  for (const TrainTriplet& t : set.triplets()) {
    const Raster* bg = &set.Background(t);
    for (const TripletItem& p : t.positives) {
      out.push_back({bg, t.query_box, &set.Foreground(t, p), 1});
    }
    for (const TripletItem* n : RotatingNegatives(t, cfg.negatives_per_epoch, epoch)) {
      out.push_back({bg, t.query_box, &set.Foreground(t, *n), 0});
    }
  }
  return out;
}

TrainReport TrainTeacher(TeacherModel& model, TeacherInput input, const TrainingSet& set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
  Check(!set.triplets().empty(), ErrorCode::kInvalidArgument, "no training triplets");
  return TrainCompositeClassifier(
      model, input, [&](int epoch) { return TeacherExamples(set, cfg, epoch); }, cfg,
      "teacher", on_epoch);
}

StudentTrainer::StudentTrainer(StudentModel& model, const TeacherModel& teacher,
                               TeacherInput input, const TrainingSet& set,
                               const TrainConfig& cfg)
    : model_(model),
      teacher_(teacher),
      input_(input),
      set_(set),
      cfg_(cfg),
      adam_(model.params(), cfg.adam) {
  cfg_.Validate();
  Check(teacher.geometry().feature_shape() == model.geometry().feature_shape(),
        ErrorCode::kShapeMismatch,
        "teacher feature shape " + nn::ShapeString(teacher.geometry().feature_shape()) +
            " differs from student feature shape " +
            nn::ShapeString(model.geometry().feature_shape()));
  Check(!set.triplets().empty(), ErrorCode::kInvalidArgument, "no training triplets");
  use_kd_ = DistillsFeatures(model.mode()) && cfg_.losses.lambda_kd > 0;
  use_cls_ = !IsSimilarityMode(model.mode()) && cfg_.losses.lambda_cls > 0;
}

std::vector<const TripletItem*> StudentTrainer::Negatives(const TrainTriplet& t,
                                                          int epoch) const {
  return RotatingNegatives(t, cfg_.negatives_per_epoch, epoch);
}

StepLosses StudentTrainer::Step(const std::vector<int>& triplets, int epoch, int step,
                                bool update) {
  const int size = model_.geometry().input_size;
  std::vector<Raster> bgs;
  std::vector<Box> boxes;
  std::vector<Raster> fgs;
  std::vector<int> pair_bg, pair_fg, labels;
  std::vector<int> trp_anchor, trp_pos, trp_neg;
  std::vector<FTensor> targets;

  // Teacher features for pairs not cached yet, computed in one batch.
  struct Pending {
    size_t pair;
    std::tuple<int, int, Augmentation, uint64_t> key;
  };
  std::vector<Raster> pending_crops;
  std::vector<Pending> pending;
  std::vector<const FTensor*> target_refs;

  for (size_t i = 0; i < triplets.size(); ++i) {
    const int ti = triplets[i];
    const TrainTriplet& t = set_.triplets()[ti];
    const Box box = StepBox(t.query_box, cfg_, MixSeed(cfg_.seed, MixSeed(0x7374, epoch), ti));
    bgs.push_back(set_.Background(t));
    boxes.push_back(box);
    std::vector<int> pos_idx, neg_idx;
    auto add = [&](const TripletItem& item, int label) {
      const int f = static_cast<int>(fgs.size());
      fgs.push_back(set_.ForegroundInput(t, item));
      pair_bg.push_back(static_cast<int>(i));
      pair_fg.push_back(f);
      labels.push_back(label);
      (label ? pos_idx : neg_idx).push_back(f);
      if (!use_kd_) return;
      const auto key = std::tuple(ti, item.fg_id, item.augmentation, item.seed);
      auto it = teacher_cache_.find(key);
      if (!cfg_.realworld && it != teacher_cache_.end()) {
        target_refs.push_back(&it->second);
        return;
      }
      target_refs.push_back(nullptr);
      pending.push_back({target_refs.size() - 1, key});
      pending_crops.push_back(CompositeCrop(set_.Background(t), t.query_box,
                                            set_.Foreground(t, item), box, input_, size));
    };
    for (const TripletItem& p : t.positives) add(p, 1);
    for (const TripletItem* n : Negatives(t, epoch)) add(*n, 0);
    for (int p : pos_idx) {
      for (int n : neg_idx) {
        trp_anchor.push_back(static_cast<int>(i));
        trp_pos.push_back(p);
        trp_neg.push_back(n);
      }
    }
  }

  std::vector<FTensor> fresh;
  if (!pending.empty()) {
    for (auto& o : teacher_.ForwardBatch(pending_crops)) fresh.push_back(std::move(o.feature));
    for (size_t k = 0; k < pending.size(); ++k) {
      if (cfg_.realworld) {
        target_refs[pending[k].pair] = &fresh[k];
      } else {
        auto [it, inserted] = teacher_cache_.emplace(pending[k].key, std::move(fresh[k]));
        target_refs[pending[k].pair] = &it->second;
      }
    }
  }

  model_.params().ZeroGrad();
  FGraph g(true);
  Var bgv = g.Constant(ImagesToTensor(bgs, size));
  Var fgv = g.Constant(ImagesToTensor(fgs, size));
  StudentOutputs out = model_.Forward(g, bgv, fgv, boxes, pair_bg, pair_fg);

  std::vector<std::pair<Var, double>> terms;
  StepLosses losses;
  Check(!trp_anchor.empty(), ErrorCode::kInvalidArgument,
        "student step needs at least one positive and one negative");
  Var anchors = model_.mode() == InteractionMode::kSimLocal ? out.local_bg_vec : out.global_bg_vec;
  Var a = nn::GatherRows(g, anchors, trp_anchor);
  Var sp = nn::CosineSim(g, a, nn::GatherRows(g, out.fg_vec, trp_pos));
  Var sn = nn::CosineSim(g, a, nn::GatherRows(g, out.fg_vec, trp_neg));
  Var trp = nn::TripletLoss(g, sp, sn, cfg_.losses.margin);
  losses.trp = g.value(trp)[0];
  terms.push_back({trp, 1.0});

  if (use_cls_) {
    Var cls = nn::BceLoss(g, out.scores, labels);
    losses.cls = g.value(cls)[0];
    terms.push_back({cls, cfg_.losses.lambda_cls});
  }
  if (use_kd_) {
    const FTensor& d = g.value(out.distilled);
    const size_t per = d.size() / d.dim(0);
    FTensor target(d.shape());
    for (size_t p = 0; p < target_refs.size(); ++p) {
      const FTensor& f = *target_refs[p];
      float* dst = target.data() + p * per;
      if (f.size() == per) {
        std::copy(f.data(), f.data() + per, dst);
      } else {
        // Vector modes mimic the pooled composite feature.
        const int c = f.dim(-1);
        const size_t cells = f.size() / c;
        for (int k = 0; k < c; ++k) {
          double acc = 0;
          for (size_t s = 0; s < cells; ++s) acc += f[s * c + k];
          dst[k] = static_cast<float>(acc / cells);
        }
      }
    }
    Var kd = nn::KdL1Loss(g, out.distilled, target);
    losses.kd = g.value(kd)[0];
    terms.push_back({kd, cfg_.losses.lambda_kd});
  }
  Var total = nn::WeightedSum(g, terms);
  losses.loss = g.value(total)[0];
  CheckFinite(losses.loss, "student loss", epoch, step);
  g.Backward(total);
  if (update) adam_.Step();
  return losses;
}

EpochStats StudentTrainer::RunEpoch(int epoch) {
  const auto start = Clock::now();
  const std::vector<int> order =
      EpochOrder(set_.triplets().size(), MixSeed(cfg_.seed, 0x73747564, epoch));
  EpochStats stats;
  stats.epoch = epoch + 1;
  for (size_t begin = 0; begin < order.size(); begin += cfg_.student_backgrounds) {
    const size_t end = std::min(order.size(), begin + cfg_.student_backgrounds);
    const std::vector<int> chunk(order.begin() + begin, order.begin() + end);
    const StepLosses l = Step(chunk, epoch, stats.steps);
    stats.loss += l.loss;
    stats.trp += l.trp;
    stats.kd += l.kd;
    stats.cls += l.cls;
    ++stats.steps;
  }
  stats.loss /= stats.steps;
  stats.trp /= stats.steps;
  stats.kd /= stats.steps;
  stats.cls /= stats.steps;
  stats.seconds = Seconds(start);
  return stats;
}

TrainReport TrainStudent(StudentModel& model, const TeacherModel& teacher, TeacherInput input,
                         const TrainingSet& set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  const auto start = Clock::now();
  StudentTrainer trainer(model, teacher, input, set, cfg);
  TrainReport report;
  report.kind = "student";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    report.epochs.push_back(trainer.RunEpoch(epoch));
    if (on_epoch) on_epoch(report.epochs.back());
  }
  report.wall_seconds = Seconds(start);
  return report;
}

}  // namespace compsearch
