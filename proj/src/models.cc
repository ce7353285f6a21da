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

#include "compsearch/models.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "compsearch/rng.h"
#include "json.hpp"

namespace compsearch {
namespace {

uint64_t HashString(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

FTensor HeNormal(std::vector<int> shape, int fan_in, uint64_t seed) {
  FTensor t(std::move(shape));
  Rng rng(seed);
  const double std = std::sqrt(2.0 / fan_in);
  for (float& v : t.values()) v = static_cast<float>(rng.Normal() * std);
  return t;
}

FTensor XavierNormal(std::vector<int> shape, int fan_in, int fan_out, uint64_t seed) {
  FTensor t(std::move(shape));
  Rng rng(seed);
  const double std = std::sqrt(2.0 / (fan_in + fan_out));
  for (float& v : t.values()) v = static_cast<float>(rng.Normal() * std);
  return t;
}

}  // namespace

std::string_view ModeName(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::kSimGlobal: return "sim_global";
    case InteractionMode::kSimLocal: return "sim_local";
    case InteractionMode::kVecCls: return "vec_cls";
    case InteractionMode::kVecConcatGlobal: return "vec_concat_global";
    case InteractionMode::kVecConcatLocal: return "vec_concat_local";
    case InteractionMode::kMapConcatGlobal: return "map_concat_global";
    case InteractionMode::kMapCompose: return "map_compose";
    case InteractionMode::kMapConcatLocal: return "map_concat_local";
  }
  return "unknown";
}

InteractionMode ParseMode(std::string_view name) {
  for (InteractionMode m : kAllModes) {
    if (ModeName(m) == name) return m;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown interaction mode '" +
                                        std::string(name) + "'");
}

int ModeRow(InteractionMode mode) { return static_cast<int>(mode); }

bool IsSimilarityMode(InteractionMode mode) {
  return mode == InteractionMode::kSimGlobal || mode == InteractionMode::kSimLocal;
}

bool IsMapMode(InteractionMode mode) {
  return mode == InteractionMode::kMapConcatGlobal ||
         mode == InteractionMode::kMapCompose ||
         mode == InteractionMode::kMapConcatLocal;
}

bool UsesLocalBackground(InteractionMode mode) {
  return mode == InteractionMode::kSimLocal ||
         mode == InteractionMode::kVecConcatLocal ||
         mode == InteractionMode::kMapCompose ||
         mode == InteractionMode::kMapConcatLocal;
}

bool DistillsFeatures(InteractionMode mode) {
  return !IsSimilarityMode(mode) && mode != InteractionMode::kVecCls;
}

FTensor ImagesToTensor(std::span<const Raster> images, int size) {
  const int n = static_cast<int>(images.size());
  FTensor t({n, size, size, 3});
  const size_t per = static_cast<size_t>(size) * size * 3;
  for (int i = 0; i < n; ++i) {
    const Raster& r = images[i];
    Check(r.width() == size && r.height() == size, ErrorCode::kInvalidArgument,
          "expected a " + std::to_string(size) + "x" + std::to_string(size) +
              " raster, got " + std::to_string(r.width()) + "x" +
              std::to_string(r.height()));
    float* dst = t.data() + i * per;
    for (size_t k = 0; k < per; ++k) dst[k] = 2.0f * r.data()[k] - 1.0f;
  }
  return t;
}

FParam& ParamStore::Add(std::string id, FTensor init) {
  for (const FParam& p : params_) {
    Check(p.id != id, ErrorCode::kInvalidArgument, "duplicate parameter id " + id);
  }
  params_.emplace_back(std::move(id), std::move(init));
  return params_.back();
}

std::vector<FParam*> ParamStore::All() {
  std::vector<FParam*> out;
  for (FParam& p : params_) out.push_back(&p);
  return out;
}

std::vector<const FParam*> ParamStore::All() const {
  std::vector<const FParam*> out;
  for (const FParam& p : params_) out.push_back(&p);
  return out;
}

int64_t ParamStore::Count() const {
  int64_t n = 0;
  for (const FParam& p : params_) n += static_cast<int64_t>(p.value.size());
  return n;
}

void ParamStore::ZeroGrad() {
  for (FParam& p : params_) p.ZeroGrad();
}

Backbone::Backbone(ParamStore& store, const std::string& prefix,
                   const ModelGeometry& geometry, uint64_t seed) {
  int cin = 3;
  for (size_t i = 0; i < geometry.channels.size(); ++i) {
    const int cout = geometry.channels[i];
    const std::string base = prefix + ".conv" + std::to_string(i);
    weights_.push_back(&store.Add(
        base + ".weight",
        HeNormal({3, 3, cin, cout}, 9 * cin, MixSeed(seed, HashString(base)))));
    biases_.push_back(&store.Add(base + ".bias", FTensor({cout})));
    cin = cout;
  }
}

template <typename Self>
Var Backbone::ForwardImpl(Self& self, FGraph& g, Var x) {
  for (size_t i = 0; i < self.weights_.size(); ++i) {
    auto& w = *self.weights_[i];
    auto& b = *self.biases_[i];
    Var wv, bv;
    if constexpr (std::is_const_v<Self>) {
      wv = g.Parameter(static_cast<const FParam&>(w));
      bv = g.Parameter(static_cast<const FParam&>(b));
    } else {
      wv = g.Parameter(w);
      bv = g.Parameter(b);
    }
    x = nn::MaxPool2(g, nn::Relu(g, nn::Conv2d(g, x, wv, bv, 1, 1)));
  }
  return x;
}

Var Backbone::Forward(FGraph& g, Var images) { return ForwardImpl(*this, g, images); }
Var Backbone::Forward(FGraph& g, Var images) const { return ForwardImpl(*this, g, images); }

namespace {

template <typename P>
Var Bind(FGraph& g, P& param) {
  return g.Parameter(param);
}

template <typename P>
Var HeadScores(FGraph& g, Var features, P& w, P& b) {
  Var pooled = nn::GlobalAvgPool(g, features);
  Var logits = nn::Linear(g, pooled, Bind(g, w), Bind(g, b));
  const int n = g.value(logits).dim(0);
  return nn::Reshape(g, nn::Sigmoid(g, logits), {n});
}

}  // namespace

TeacherModel::TeacherModel(const ModelGeometry& geometry, uint64_t seed)
    : geometry_(geometry), backbone_(store_, "teacher.backbone", geometry, seed) {
  const int c = geometry.feature_channels();
  head_w_ = &store_.Add("teacher.head.weight",
                        XavierNormal({c, 1}, c, 1, MixSeed(seed, 0x68656164)));
  head_b_ = &store_.Add("teacher.head.bias", FTensor({1}));
}

Var TeacherModel::Features(FGraph& g, Var images) { return backbone_.Forward(g, images); }
Var TeacherModel::Features(FGraph& g, Var images) const { return backbone_.Forward(g, images); }

Var TeacherModel::Scores(FGraph& g, Var features) {
  return HeadScores(g, features, *head_w_, *head_b_);
}
Var TeacherModel::Scores(FGraph& g, Var features) const {
  return HeadScores(g, features, static_cast<const FParam&>(*head_w_),
                    static_cast<const FParam&>(*head_b_));
}

TeacherModel::Output TeacherModel::Forward(const Raster& crop) const {
  return ForwardBatch(std::span<const Raster>(&crop, 1)).front();
}

std::vector<TeacherModel::Output> TeacherModel::ForwardBatch(
    std::span<const Raster> crops) const {
  FGraph g(false);
  Var x = g.Constant(ImagesToTensor(crops, geometry_.input_size));
  Var f = Features(g, x);
  Var s = Scores(g, f);
  const FTensor& fv = g.value(f);
  const size_t per = fv.size() / crops.size();
  std::vector<Output> out;
  for (size_t i = 0; i < crops.size(); ++i) {
    FTensor feat(geometry_.feature_shape(),
                 std::vector<float>(fv.data() + i * per, fv.data() + (i + 1) * per));
    out.push_back({std::move(feat), static_cast<double>(g.value(s)[i])});
  }
  return out;
}

void TeacherModel::ZeroHead() {
  head_w_->value.Fill(0.0f);
  head_b_->value.Fill(0.0f);
}

Raster TeacherCrop(const Raster& composite, const Box& query_box,
                   TeacherInput input, int size) {
  if (input == TeacherInput::kWholeComposite) {
    return imaging::CropAndResize(composite, Box{0, 0, 1, 1}, size, size);
  }
  const imaging::CropBox crop =
      imaging::ComputeCropBox(query_box, composite.width(), composite.height());
  return imaging::CropAndResize(composite, crop.box, size, size);
}

Raster TeacherCrop(const Raster& background, const Box& query_box,
                   const Raster& foreground, TeacherInput input, int size) {
  return TeacherCrop(imaging::Composite(background, query_box, foreground),
                     query_box, input, size);
}

nn::SpatialPlan RoiAlignPlan(int in_h, int in_w, const Box& box, int out_h,
                             int out_w, int sampling_ratio) {
  nn::SpatialPlan plan;
  plan.in_h = in_h;
  plan.in_w = in_w;
  plan.out_h = out_h;
  plan.out_w = out_w;
  const double y0 = box.y * in_h, x0 = box.x * in_w;
  const double bin_h = box.h * in_h / out_h, bin_w = box.w * in_w / out_w;
  const int ny = sampling_ratio > 0
                     ? sampling_ratio
                     : std::max(1, static_cast<int>(std::ceil(bin_h - 1e-9)));
  const int nx = sampling_ratio > 0
                     ? sampling_ratio
                     : std::max(1, static_cast<int>(std::ceil(bin_w - 1e-9)));
  const double share = 1.0 / (ny * nx);
  plan.offsets.push_back(0);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      for (int sy = 0; sy < ny; ++sy) {
        const double y = y0 + i * bin_h + (sy + 0.5) * bin_h / ny - 0.5;
        for (int sx = 0; sx < nx; ++sx) {
          const double x = x0 + j * bin_w + (sx + 0.5) * bin_w / nx - 0.5;
          for (auto tap : nn::BilinearTaps(in_h, in_w, {y, x})) {
            tap.weight *= share;
            plan.taps.push_back(tap);
          }
        }
      }
      plan.offsets.push_back(static_cast<int>(plan.taps.size()));
    }
  }
  return plan;
}

std::pair<nn::SpatialPlan, nn::SpatialPlan> ComposePlans(int h, int w,
                                                          const Box& rel) {
  nn::SpatialPlan bg, fg;
  for (nn::SpatialPlan* p : {&bg, &fg}) {
    p->in_h = p->out_h = h;
    p->in_w = p->out_w = w;
    p->offsets.push_back(0);
  }
  constexpr double kTol = 1e-9;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double cy = (i + 0.5) / h, cx = (j + 0.5) / w;
      const bool inside = cx >= rel.x - kTol && cx <= rel.x + rel.w + kTol &&
                          cy >= rel.y - kTol && cy <= rel.y + rel.h + kTol;
      if (inside) {
        const double u = (cx - rel.x) / rel.w * w - 0.5;
        const double v = (cy - rel.y) / rel.h * h - 0.5;
        for (const auto& tap : nn::BilinearTaps(h, w, {v, u})) fg.taps.push_back(tap);
      } else {
        bg.taps.push_back({i * w + j, 1.0});
      }
      bg.offsets.push_back(static_cast<int>(bg.taps.size()));
      fg.offsets.push_back(static_cast<int>(fg.taps.size()));
    }
  }
  return {std::move(bg), std::move(fg)};
}

Box RelativeBox(const Box& q, const Box& crop) {
  return Box{(q.x - crop.x) / crop.w, (q.y - crop.y) / crop.h, q.w / crop.w,
             q.h / crop.h};
}

StudentModel::StudentModel(const ModelGeometry& geometry, InteractionMode mode,
                           uint64_t seed)
    : geometry_(geometry),
      mode_(mode),
      bg_encoder_(store_, "student.bg_encoder", geometry, MixSeed(seed, 1)),
      fg_encoder_(store_, "student.fg_encoder", geometry, MixSeed(seed, 2)) {
  if (IsSimilarityMode(mode)) return;
  const int c = geometry.feature_channels();
  const int cin = mode == InteractionMode::kMapCompose ? c : 2 * c;
  // Vector modes run E^d on 1x1 maps, where only a kernel's center tap
  // would ever be used, so they get 1x1 kernels.
  const int k = IsMapMode(mode) ? 3 : 1;
  int in = cin;
  for (int layer = 0; layer < 2; ++layer) {
    const std::string base = "student.distill.conv" + std::to_string(layer);
    distill_w_.push_back(&store_.Add(
        base + ".weight",
        HeNormal({k, k, in, c}, k * k * in, MixSeed(seed, HashString(base)))));
    distill_b_.push_back(&store_.Add(base + ".bias", FTensor({c})));
    in = c;
  }
  head_w_ = &store_.Add("student.head.weight",
                        XavierNormal({c, 1}, c, 1, MixSeed(seed, 0x68656164)));
  head_b_ = &store_.Add("student.head.bias", FTensor({1}));
}

int64_t StudentModel::EncoderParamCount() const {
  int64_t n = 0;
  for (const FParam* p : store_.All()) {
    if (p->id.rfind("student.bg_encoder", 0) == 0 ||
        p->id.rfind("student.fg_encoder", 0) == 0) {
      n += static_cast<int64_t>(p->value.size());
    }
  }
  return n;
}

Var StudentModel::EncodeBackground(FGraph& g, Var images) { return bg_encoder_.Forward(g, images); }
Var StudentModel::EncodeBackground(FGraph& g, Var images) const { return bg_encoder_.Forward(g, images); }
Var StudentModel::EncodeForeground(FGraph& g, Var images) { return fg_encoder_.Forward(g, images); }
Var StudentModel::EncodeForeground(FGraph& g, Var images) const { return fg_encoder_.Forward(g, images); }

Var StudentModel::Interaction(FGraph& g, const Encoded& enc,
                              const std::vector<int>& pair_bg,
                              const std::vector<int>& pair_fg) const {
  const int n = static_cast<int>(pair_bg.size());
  auto as_map = [&](Var v) {
    const int c = g.value(v).dim(-1);
    return nn::Reshape(g, v, {n, 1, 1, c});
  };
  switch (mode_) {
    case InteractionMode::kVecCls:
    case InteractionMode::kVecConcatGlobal:
      return as_map(nn::ConcatChannels(g, nn::GatherRows(g, enc.bg_vecs, pair_bg),
                                       nn::GatherRows(g, enc.fg_vecs, pair_fg)));
    case InteractionMode::kVecConcatLocal:
      return as_map(nn::ConcatChannels(g, nn::GatherRows(g, enc.local_vecs, pair_bg),
                                       nn::GatherRows(g, enc.fg_vecs, pair_fg)));
    case InteractionMode::kMapConcatGlobal:
      return nn::ConcatChannels(g, nn::GatherRows(g, enc.bg_maps, pair_bg),
                                nn::GatherRows(g, enc.fg_maps, pair_fg));
    case InteractionMode::kMapConcatLocal:
      return nn::ConcatChannels(g, nn::GatherRows(g, enc.local_maps, pair_bg),
                                nn::GatherRows(g, enc.fg_maps, pair_fg));
    case InteractionMode::kMapCompose: {
      const int h = geometry_.feature_size(), w = geometry_.feature_size();
      std::vector<nn::SpatialPlan> bg_plans, fg_plans;
      for (int i = 0; i < n; ++i) {
        auto [bp, fp] = ComposePlans(h, w, enc.relative_boxes[pair_bg[i]]);
        bg_plans.push_back(std::move(bp));
        fg_plans.push_back(std::move(fp));
      }
      Var bg = nn::Resample(g, nn::GatherRows(g, enc.local_maps, pair_bg), std::move(bg_plans));
      Var fg = nn::Resample(g, nn::GatherRows(g, enc.fg_maps, pair_fg), std::move(fg_plans));
      return nn::Add(g, bg, fg);
    }
    default:
      Fail(ErrorCode::kInvalidArgument,
           "similarity modes have no distillation input");
  }
}

namespace {

template <typename Self>
Var DistillImpl(Self& self, FGraph& g, Var x, const std::vector<FParam*>& ws,
                const std::vector<FParam*>& bs, bool map_mode) {
  const int pad = map_mode ? 1 : 0;
  for (size_t i = 0; i < ws.size(); ++i) {
    Var wv, bv;
    if constexpr (std::is_const_v<Self>) {
      wv = g.Parameter(static_cast<const FParam&>(*ws[i]));
      bv = g.Parameter(static_cast<const FParam&>(*bs[i]));
    } else {
      wv = g.Parameter(*ws[i]);
      bv = g.Parameter(*bs[i]);
    }
    x = nn::Relu(g, nn::Conv2d(g, x, wv, bv, 1, pad));
  }
  return x;
}

}  // namespace

Var StudentModel::Distill(FGraph& g, Var x) {
  return DistillImpl(*this, g, x, distill_w_, distill_b_, IsMapMode(mode_));
}
Var StudentModel::Distill(FGraph& g, Var x) const {
  return DistillImpl(*this, g, x, distill_w_, distill_b_, IsMapMode(mode_));
}
Var StudentModel::Head(FGraph& g, Var d) { return HeadScores(g, d, *head_w_, *head_b_); }
Var StudentModel::Head(FGraph& g, Var d) const {
  return HeadScores(g, d, static_cast<const FParam&>(*head_w_),
                    static_cast<const FParam&>(*head_b_));
}

template <typename Self>
StudentOutputs StudentModel::ForwardImpl(Self& self, FGraph& g, Var bg_images,
                                         Var fg_images,
                                         const std::vector<Box>& query_boxes,
                                         const std::vector<int>& pair_bg,
                                         const std::vector<int>& pair_fg) {
  const int nb = g.value(bg_images).dim(0);
  Check(static_cast<int>(query_boxes.size()) == nb, ErrorCode::kShapeMismatch,
        "student forward: one query box per background required");
  Check(pair_bg.size() == pair_fg.size(), ErrorCode::kShapeMismatch,
        "student forward: pair index lists differ in length");
  const int fs = self.geometry_.feature_size();
  const int size = self.geometry_.input_size;

  Encoded enc;
  enc.bg_maps = self.EncodeBackground(g, bg_images);
  enc.fg_maps = self.EncodeForeground(g, fg_images);
  std::vector<nn::SpatialPlan> plans;
  for (const Box& q : query_boxes) {
    const Box crop = imaging::ComputeCropBox(q, size, size).box;
    plans.push_back(RoiAlignPlan(fs, fs, crop, fs, fs));
    enc.relative_boxes.push_back(RelativeBox(q, crop));
  }
  enc.local_maps = nn::Resample(g, enc.bg_maps, std::move(plans));
  enc.bg_vecs = nn::GlobalAvgPool(g, enc.bg_maps);
  enc.local_vecs = nn::GlobalAvgPool(g, enc.local_maps);
  enc.fg_vecs = nn::GlobalAvgPool(g, enc.fg_maps);

  StudentOutputs out;
  out.global_bg_vec = enc.bg_vecs;
  out.local_bg_vec = enc.local_vecs;
  out.fg_vec = enc.fg_vecs;
  if (pair_bg.empty()) return out;
  if (IsSimilarityMode(self.mode_)) {
    Var anchor = self.mode_ == InteractionMode::kSimGlobal ? enc.bg_vecs : enc.local_vecs;
    out.similarity = nn::CosineSim(g, nn::GatherRows(g, anchor, pair_bg),
                                   nn::GatherRows(g, enc.fg_vecs, pair_fg));
    return out;
  }
  out.distilled = self.Distill(g, self.Interaction(g, enc, pair_bg, pair_fg));
  out.scores = self.Head(g, out.distilled);
  return out;
}

StudentOutputs StudentModel::Forward(FGraph& g, Var bg, Var fg,
                                     const std::vector<Box>& q,
                                     const std::vector<int>& pb,
                                     const std::vector<int>& pf) {
  return ForwardImpl(*this, g, bg, fg, q, pb, pf);
}

StudentOutputs StudentModel::Forward(FGraph& g, Var bg, Var fg,
                                     const std::vector<Box>& q,
                                     const std::vector<int>& pb,
                                     const std::vector<int>& pf) const {
  return ForwardImpl(*this, g, bg, fg, q, pb, pf);
}

namespace {

FTensor Row(const FTensor& t, int row, std::vector<int> shape) {
  const size_t per = t.size() / t.dim(0);
  return FTensor(std::move(shape),
                 std::vector<float>(t.data() + row * per, t.data() + (row + 1) * per));
}

FTensor Batched(const FTensor& t) {
  std::vector<int> shape = t.shape();
  shape.insert(shape.begin(), 1);
  return t.Reshaped(std::move(shape));
}

}  // namespace

FeatureBundle StudentModel::Features(const Raster& bg, const Box& query_box,
                                     const Raster& fg) const {
  ValidateBox(query_box, "student features: query box");
  const int size = geometry_.input_size;
  const int fs = geometry_.feature_size();
  const int c = geometry_.feature_channels();
  const std::vector<int> map_shape = geometry_.feature_shape();
  FeatureBundle b;
  b.query_box = query_box;
  b.crop_box = imaging::ComputeCropBox(query_box, size, size).box;
  FGraph g(false);
  Var fb = EncodeBackground(g, g.Constant(ImagesToTensor(std::span<const Raster>(&bg, 1), size)));
  Var ff = EncodeForeground(g, g.Constant(ImagesToTensor(std::span<const Raster>(&fg, 1), size)));
  Var local = nn::Resample(g, fb, {RoiAlignPlan(fs, fs, b.crop_box, fs, fs)});
  b.global_bg_map = Row(g.value(fb), 0, map_shape);
  b.fg_map = Row(g.value(ff), 0, map_shape);
  b.local_bg_map = Row(g.value(local), 0, map_shape);
  b.global_bg_vec = Row(g.value(nn::GlobalAvgPool(g, fb)), 0, {c});
  b.local_bg_vec = Row(g.value(nn::GlobalAvgPool(g, local)), 0, {c});
  b.fg_vec = Row(g.value(nn::GlobalAvgPool(g, ff)), 0, {c});
  return b;
}

StudentModel::InteractResult StudentModel::Interact(const FeatureBundle& b) const {
  FGraph g(false);
  const int c = geometry_.feature_channels();
  InteractResult r;
  if (IsSimilarityMode(mode_)) {
    Var anchor = g.Constant(
        (mode_ == InteractionMode::kSimGlobal ? b.global_bg_vec : b.local_bg_vec)
            .Reshaped({1, c}));
    Var fg = g.Constant(b.fg_vec.Reshaped({1, c}));
    r.similarity = g.value(nn::CosineSim(g, anchor, fg))[0];
    return r;
  }
  Encoded enc;
  enc.bg_maps = g.Constant(Batched(b.global_bg_map));
  enc.local_maps = g.Constant(Batched(b.local_bg_map));
  enc.bg_vecs = g.Constant(b.global_bg_vec.Reshaped({1, c}));
  enc.local_vecs = g.Constant(b.local_bg_vec.Reshaped({1, c}));
  enc.fg_maps = g.Constant(Batched(b.fg_map));
  enc.fg_vecs = g.Constant(b.fg_vec.Reshaped({1, c}));
  enc.relative_boxes = {RelativeBox(b.query_box, b.crop_box)};
  Var d = Distill(g, Interaction(g, enc, {0}, {0}));
  const FTensor& dv = g.value(d);
  r.distilled = dv.Reshaped({dv.dim(1), dv.dim(2), dv.dim(3)});
  return r;
}

double StudentModel::Score(const FeatureBundle& b) const {
  const InteractResult r = Interact(b);
  if (r.similarity) return (*r.similarity + 1.0) / 2.0;
  FGraph g(false);
  Var d = g.Constant(Batched(*r.distilled));
  return g.value(Head(g, d))[0];
}

void StudentModel::ZeroHead() {
  if (head_w_ == nullptr) return;
  head_w_->value.Fill(0.0f);
  head_b_->value.Fill(0.0f);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'C', 'S', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
 public:
  void Bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void U32(uint32_t v) { Bytes(&v, 4); }
  void I32(int32_t v) { Bytes(&v, 4); }
  void U64(uint64_t v) { Bytes(&v, 8); }
  void Str(const std::string& s) {
    U32(static_cast<uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  Reader(const uint8_t* data, size_t n) : data_(data), n_(n) {}
  void Bytes(void* p, size_t n) {
    Check(pos_ + n <= n_, ErrorCode::kCorrupt, "checkpoint truncated");
    std::memcpy(p, data_ + pos_, n);
    pos_ += n;
  }
  uint32_t U32() { uint32_t v; Bytes(&v, 4); return v; }
  int32_t I32() { int32_t v; Bytes(&v, 4); return v; }
  std::string Str() {
    const uint32_t len = U32();
    Check(len <= n_ - pos_, ErrorCode::kCorrupt, "checkpoint string overruns file");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  const uint8_t* data_;
  size_t n_;
  size_t pos_ = 0;
};

nlohmann::json GeometryJson(const ModelGeometry& g) {
  return {{"input_size", g.input_size}, {"channels", g.channels}};
}

ModelGeometry GeometryFromJson(const nlohmann::json& j) {
  ModelGeometry g;
  g.input_size = j.at("input_size").get<int>();
  g.channels = j.at("channels").get<std::vector<int>>();
  return g;
}

}  // namespace

std::vector<uint8_t> SerializeCheckpoint(const CheckpointData& data, uint32_t version) {
  Writer w;
  w.Bytes(kMagic, sizeof(kMagic));
  w.U32(version);
  w.Str(data.kind);
  w.Str(data.metadata);
  w.U32(static_cast<uint32_t>(data.params.size()));
  for (const auto& [id, t] : data.params) {
    w.Str(id);
    w.U32(static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) w.I32(d);
    w.Bytes(t.data(), t.size() * sizeof(float));
  }
  w.U64(Fnv1a(w.out.data(), w.out.size()));
  return std::move(w.out);
}

CheckpointData ParseCheckpoint(const std::vector<uint8_t>& bytes) {
  Check(bytes.size() >= sizeof(kMagic) + 4 + 8, ErrorCode::kCorrupt,
        "checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
  Check(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
        ErrorCode::kCorrupt, "checkpoint magic mismatch");
  Reader r(bytes.data(), bytes.size() - 8);
  char magic[8];
  r.Bytes(magic, 8);
  const uint32_t version = r.U32();
  Check(version == kCheckpointVersion, ErrorCode::kVersionMismatch,
        "checkpoint version " + std::to_string(version) + " is not supported (expected " +
            std::to_string(kCheckpointVersion) + ")");
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const uint64_t actual = Fnv1a(bytes.data(), bytes.size() - 8);
  Check(stored == actual, ErrorCode::kCorrupt, "checkpoint checksum mismatch");
  CheckpointData data;
  data.hash = actual;
  data.kind = r.Str();
  data.metadata = r.Str();
  const uint32_t count = r.U32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string id = r.Str();
    const uint32_t rank = r.U32();
    Check(rank <= 8, ErrorCode::kCorrupt, "checkpoint tensor rank too large");
    std::vector<int> shape(rank);
    for (int& d : shape) {
      d = r.I32();
      Check(d >= 0, ErrorCode::kCorrupt, "checkpoint has negative dimension");
    }
    const size_t n = nn::NumElements(shape);
    Check(n * sizeof(float) <= bytes.size(), ErrorCode::kCorrupt,
          "checkpoint tensor larger than file");
    std::vector<float> values(n);
    r.Bytes(values.data(), n * sizeof(float));
    data.params.emplace_back(std::move(id), FTensor(std::move(shape), std::move(values)));
  }
  Check(r.pos() == bytes.size() - 8, ErrorCode::kCorrupt,
        "checkpoint has trailing bytes");
  return data;
}

void WriteCheckpointFile(const CheckpointData& data, const std::string& path) {
  const auto bytes = SerializeCheckpoint(data);
  std::ofstream f(path, std::ios::binary);
  Check(static_cast<bool>(f), ErrorCode::kIo, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  Check(static_cast<bool>(f), ErrorCode::kIo, "failed writing " + path);
}

CheckpointData ReadCheckpointFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  Check(static_cast<bool>(f), ErrorCode::kNotFound, "checkpoint not found: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return ParseCheckpoint(bytes);
}

namespace {

std::vector<std::pair<std::string, FTensor>> CollectParams(const ParamStore& store) {
  std::vector<std::pair<std::string, FTensor>> out;
  for (const FParam* p : store.All()) out.emplace_back(p->id, p->value);
  return out;
}

}  // namespace

CheckpointData ToCheckpoint(const TeacherModel& model, TeacherInput input) {
  CheckpointData d;
  d.kind = "teacher";
  d.metadata = nlohmann::json{{"geometry", GeometryJson(model.geometry())},
                              {"teacher_input", TeacherInputName(input)}}
                   .dump();
  d.params = CollectParams(model.params());
  return d;
}

CheckpointData ToCheckpoint(const StudentModel& model) {
  CheckpointData d;
  d.kind = "student";
  d.metadata = nlohmann::json{{"geometry", GeometryJson(model.geometry())},
                              {"mode", ModeName(model.mode())}}
                   .dump();
  d.params = CollectParams(model.params());
  return d;
}

void LoadParams(ParamStore& store, const CheckpointData& data) {
  std::map<std::string, const FTensor*> by_id;
  for (const auto& [id, t] : data.params) by_id[id] = &t;
  const auto params = store.All();
  Check(by_id.size() == params.size(), ErrorCode::kShapeMismatch,
        "checkpoint holds " + std::to_string(by_id.size()) +
            " parameters, model expects " + std::to_string(params.size()));
  for (FParam* p : params) {
    auto it = by_id.find(p->id);
    Check(it != by_id.end(), ErrorCode::kNotFound,
          "checkpoint is missing parameter " + p->id);
    Check(it->second->shape() == p->value.shape(), ErrorCode::kShapeMismatch,
          "parameter " + p->id + " has shape " + nn::ShapeString(it->second->shape()) +
              " in checkpoint, model expects " + nn::ShapeString(p->value.shape()));
    p->value = *it->second;
    p->ZeroGrad();
  }
}

namespace {

nlohmann::json ParseMetadata(const CheckpointData& d, const std::string& path) {
  try {
    return nlohmann::json::parse(d.metadata);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kCorrupt, "checkpoint metadata in " + path + " is not JSON: " + e.what());
  }
}

}  // namespace

LoadedTeacher LoadTeacher(const std::string& path) {
  CheckpointData d = ReadCheckpointFile(path);
  Check(d.kind == "teacher", ErrorCode::kInvalidArgument,
        path + " holds a '" + d.kind + "' checkpoint, expected 'teacher'");
  const auto meta = ParseMetadata(d, path);
  LoadedTeacher out{TeacherModel(GeometryFromJson(meta.at("geometry"))),
                    ParseTeacherInput(meta.value("teacher_input", "cropped")), d.hash};
  LoadParams(out.model.params(), d);
  return out;
}

LoadedStudent LoadStudent(const std::string& path) {
  CheckpointData d = ReadCheckpointFile(path);
  Check(d.kind == "student", ErrorCode::kInvalidArgument,
        path + " holds a '" + d.kind + "' checkpoint, expected 'student'");
  const auto meta = ParseMetadata(d, path);
  LoadedStudent out{StudentModel(GeometryFromJson(meta.at("geometry")),
                                 ParseMode(meta.at("mode").get<std::string>()), 1),
                    d.hash};
  LoadParams(out.model.params(), d);
  return out;
}

void SaveTeacher(const TeacherModel& model, TeacherInput input, const std::string& path) {
  WriteCheckpointFile(ToCheckpoint(model, input), path);
}

void SaveStudent(const StudentModel& model, const std::string& path) {
  WriteCheckpointFile(ToCheckpoint(model), path);
}

std::string_view TeacherInputName(TeacherInput input) {
  return input == TeacherInput::kCroppedComposite ? "cropped" : "whole";
}

TeacherInput ParseTeacherInput(std::string_view name) {
  if (name == "cropped") return TeacherInput::kCroppedComposite;
  if (name == "whole") return TeacherInput::kWholeComposite;
  Fail(ErrorCode::kInvalidArgument, "unknown teacher input '" + std::string(name) + "'");
}

}  // namespace compsearch
