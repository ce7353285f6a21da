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

#include "compsearch/retrieval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "compsearch/common.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;

constexpr char kIndexMagic[8] = {'C', 'S', 'I', 'N', 'D', 'E', 'X', '1'};
constexpr size_t kScoreChunk = 256;

template <typename V>
void Put(std::vector<uint8_t>& out, const V& v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(V));
}

class Cursor {
 public:
  Cursor(const std::vector<uint8_t>& bytes, size_t end) : bytes_(bytes), end_(end) {}
  template <typename V>
  V Get() {
    V v;
    Take(&v, sizeof(V));
    return v;
  }
  void Take(void* dst, size_t n) {
    Check(pos_ + n <= end_, ErrorCode::kCorrupt, "index file truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  size_t pos() const { return pos_; }

 private:
  const std::vector<uint8_t>& bytes_;
  size_t end_;
  size_t pos_ = 0;
};

bool IsConcatMode(InteractionMode mode) {
  return !IsSimilarityMode(mode) && mode != InteractionMode::kMapCompose;
}

double Cosine(const float* u, const float* v, int n) {
  double uv = 0, uu = 0, vv = 0;
  for (int i = 0; i < n; ++i) {
    uv += static_cast<double>(u[i]) * v[i];
    uu += static_cast<double>(u[i]) * u[i];
    vv += static_cast<double>(v[i]) * v[i];
  }
  Check(uu > 0 && vv > 0, ErrorCode::kNumerical, "cosine of a zero feature vector");
  return uv / std::sqrt(uu * vv);
}

// The input-channel slice [begin, begin + count) of a [k, k, cin, cout] kernel.
FTensor KernelSlice(const FTensor& w, int begin, int count) {
  const int k0 = w.dim(0), k1 = w.dim(1), cin = w.dim(2), cout = w.dim(3);
  FTensor out({k0, k1, count, cout});
  for (int a = 0; a < k0 * k1; ++a) {
    for (int ci = 0; ci < count; ++ci) {
      const float* src = w.data() + (static_cast<size_t>(a) * cin + begin + ci) * cout;
      std::copy(src, src + cout, out.data() + (static_cast<size_t>(a) * count + ci) * cout);
    }
  }
  return out;
}

FTensor Convolve(const FTensor& x, const FTensor& w, const FTensor& bias, int pad) {
  FGraph g(false);
  return g.value(nn::Conv2d(g, g.Constant(x), g.Constant(w), g.Constant(bias), 1, pad));
}

}  // namespace

const IndexEntry* ForegroundIndex::Find(int fg_id) const {
  for (const IndexEntry& e : entries) {
    if (e.fg_id == fg_id) return &e;
  }
  return nullptr;
}

ForegroundIndex BuildIndex(const std::map<int, Raster>& catalog, const StudentModel& model,
                           const std::string& category, uint64_t checkpoint_hash, int batch) {
  ForegroundIndex index;
  index.category = category;
  index.mode = model.mode();
  index.checkpoint_hash = checkpoint_hash;
  const int size = model.geometry().input_size;
  const bool maps = IsMapMode(model.mode());
  index.feature_shape = maps ? model.geometry().feature_shape()
                             : std::vector<int>{model.geometry().feature_channels()};
  std::vector<std::pair<int, const Raster*>> items;
  for (const auto& [id, r] : catalog) items.push_back({id, &r});
  for (size_t begin = 0; begin < items.size(); begin += batch) {
    const size_t end = std::min(items.size(), begin + batch);
    std::vector<Raster> inputs;
    for (size_t i = begin; i < end; ++i) {
      inputs.push_back(imaging::CropAndResize(*items[i].second, Box{0, 0, 1, 1}, size, size));
    }
    FGraph g(false);
    Var f = model.EncodeForeground(g, g.Constant(ImagesToTensor(inputs, size)));
    if (!maps) f = nn::GlobalAvgPool(g, f);
    const FTensor& fv = g.value(f);
    const size_t per = fv.size() / fv.dim(0);
    for (size_t i = begin; i < end; ++i) {
      const float* src = fv.data() + (i - begin) * per;
      index.entries.push_back({items[i].first, imaging::GlyphAspectRatio(*items[i].second),
                               FTensor(index.feature_shape, std::vector<float>(src, src + per))});
    }
  }
  return index;
}

void SaveIndex(const ForegroundIndex& index, const std::string& path) {
  std::vector<uint8_t> out(kIndexMagic, kIndexMagic + sizeof(kIndexMagic));
  Put(out, kIndexVersion);
  Put(out, static_cast<uint32_t>(index.category.size()));
  out.insert(out.end(), index.category.begin(), index.category.end());
  Put(out, static_cast<uint32_t>(ModeRow(index.mode)));
  Put(out, index.checkpoint_hash);
  Put(out, static_cast<uint32_t>(index.feature_shape.size()));
  for (int d : index.feature_shape) Put(out, static_cast<int32_t>(d));
  Put(out, static_cast<uint32_t>(index.entries.size()));
  for (const IndexEntry& e : index.entries) {
    Check(e.feature.shape() == index.feature_shape, ErrorCode::kShapeMismatch,
          "index entry " + std::to_string(e.fg_id) + " has shape " +
              nn::ShapeString(e.feature.shape()));
    Put(out, static_cast<int32_t>(e.fg_id));
    Put(out, e.aspect_ratio);
    const auto* p = reinterpret_cast<const uint8_t*>(e.feature.data());
    out.insert(out.end(), p, p + e.feature.size() * sizeof(float));
  }
  Put(out, Fnv1a(out.data(), out.size()));
  std::ofstream f(path, std::ios::binary);
  Check(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

ForegroundIndex LoadIndex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  Check(static_cast<bool>(f), ErrorCode::kNotFound, "index not found: " + path);
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  Check(bytes.size() > sizeof(kIndexMagic) + 8 &&
            std::memcmp(bytes.data(), kIndexMagic, sizeof(kIndexMagic)) == 0,
        ErrorCode::kCorrupt, path + " is not an index file");
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  Cursor c(bytes, bytes.size() - 8);
  char magic[8];
  c.Take(magic, 8);
  const auto version = c.Get<uint32_t>();
  Check(version == kIndexVersion, ErrorCode::kVersionMismatch,
        "index version " + std::to_string(version) + " is not supported");
  Check(stored == Fnv1a(bytes.data(), bytes.size() - 8), ErrorCode::kCorrupt,
        "index checksum mismatch in " + path);
  ForegroundIndex index;
  index.category.resize(c.Get<uint32_t>());
  c.Take(index.category.data(), index.category.size());
  const auto row = c.Get<uint32_t>();
  Check(row >= 1 && row <= 8, ErrorCode::kCorrupt, "index has unknown mode " + std::to_string(row));
  index.mode = static_cast<InteractionMode>(row);
  index.checkpoint_hash = c.Get<uint64_t>();
  const auto rank = c.Get<uint32_t>();
  Check(rank >= 1 && rank <= 3, ErrorCode::kCorrupt, "index has bad feature rank");
  for (uint32_t i = 0; i < rank; ++i) index.feature_shape.push_back(c.Get<int32_t>());
  const size_t per = nn::NumElements(index.feature_shape);
  const auto count = c.Get<uint32_t>();
  for (uint32_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.fg_id = c.Get<int32_t>();
    e.aspect_ratio = c.Get<double>();
    std::vector<float> data(per);
    c.Take(data.data(), per * sizeof(float));
    e.feature = FTensor(index.feature_shape, std::move(data));
    index.entries.push_back(std::move(e));
  }
  Check(c.pos() == bytes.size() - 8, ErrorCode::kCorrupt, "index has trailing bytes");
  return index;
}

void CheckIndexMatches(const ForegroundIndex& index, uint64_t hash, InteractionMode mode) {
  Check(index.checkpoint_hash == hash, ErrorCode::kInvalidArgument,
        "index for '" + index.category + "' was built from a different checkpoint; rebuild it");
  Check(index.mode == mode, ErrorCode::kInvalidArgument,
        "index for '" + index.category + "' holds features for mode " +
            std::string(ModeName(index.mode)) + ", model uses " + std::string(ModeName(mode)));
}

bool ArCompatible(double box_aspect, double fg_aspect, double threshold) {
  return std::max(box_aspect / fg_aspect, fg_aspect / box_aspect) <= threshold + 1e-12;
}

std::vector<int> ArFilter(const Box& query_box, int image_w, int image_h,
                          const std::vector<std::pair<int, double>>& aspects, double threshold) {
  const double box_aspect = query_box.AspectRatio(image_w, image_h);
  std::vector<int> out;
  for (const auto& [id, ar] : aspects) {
    if (threshold <= 0 || ArCompatible(box_aspect, ar, threshold)) out.push_back(id);
  }
  return out;
}

void SortRanking(std::vector<ScoredId>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.fg_id < b.fg_id;
  });
}

struct StudentRanker::Query {
  FTensor bg_map;     // [1, h, w, c]
  FTensor local_map;  // [1, h, w, c]
  FTensor bg_vec;     // [c]
  FTensor local_vec;  // [c]
  Box relative_box;
  FTensor bg_projection;  // concatenation modes: background half + bias
};

StudentRanker::StudentRanker(const StudentModel& model, const ForegroundIndex& index)
    : model_(model), index_(index) {
  const bool maps = IsMapMode(model.mode());
  const std::vector<int> expected = maps ? model.geometry().feature_shape()
                                         : std::vector<int>{model.geometry().feature_channels()};
  Check(index.mode == model.mode(), ErrorCode::kInvalidArgument,
        "index mode " + std::string(ModeName(index.mode)) + " does not match model mode " +
            std::string(ModeName(model.mode())));
  Check(index.feature_shape == expected, ErrorCode::kShapeMismatch,
        "index feature shape " + nn::ShapeString(index.feature_shape) + " vs model " +
            nn::ShapeString(expected));
  if (!IsConcatMode(model.mode()) || index.entries.empty()) return;
  const FTensor& w = model.distill_weight(0).value;
  const int c = model.geometry().feature_channels();
  bg_weight_ = KernelSlice(w, 0, c);
  fg_weight_ = KernelSlice(w, c, c);
  const int side = maps ? model.geometry().feature_size() : 1;
  const int n = static_cast<int>(index.entries.size());
  FTensor stacked({n, side, side, c});
  const size_t per = static_cast<size_t>(side) * side * c;
  for (int i = 0; i < n; ++i) {
    std::copy(index.entries[i].feature.data(), index.entries[i].feature.data() + per,
              stacked.data() + i * per);
  }
  const FTensor proj = Convolve(stacked, fg_weight_, FTensor({c}), maps ? 1 : 0);
  for (int i = 0; i < n; ++i) {
    fg_projection_.emplace_back(std::vector<int>{side, side, c},
                                std::vector<float>(proj.data() + i * per, proj.data() + (i + 1) * per));
  }
}

StudentRanker::Query StudentRanker::Encode(const Raster& background, const Box& query_box) const {
  ValidateBox(query_box, "query box");
  const ModelGeometry& geo = model_.geometry();
  const int size = geo.input_size;
  const int fs = geo.feature_size();
  const int c = geo.feature_channels();
  Query q;
  FGraph g(false);
  Var fb = model_.EncodeBackground(
      g, g.Constant(ImagesToTensor(std::span<const Raster>(&background, 1), size)));
  ++bg_encodes_;
  const Box crop = imaging::ComputeCropBox(query_box, size, size).box;
  Var local = nn::Resample(g, fb, {RoiAlignPlan(fs, fs, crop, fs, fs)});
  q.bg_map = g.value(fb);
  q.local_map = g.value(local);
  q.bg_vec = g.value(nn::GlobalAvgPool(g, fb)).Reshaped({c});
  q.local_vec = g.value(nn::GlobalAvgPool(g, local)).Reshaped({c});
  q.relative_box = RelativeBox(query_box, crop);
  if (IsConcatMode(model_.mode())) {
    FTensor anchor;
    switch (model_.mode()) {
      case InteractionMode::kMapConcatGlobal: anchor = q.bg_map; break;
      case InteractionMode::kMapConcatLocal: anchor = q.local_map; break;
      case InteractionMode::kVecConcatLocal: anchor = q.local_vec.Reshaped({1, 1, 1, c}); break;
      default: anchor = q.bg_vec.Reshaped({1, 1, 1, c}); break;
    }
    q.bg_projection = Convolve(anchor, bg_weight_, model_.distill_bias(0).value,
                               IsMapMode(model_.mode()) ? 1 : 0);
  }
  return q;
}

std::vector<double> StudentRanker::ScoreEncoded(const Query& q,
                                                const std::vector<size_t>& positions) const {
  std::vector<double> scores;
  scores.reserve(positions.size());
  const InteractionMode mode = model_.mode();
  const int c = model_.geometry().feature_channels();
  if (IsSimilarityMode(mode)) {
    const FTensor& anchor = mode == InteractionMode::kSimGlobal ? q.bg_vec : q.local_vec;
    for (size_t p : positions) {
      scores.push_back((Cosine(anchor.data(), index_.entries[p].feature.data(), c) + 1.0) / 2.0);
    }
    return scores;
  }
  for (size_t begin = 0; begin < positions.size(); begin += kScoreChunk) {
    const size_t end = std::min(positions.size(), begin + kScoreChunk);
    const int n = static_cast<int>(end - begin);
    FGraph g(false);
    Var d;
    if (IsConcatMode(mode)) {
      const size_t per = q.bg_projection.size();
      std::vector<int> shape = q.bg_projection.shape();
      shape[0] = n;
      FTensor h1(shape);
      for (int i = 0; i < n; ++i) {
        const float* fg = fg_projection_[positions[begin + i]].data();
        float* dst = h1.data() + i * per;
        for (size_t k = 0; k < per; ++k) dst[k] = std::max(0.0f, q.bg_projection[k] + fg[k]);
      }
      const int pad = IsMapMode(mode) ? 1 : 0;
      d = nn::Relu(g, nn::Conv2d(g, g.Constant(std::move(h1)), g.Parameter(model_.distill_weight(1)),
                                 g.Parameter(model_.distill_bias(1)), 1, pad));
    } else {
      // Spatial composition depends on the box, so nothing is precomputed.
      const std::vector<int>& fshape = index_.feature_shape;
      const size_t per = nn::NumElements(fshape);
      FTensor fg({n, fshape[0], fshape[1], fshape[2]});
      for (int i = 0; i < n; ++i) {
        const float* src = index_.entries[positions[begin + i]].feature.data();
        std::copy(src, src + per, fg.data() + i * per);
      }
      StudentModel::Encoded enc;
      enc.local_maps = g.Constant(q.local_map);
      enc.fg_maps = g.Constant(std::move(fg));
      enc.relative_boxes = {q.relative_box};
      std::vector<int> pair_fg(n);
      for (int i = 0; i < n; ++i) pair_fg[i] = i;
      d = model_.Distill(g, model_.Interaction(g, enc, std::vector<int>(n, 0), pair_fg));
    }
    const FTensor& s = g.value(model_.Head(g, d));
    for (int i = 0; i < n; ++i) scores.push_back(s[i]);
  }
  return scores;
}

std::vector<double> StudentRanker::Score(const Raster& background, const Box& query_box,
                                         const std::vector<size_t>& positions) const {
  return ScoreEncoded(Encode(background, query_box), positions);
}

RankedResult StudentRanker::Rank(const Raster& background, const Box& query_box,
                                 const RankOptions& options) const {
  const Query q = Encode(background, query_box);
  const double box_aspect = query_box.AspectRatio(options.image_size, options.image_size);
  RankedResult result;
  std::vector<size_t> positions;
  for (size_t i = 0; i < index_.entries.size(); ++i) {
    const IndexEntry& e = index_.entries[i];
    if (options.ar_threshold > 0 &&
        !ArCompatible(box_aspect, e.aspect_ratio, options.ar_threshold)) {
      result.excluded.push_back(e.fg_id);
    } else {
      positions.push_back(i);
    }
  }
  std::sort(result.excluded.begin(), result.excluded.end());
  if (positions.empty()) {
    result.note = "no foreground passes the aspect-ratio filter";
    return result;
  }
  const std::vector<double> scores = ScoreEncoded(q, positions);
  for (size_t i = 0; i < positions.size(); ++i) {
    result.ranked.push_back({index_.entries[positions[i]].fg_id, scores[i]});
  }
  SortRanking(result.ranked);
  return result;
}

namespace {

template <typename ScoreFn>
RankedResult RankCatalog(const Box& query_box, const std::map<int, Raster>& catalog,
                         const RankOptions& options, ScoreFn score) {
  RankedResult result;
  const double box_aspect = query_box.AspectRatio(options.image_size, options.image_size);
  std::vector<int> ids;
  std::vector<const Raster*> fgs;
  for (const auto& [id, r] : catalog) {
    if (options.ar_threshold > 0 &&
        !ArCompatible(box_aspect, imaging::GlyphAspectRatio(r), options.ar_threshold)) {
      result.excluded.push_back(id);
    } else {
      ids.push_back(id);
      fgs.push_back(&r);
    }
  }
  if (ids.empty()) {
    result.note = "no foreground passes the aspect-ratio filter";
    return result;
  }
  const std::vector<double> scores = score(fgs);
  for (size_t i = 0; i < ids.size(); ++i) result.ranked.push_back({ids[i], scores[i]});
  SortRanking(result.ranked);
  return result;
}

}  // namespace

RankedResult RankTeacher(const Raster& background, const Box& query_box,
                         const std::map<int, Raster>& catalog, const TeacherModel& teacher,
                         TeacherInput input, const RankOptions& options, int batch) {
  ValidateBox(query_box, "query box");
  return RankCatalog(query_box, catalog, options, [&](const std::vector<const Raster*>& fgs) {
    const int size = teacher.geometry().input_size;
    std::vector<double> scores;
    for (size_t begin = 0; begin < fgs.size(); begin += batch) {
      const size_t end = std::min(fgs.size(), begin + batch);
      std::vector<Raster> crops;
      for (size_t i = begin; i < end; ++i) {
        crops.push_back(TeacherCrop(background, query_box, *fgs[i], input, size));
      }
      for (const auto& o : teacher.ForwardBatch(crops)) scores.push_back(o.score);
    }
    return scores;
  });
}

RankedResult RankStudentReference(const Raster& background, const Box& query_box,
                                  const std::map<int, Raster>& catalog,
                                  const StudentModel& model, const RankOptions& options) {
  return RankCatalog(query_box, catalog, options, [&](const std::vector<const Raster*>& fgs) {
    const int size = model.geometry().input_size;
    std::vector<double> scores;
    for (const Raster* fg : fgs) {
      const Raster input = imaging::CropAndResize(*fg, Box{0, 0, 1, 1}, size, size);
      scores.push_back(model.Score(model.Features(background, query_box, input)));
    }
    return scores;
  });
}

std::vector<BenchRow> RunBench(const BenchModels& models, const BenchConfig& cfg,
                               const SceneConfig& scene) {
  Check(!cfg.sizes.empty() && cfg.repeats >= 1 && cfg.teacher_repeats >= 1,
        ErrorCode::kInvalidArgument, "bench needs sizes and positive repeat counts");
  const int max_n = *std::max_element(cfg.sizes.begin(), cfg.sizes.end());
  std::map<int, Raster> catalog;
  for (int i = 0; i < max_n; ++i) {
    auto [spec, raster] =
        GenerateScene(MixSeed(cfg.seed, 0x62656e6368, i), Category::kHouse, scene);
    catalog[i] = SplitScene(spec, raster, scene).foreground;
  }
  auto [qspec, qraster] = GenerateScene(MixSeed(cfg.seed, 0x7175), Category::kHouse, scene);
  const Sample query = SplitScene(qspec, qraster, scene);
  RankOptions options;
  options.ar_threshold = 0;
  options.image_size = scene.size;

  using Clock = std::chrono::steady_clock;
  auto time_ms = [](int repeats, const std::function<void()>& fn) {
    fn();  // warm-up
    const auto start = Clock::now();
    for (int r = 0; r < repeats; ++r) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count() / repeats;
  };

  std::vector<BenchRow> rows;
  for (int n : cfg.sizes) {
    std::map<int, Raster> subset(catalog.begin(), std::next(catalog.begin(), n));
    if (models.teacher) {
      const double ms = time_ms(cfg.teacher_repeats, [&] {
        RankTeacher(query.background, query.query_box, subset, *models.teacher,
                    models.teacher_input, options);
      });
      rows.push_back({"teacher", n, ms, models.teacher->params().Count(), cfg.teacher_repeats});
    }
    for (const auto& [name, model] :
         {std::pair<std::string, const StudentModel*>{"encoder", models.encoder},
          {"student", models.student}}) {
      if (!model) continue;
      const ForegroundIndex index = BuildIndex(subset, *model, "bench", 0);
      const StudentRanker ranker(*model, index);
      const double ms = time_ms(cfg.repeats, [&] {
        ranker.Rank(query.background, query.query_box, options);
      });
      const int64_t params = name == "encoder" ? model->EncoderParamCount() : model->params().Count();
      rows.push_back({name, n, ms, params, cfg.repeats});
    }
  }
  return rows;
}

json ToJson(const std::vector<BenchRow>& rows) {
  json out = json::array();
  for (const BenchRow& r : rows) {
    out.push_back({{"model", r.model},
                   {"N", r.n},
                   {"mean_ms", r.mean_ms},
                   {"params", r.params},
                   {"repeats", r.repeats}});
  }
  return out;
}

}  // namespace compsearch
