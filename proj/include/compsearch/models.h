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

#ifndef COMPSEARCH_MODELS_H_
#define COMPSEARCH_MODELS_H_

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compsearch/graph.h"
#include "compsearch/imaging.h"
#include "compsearch/ops.h"

namespace compsearch {

using FTensor = nn::Tensor<float>;
using FGraph = nn::Graph<float>;
using FParam = nn::Param<float>;
using nn::Var;

// Ways of combining background and foreground features; numbered after the
// ablation rows they reproduce.
enum class InteractionMode {
  kSimGlobal = 1,        // cosine(global bg vector, fg vector)
  kSimLocal = 2,         // cosine(local bg vector, fg vector)
  kVecCls = 3,           // classifier on [global bg vector, fg vector]
  kVecConcatGlobal = 4,  // distilled [global bg vector, fg vector]
  kVecConcatLocal = 5,   // distilled [local bg vector, fg vector]
  kMapConcatGlobal = 6,  // distilled [global bg map, fg map]
  kMapCompose = 7,       // distilled fg map composed into local bg map
  kMapConcatLocal = 8,   // distilled [local bg map, fg map]; the full model
};

inline constexpr InteractionMode kAllModes[] = {
    InteractionMode::kSimGlobal,       InteractionMode::kSimLocal,
    InteractionMode::kVecCls,          InteractionMode::kVecConcatGlobal,
    InteractionMode::kVecConcatLocal,  InteractionMode::kMapConcatGlobal,
    InteractionMode::kMapCompose,      InteractionMode::kMapConcatLocal};

std::string_view ModeName(InteractionMode mode);
InteractionMode ParseMode(std::string_view name);
int ModeRow(InteractionMode mode);
bool IsSimilarityMode(InteractionMode mode);
bool IsMapMode(InteractionMode mode);
bool UsesLocalBackground(InteractionMode mode);
// Whether the distillation loss applies (every classifier mode but kVecCls).
bool DistillsFeatures(InteractionMode mode);

struct ModelGeometry {
  int input_size = 64;
  std::vector<int> channels = {16, 32, 48, 64};

  int feature_size() const { return input_size >> channels.size(); }
  int feature_channels() const { return channels.back(); }
  std::vector<int> feature_shape() const {
    return {feature_size(), feature_size(), feature_channels()};
  }
};

// Network inputs are channel values mapped from [0, 1] to [-1, 1].
FTensor ImagesToTensor(std::span<const Raster> images, int size);

// Owns parameters with stable addresses.
class ParamStore {
 public:
  FParam& Add(std::string id, FTensor init);
  std::vector<FParam*> All();
  std::vector<const FParam*> All() const;
  int64_t Count() const;
  void ZeroGrad();

 private:
  std::deque<FParam> params_;
};

// conv3x3 -> relu -> maxpool2 per block.
class Backbone {
 public:
  Backbone(ParamStore& store, const std::string& prefix,
           const ModelGeometry& geometry, uint64_t seed);

  Var Forward(FGraph& g, Var images);
  Var Forward(FGraph& g, Var images) const;

 private:
  template <typename Self>
  static Var ForwardImpl(Self& self, FGraph& g, Var images);

  std::vector<FParam*> weights_;
  std::vector<FParam*> biases_;
};

// Composite discriminator: backbone, global average pooling, 1-logit head.
class TeacherModel {
 public:
  explicit TeacherModel(const ModelGeometry& geometry = {}, uint64_t seed = 1);
  TeacherModel(const TeacherModel&) = delete;
  TeacherModel& operator=(const TeacherModel&) = delete;
  TeacherModel(TeacherModel&&) = default;

  const ModelGeometry& geometry() const { return geometry_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Feature map F_c [n, h, w, c].
  Var Features(FGraph& g, Var images);
  Var Features(FGraph& g, Var images) const;
  // Compatibility probabilities [n].
  Var Scores(FGraph& g, Var features);
  Var Scores(FGraph& g, Var features) const;

  struct Output {
    FTensor feature;  // [h, w, c]
    double score;
  };
  Output Forward(const Raster& crop) const;
  std::vector<Output> ForwardBatch(std::span<const Raster> crops) const;

  void ZeroHead();

 private:
  ModelGeometry geometry_;
  ParamStore store_;
  Backbone backbone_;
  FParam* head_w_;
  FParam* head_b_;
};

// Which image the teacher sees.
enum class TeacherInput { kCroppedComposite, kWholeComposite };

// Builds the teacher input for a (background, query box, foreground) triple
// at `size` x `size`.
Raster TeacherCrop(const Raster& background, const Box& query_box,
                   const Raster& foreground, TeacherInput input, int size);
Raster TeacherCrop(const Raster& composite, const Box& query_box,
                   TeacherInput input, int size);

// RoIAlign of a normalized box over a whole-image feature map. Output cell
// (i, j) averages a grid of bilinear samples inside its bin. A sampling
// ratio of 0 picks ceil(bin extent) samples per axis, which reduces to one
// centered sample whenever bins are at most one feature pixel wide.
nn::SpatialPlan RoiAlignPlan(int in_h, int in_w, const Box& box, int out_h,
                             int out_w, int sampling_ratio = 0);

// Plans for composing a foreground map into the query-box region of a
// local background map. `relative_box` is the query box in crop-box
// coordinates. Returns {background plan, foreground plan}; the composition
// is Resample(bg, first) + Resample(fg, second).
std::pair<nn::SpatialPlan, nn::SpatialPlan> ComposePlans(int h, int w,
                                                          const Box& relative_box);

// Query box expressed in the coordinates of `crop`.
Box RelativeBox(const Box& query_box, const Box& crop);

// The tensors a student computes for one background/foreground pair.
struct FeatureBundle {
  FTensor global_bg_map;  // F^b       [h, w, c]
  FTensor fg_map;         // F^f       [h, w, c]
  FTensor global_bg_vec;  // mean F^b  [c]
  FTensor fg_vec;         // mean F^f  [c]
  FTensor local_bg_vec;   // mean of the RoIAligned map [c]
  FTensor local_bg_map;   // RoIAligned F^b over the crop box [h, w, c]
  Box query_box;
  Box crop_box;
};

// Batched student outputs on a graph.
struct StudentOutputs {
  Var global_bg_vec;  // [nb, c]
  Var local_bg_vec;   // [nb, c]
  Var fg_vec;         // [nf, c]
  // Per pair; invalid for similarity modes.
  Var distilled;      // [np, h, w, c] for map modes, [np, 1, 1, c] otherwise
  Var scores;         // [np] probabilities
  Var similarity;     // [np] cosine, similarity modes only
};

// Background encoder, foreground encoder, distillation module and
// classifier head. Encoders do not share weights with each other or with
// the teacher.
class StudentModel {
 public:
  StudentModel(const ModelGeometry& geometry, InteractionMode mode,
               uint64_t seed);
  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;
  StudentModel(StudentModel&&) = default;

  InteractionMode mode() const { return mode_; }
  const ModelGeometry& geometry() const { return geometry_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  int64_t EncoderParamCount() const;

  Var EncodeBackground(FGraph& g, Var images);
  Var EncodeBackground(FGraph& g, Var images) const;
  Var EncodeForeground(FGraph& g, Var images);
  Var EncodeForeground(FGraph& g, Var images) const;

  // Per-image encoder outputs feeding the pairwise interaction.
  struct Encoded {
    Var bg_maps;     // [nb, h, w, c]
    Var local_maps;  // [nb, h, w, c]
    Var bg_vecs;     // [nb, c]
    Var local_vecs;  // [nb, c]
    Var fg_maps;     // [nf, h, w, c]
    Var fg_vecs;     // [nf, c]
    std::vector<Box> relative_boxes;  // query box inside the crop box, per bg
  };

  // E^d input for each (pair_bg[i], pair_fg[i]).
  Var Interaction(FGraph& g, const Encoded& enc,
                  const std::vector<int>& pair_bg,
                  const std::vector<int>& pair_fg) const;

  Var Distill(FGraph& g, Var interaction);
  Var Distill(FGraph& g, Var interaction) const;
  Var Head(FGraph& g, Var distilled);
  Var Head(FGraph& g, Var distilled) const;

  // Full batched forward. `query_boxes` has one entry per background image.
  StudentOutputs Forward(FGraph& g, Var bg_images, Var fg_images,
                         const std::vector<Box>& query_boxes,
                         const std::vector<int>& pair_bg,
                         const std::vector<int>& pair_fg);
  StudentOutputs Forward(FGraph& g, Var bg_images, Var fg_images,
                         const std::vector<Box>& query_boxes,
                         const std::vector<int>& pair_bg,
                         const std::vector<int>& pair_fg) const;

  FeatureBundle Features(const Raster& bg, const Box& query_box,
                         const Raster& fg) const;

  // Distilled map (or vector) for classifier modes, cosine for similarity
  // modes.
  struct InteractResult {
    std::optional<FTensor> distilled;
    std::optional<double> similarity;
  };
  InteractResult Interact(const FeatureBundle& bundle) const;
  // In [0, 1]; similarity modes map cosine s to (s + 1) / 2.
  double Score(const FeatureBundle& bundle) const;

  // Weight accessors used by the retrieval fast path.
  const FParam& distill_weight(int layer) const { return *distill_w_[layer]; }
  const FParam& distill_bias(int layer) const { return *distill_b_[layer]; }
  const FParam& head_weight() const { return *head_w_; }
  const FParam& head_bias() const { return *head_b_; }

  void ZeroHead();

 private:
  template <typename Self>
  static StudentOutputs ForwardImpl(Self& self, FGraph& g, Var bg_images,
                                    Var fg_images,
                                    const std::vector<Box>& query_boxes,
                                    const std::vector<int>& pair_bg,
                                    const std::vector<int>& pair_fg);

  ModelGeometry geometry_;
  InteractionMode mode_;
  ParamStore store_;
  Backbone bg_encoder_;
  Backbone fg_encoder_;
  std::vector<FParam*> distill_w_;
  std::vector<FParam*> distill_b_;
  FParam* head_w_ = nullptr;
  FParam* head_b_ = nullptr;
};

// Versioned binary checkpoint. Layout (little endian):
//   magic "CSCKPT01" | u32 version | u32 len + kind string |
//   u32 len + metadata JSON | u32 count |
//   count x (u32 len + id | u32 rank | rank x i32 dims | f32 data) |
//   u64 FNV-1a of every preceding byte.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::string kind;      // "teacher" or "student"
  std::string metadata;  // JSON: geometry, mode, teacher input
  std::vector<std::pair<std::string, FTensor>> params;
  uint64_t hash = 0;
};

std::vector<uint8_t> SerializeCheckpoint(const CheckpointData& data,
                                         uint32_t version = kCheckpointVersion);
CheckpointData ParseCheckpoint(const std::vector<uint8_t>& bytes);
void WriteCheckpointFile(const CheckpointData& data, const std::string& path);
CheckpointData ReadCheckpointFile(const std::string& path);

CheckpointData ToCheckpoint(const TeacherModel& model,
                            TeacherInput input = TeacherInput::kCroppedComposite);
CheckpointData ToCheckpoint(const StudentModel& model);
// Copies parameters by id; shapes and the id set must match exactly.
void LoadParams(ParamStore& store, const CheckpointData& data);

struct LoadedTeacher {
  TeacherModel model;
  TeacherInput input;
  uint64_t hash;
};
struct LoadedStudent {
  StudentModel model;
  uint64_t hash;
};
LoadedTeacher LoadTeacher(const std::string& path);
LoadedStudent LoadStudent(const std::string& path);
void SaveTeacher(const TeacherModel& model, TeacherInput input,
                 const std::string& path);
void SaveStudent(const StudentModel& model, const std::string& path);

std::string_view TeacherInputName(TeacherInput input);
TeacherInput ParseTeacherInput(std::string_view name);

}  // namespace compsearch

#endif  // COMPSEARCH_MODELS_H_
