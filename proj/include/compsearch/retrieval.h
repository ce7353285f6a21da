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

#ifndef COMPSEARCH_RETRIEVAL_H_
#define COMPSEARCH_RETRIEVAL_H_

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "compsearch/corpus.h"
#include "compsearch/models.h"
#include "json.hpp"

namespace compsearch {

inline constexpr double kDefaultArThreshold = 1.2;

struct IndexEntry {
  int fg_id = 0;
  double aspect_ratio = 1.0;  // pixel width / height of the tight glyph box
  FTensor feature;            // F^f [h, w, c] for map modes, mean F^f [c] otherwise
};

// Precomputed foreground features of one category's catalog.
struct ForegroundIndex {
  std::string category;
  InteractionMode mode = InteractionMode::kMapConcatLocal;
  uint64_t checkpoint_hash = 0;
  std::vector<int> feature_shape;
  std::vector<IndexEntry> entries;

  const IndexEntry* Find(int fg_id) const;
};

// One E^f forward pass per foreground.
ForegroundIndex BuildIndex(const std::map<int, Raster>& catalog, const StudentModel& model,
                           const std::string& category, uint64_t checkpoint_hash,
                           int batch = 32);

// Binary index file, little endian:
//   magic "CSINDEX1" | u32 version | u32 len + category | u32 mode row |
//   u64 checkpoint hash | u32 rank | rank x i32 dims | u32 count |
//   count x (i32 id | f64 aspect ratio | f32 feature data) |
//   u64 FNV-1a of every preceding byte.
inline constexpr uint32_t kIndexVersion = 1;
void SaveIndex(const ForegroundIndex& index, const std::string& path);
ForegroundIndex LoadIndex(const std::string& path);
// Throws unless the index was built by the checkpoint with `hash`.
void CheckIndexMatches(const ForegroundIndex& index, uint64_t hash, InteractionMode mode);

// Keeps an aspect ratio iff max(a / b, b / a) <= threshold, inclusive.
bool ArCompatible(double box_aspect, double fg_aspect, double threshold);
// Ids of entries compatible with the box (pixel aspect in an image of the
// given size).
std::vector<int> ArFilter(const Box& query_box, int image_w, int image_h,
                          const std::vector<std::pair<int, double>>& aspects,
                          double threshold = kDefaultArThreshold);

struct ScoredId {
  int fg_id;
  double score;
  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

struct RankedResult {
  std::vector<ScoredId> ranked;  // score descending, id ascending on ties
  std::vector<int> excluded;     // removed by the aspect-ratio filter
  std::string note;              // why the ranking is empty, if it is
};

// Sorts by descending score, ascending id on ties.
void SortRanking(std::vector<ScoredId>& ranked);

struct RankOptions {
  double ar_threshold = kDefaultArThreshold;  // <= 0 disables the filter
  int image_size = 64;
};

// Ranks an index for a query. The background is encoded once per query;
// every candidate then costs only the pairwise interaction. For the
// concatenation modes the foreground half of E^d's first convolution is
// linear in the foreground feature alone, so it is precomputed per entry.
class StudentRanker {
 public:
  StudentRanker(const StudentModel& model, const ForegroundIndex& index);

  RankedResult Rank(const Raster& background, const Box& query_box,
                    const RankOptions& options = {}) const;
  // Scores for the given index positions, in order.
  std::vector<double> Score(const Raster& background, const Box& query_box,
                            const std::vector<size_t>& positions) const;

  int64_t background_encodes() const { return bg_encodes_.load(); }

 private:
  struct Query;
  Query Encode(const Raster& background, const Box& query_box) const;
  std::vector<double> ScoreEncoded(const Query& q, const std::vector<size_t>& positions) const;

  const StudentModel& model_;
  const ForegroundIndex& index_;
  std::vector<FTensor> fg_projection_;  // per entry, concatenation modes only
  FTensor fg_weight_;                   // foreground half of E^d's first kernel
  FTensor bg_weight_;                   // background half
  mutable std::atomic<int64_t> bg_encodes_{0};
};

// Composites every candidate and runs the teacher on each crop.
RankedResult RankTeacher(const Raster& background, const Box& query_box,
                         const std::map<int, Raster>& catalog, const TeacherModel& teacher,
                         TeacherInput input, const RankOptions& options = {}, int batch = 32);

// Unbatched reference: Features + Score per candidate.
RankedResult RankStudentReference(const Raster& background, const Box& query_box,
                                  const std::map<int, Raster>& catalog,
                                  const StudentModel& model, const RankOptions& options = {});

struct BenchConfig {
  std::vector<int> sizes = {200, 2000};
  int repeats = 50;
  int teacher_repeats = 50;
  uint64_t seed = 1;
};

struct BenchRow {
  std::string model;
  int n = 0;
  double mean_ms = 0;
  int64_t params = 0;
  int repeats = 0;
};

struct BenchModels {
  const TeacherModel* teacher = nullptr;
  TeacherInput teacher_input = TeacherInput::kCroppedComposite;
  const StudentModel* encoder = nullptr;  // similarity student
  const StudentModel* student = nullptr;  // full student
};

// Mean wall time per query over synthetic catalogs of each size.
std::vector<BenchRow> RunBench(const BenchModels& models, const BenchConfig& cfg,
                               const SceneConfig& scene = {});
nlohmann::json ToJson(const std::vector<BenchRow>& rows);

}  // namespace compsearch

#endif  // COMPSEARCH_RETRIEVAL_H_
