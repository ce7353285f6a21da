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

#ifndef COMPSEARCH_CORPUS_H_
#define COMPSEARCH_CORPUS_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "compsearch/imaging.h"
#include "json.hpp"

namespace compsearch {

// Glyph shapes. None has a rotational symmetry, so orientation is always
// readable from the pixels.
enum class Category { kHouse, kArrow, kTee, kEll, kFlag, kTree, kBolt, kChevron };

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::kHouse, Category::kArrow, Category::kTee,  Category::kEll,
    Category::kFlag,  Category::kTree,  Category::kBolt, Category::kChevron};

nlohmann::json ToJson(const Box& box);
Box BoxFromJson(const nlohmann::json& j);

std::string_view CategoryName(Category category);
Category ParseCategory(std::string_view name);

struct SceneSpec {
  uint64_t seed = 0;
  Category category = Category::kHouse;
  double scene_hue = 0.0;     // hue of the ground
  double ground_slope = 0.0;  // dy/dx of the ground line in pixels
  Box fg_box;
  double fg_orientation = 0.0;  // radians, image coordinates (y down)
  double fg_hue = 0.0;
  double sky_hue = 0.0;         // distractor
  double glyph_stretch = 1.0;   // horizontal stretch before rotation

  // Orientation at which a glyph stands upright on this scene's ground.
  double GroundOrientation() const;
};

nlohmann::json ToJson(const SceneSpec& scene);
SceneSpec SceneFromJson(const nlohmann::json& j);

struct SceneConfig {
  int size = 64;
  double min_area = 0.05;
  double max_area = 0.25;
  // Half-widths of the deviations of a scene's own object from a perfect
  // fit; they keep same-image pairs well inside the oracle tolerances.
  double hue_jitter = 0.03;
  double orientation_jitter = 0.08;
  double max_log_stretch = 0.4;
  int clutter = 3;
};

struct OracleConfig {
  double tau_hue = 0.12;
  double tau_geo = 0.35;  // radians
  double tau_ar = 1.2;
};

// Polygon of `category` in a unit square, y up.
std::vector<std::pair<double, double>> GlyphPolygon(Category category);

// Per-pixel glyph coverage in [0, 1] for a scene, row-major size x size.
std::vector<float> GlyphCoverage(const SceneSpec& scene, int size);

SceneSpec SampleScene(uint64_t seed, Category category, const SceneConfig& config);
Raster RenderScene(const SceneSpec& scene, const SceneConfig& config);
std::pair<SceneSpec, Raster> GenerateScene(uint64_t seed, Category category,
                                           const SceneConfig& config = {});

enum class SampleSource { kSameImageGt, kMinedNegative, kExtendedPositive, kAugmented };
std::string_view SourceName(SampleSource source);
SampleSource ParseSource(std::string_view name);

struct Sample {
  Raster background;
  Box query_box;
  Raster foreground;
  int label = 1;
  SampleSource source = SampleSource::kSameImageGt;
};

// Background with the object's box filled by the whole-raster channel mean
// (box interior included), and the object on white, padded to a square.
Sample SplitScene(const SceneSpec& scene, const Raster& raster,
                  const SceneConfig& config = {});

double HueDistance(double a, double b);
// Aspect-ratio mismatch max(a / b, b / a).
double AspectMismatch(double a, double b);

// Compatibility of placing the object of `fg_scene` into the query box of
// `bg_scene`: hue, orientation against the ground and aspect ratio must all
// be within tolerance (inclusive).
bool OracleCompatible(const SceneSpec& bg_scene, const SceneSpec& fg_scene,
                      const OracleConfig& config = {});

enum class Split { kTrain, kTestS, kTestR };
std::string_view SplitName(Split split);
Split ParseSplit(std::string_view name);

struct ManifestEntry {
  int bg_id = 0;
  Box query_box;
  int gt_fg_id = -1;  // -1 when the split has no same-image ground truth
  std::vector<int> candidates;
  std::vector<int> labels;  // oracle labels aligned with `candidates`
};

struct CategoryManifest {
  Split split = Split::kTrain;
  Category category = Category::kHouse;
  std::vector<ManifestEntry> entries;
  std::map<int, SceneSpec> scenes;  // every scene whose images live here
};

nlohmann::json ToJson(const CategoryManifest& manifest);
CategoryManifest ManifestFromJson(const nlohmann::json& j);

struct CategoryData {
  CategoryManifest manifest;
  std::map<int, Raster> backgrounds;
  std::map<int, Raster> foregrounds;
};

struct CorpusConfig {
  uint64_t seed = 1;
  std::vector<Category> categories = {kAllCategories.begin(), kAllCategories.end()};
  int train_per_category = 300;
  int test_backgrounds = 10;
  int test_candidates = 50;
  int test_r_backgrounds = 10;
  int max_regenerations = 1000;
  int workers = 1;
  SceneConfig scene;
  OracleConfig oracle;

  void Validate() const;
};

nlohmann::json ToJson(const CorpusConfig& config);
CorpusConfig CorpusConfigFromJson(const nlohmann::json& j);

// Scene ids are unique within a category across all splits.
inline constexpr int kSeedSpacePerCategory = 1 << 20;

struct Corpus {
  CorpusConfig config;
  std::vector<CategoryData> train;
  std::vector<CategoryData> test_s;
  // Backgrounds only; candidates are the test_s foregrounds.
  std::vector<CategoryData> test_r;

  const std::vector<CategoryData>& split(Split s) const;
  // Scene and foreground lookup for a split (test_r resolves to test_s).
  const CategoryData& ForegroundSource(Split s, size_t category_index) const;
};

Corpus BuildCorpus(const CorpusConfig& config);

// corpus.json, then <split>/<category>/{manifest.json, bg_<id>.png, fg_<id>.png}.
void SaveCorpus(const Corpus& corpus, const std::string& dir);
Corpus LoadCorpus(const std::string& dir);

}  // namespace compsearch

#endif  // COMPSEARCH_CORPUS_H_
