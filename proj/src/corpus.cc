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

#include "compsearch/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "compsearch/common.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kLabelSlack = 1e-12;
constexpr int kSupersample = 4;

struct Point {
  double x, y;
};

bool InsidePolygon(const std::vector<Point>& poly, double x, double y) {
  bool inside = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

// Glyph outline centered at the origin, stretched, flipped to y down and
// rotated.
std::vector<Point> OrientedGlyph(Category category, double stretch, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<Point> out;
  for (auto [u, v] : GlyphPolygon(category)) {
    const double x = (u - 0.5) * stretch, y = -(v - 0.5);
    out.push_back({c * x - s * y, s * x + c * y});
  }
  return out;
}

std::array<double, 4> Bounds(const std::vector<Point>& poly) {
  std::array<double, 4> b = {poly[0].x, poly[0].y, poly[0].x, poly[0].y};
  for (const Point& p : poly) {
    b[0] = std::min(b[0], p.x);
    b[1] = std::min(b[1], p.y);
    b[2] = std::max(b[2], p.x);
    b[3] = std::max(b[3], p.y);
  }
  return b;
}

// The oriented glyph mapped onto the pixel rectangle of its box.
std::vector<Point> PlacedGlyph(const SceneSpec& scene, int size) {
  std::vector<Point> poly =
      OrientedGlyph(scene.category, scene.glyph_stretch, scene.fg_orientation);
  const auto b = Bounds(poly);
  const PixelRect r = ToPixels(scene.fg_box, size, size);
  const double kx = r.width() / (b[2] - b[0]);
  const double ky = r.height() / (b[3] - b[1]);
  for (Point& p : poly) {
    p.x = r.x0 + (p.x - b[0]) * kx;
    p.y = r.y0 + (p.y - b[1]) * ky;
  }
  return poly;
}

std::array<float, 3> GlyphColor(const SceneSpec& scene) {
  return HsvToRgb(scene.fg_hue, 0.9, 0.5);
}

double Frac(double v) { return v - std::floor(v); }

uint64_t SceneSeed(uint64_t corpus_seed, Category category, int id, int attempt) {
  return MixSeed(corpus_seed, MixSeed(static_cast<uint64_t>(category) + 1, id), attempt);
}

}  // namespace

json ToJson(const Box& box) {
  return {{"x", box.x}, {"y", box.y}, {"w", box.w}, {"h", box.h}};
}

Box BoxFromJson(const json& j) {
  Box b{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
        j.at("h").get<double>()};
  ValidateBox(b, "box");
  return b;
}

std::string_view CategoryName(Category category) {
  switch (category) {
    case Category::kHouse: return "house";
    case Category::kArrow: return "arrow";
    case Category::kTee: return "tee";
    case Category::kEll: return "ell";
    case Category::kFlag: return "flag";
    case Category::kTree: return "tree";
    case Category::kBolt: return "bolt";
    case Category::kChevron: return "chevron";
  }
  return "unknown";
}

Category ParseCategory(std::string_view name) {
  for (Category c : kAllCategories) {
    if (CategoryName(c) == name) return c;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown category '" + std::string(name) + "'");
}

double SceneSpec::GroundOrientation() const { return std::atan(ground_slope); }

json ToJson(const SceneSpec& s) {
  return {{"seed", s.seed},
          {"category", CategoryName(s.category)},
          {"scene_hue", s.scene_hue},
          {"ground_slope", s.ground_slope},
          {"fg_box", ToJson(s.fg_box)},
          {"fg_orientation", s.fg_orientation},
          {"fg_hue", s.fg_hue},
          {"sky_hue", s.sky_hue},
          {"glyph_stretch", s.glyph_stretch}};
}

SceneSpec SceneFromJson(const json& j) {
  SceneSpec s;
  s.seed = j.at("seed").get<uint64_t>();
  s.category = ParseCategory(j.at("category").get<std::string>());
  s.scene_hue = j.at("scene_hue").get<double>();
  s.ground_slope = j.at("ground_slope").get<double>();
  s.fg_box = BoxFromJson(j.at("fg_box"));
  s.fg_orientation = j.at("fg_orientation").get<double>();
  s.fg_hue = j.at("fg_hue").get<double>();
  s.sky_hue = j.at("sky_hue").get<double>();
  s.glyph_stretch = j.at("glyph_stretch").get<double>();
  return s;
}

std::vector<std::pair<double, double>> GlyphPolygon(Category category) {
  switch (category) {
    case Category::kHouse:
      return {{0, 0}, {1, 0}, {1, 0.6}, {0.5, 1}, {0, 0.6}};
    case Category::kArrow:
      return {{0.35, 0}, {0.65, 0}, {0.65, 0.55}, {1, 0.55}, {0.5, 1}, {0, 0.55}, {0.35, 0.55}};
    case Category::kTee:
      return {{0.35, 0}, {0.65, 0}, {0.65, 0.7}, {1, 0.7}, {1, 1}, {0, 1}, {0, 0.7}, {0.35, 0.7}};
    case Category::kEll:
      return {{0, 0}, {1, 0}, {1, 0.3}, {0.35, 0.3}, {0.35, 1}, {0, 1}};
    case Category::kFlag:
      return {{0, 0}, {0.2, 0}, {0.2, 0.45}, {1, 0.72}, {0.2, 1}, {0, 1}};
    case Category::kTree:
      return {{0.42, 0}, {0.58, 0}, {0.58, 0.25}, {1, 0.25}, {0.5, 1}, {0, 0.25}, {0.42, 0.25}};
    case Category::kBolt:
      return {{0.6, 1}, {0.15, 0.45}, {0.45, 0.45}, {0.3, 0}, {0.85, 0.58}, {0.55, 0.58}, {0.85, 1}};
    case Category::kChevron:
      return {{0, 0}, {0.5, 0.55}, {1, 0}, {1, 0.45}, {0.5, 1}, {0, 0.45}};
  }
  return {};
}

std::vector<float> GlyphCoverage(const SceneSpec& scene, int size) {
  const std::vector<Point> poly = PlacedGlyph(scene, size);
  const PixelRect r = ToPixels(scene.fg_box, size, size);
  std::vector<float> cov(static_cast<size_t>(size) * size, 0.0f);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          hits += InsidePolygon(poly, x + (sx + 0.5) / kSupersample,
                                y + (sy + 0.5) / kSupersample);
        }
      }
      cov[static_cast<size_t>(y) * size + x] =
          static_cast<float>(hits) / (kSupersample * kSupersample);
    }
  }
  return cov;
}

SceneSpec SampleScene(uint64_t seed, Category category, const SceneConfig& config) {
  Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.category = category;
  s.scene_hue = rng.Uniform();
  s.sky_hue = rng.Uniform();
  s.ground_slope = rng.Uniform(-0.5, 0.5);
  s.fg_orientation = s.GroundOrientation() +
                     rng.Uniform(-config.orientation_jitter, config.orientation_jitter);
  s.fg_hue = Frac(s.scene_hue + rng.Uniform(-config.hue_jitter, config.hue_jitter));
  s.glyph_stretch = std::exp(rng.Uniform(-config.max_log_stretch, config.max_log_stretch));

  const auto b = Bounds(OrientedGlyph(category, s.glyph_stretch, s.fg_orientation));
  const double aspect = (b[2] - b[0]) / (b[3] - b[1]);
  const double area = rng.Uniform(config.min_area, config.max_area);
  const int n = config.size;
  const int limit = n - 2;
  int wp = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect) * n)), 2, limit);
  int hp = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect) * n)), 2, limit);
  const double min_px = config.min_area * n * n;
  while (wp * hp < min_px) {
    if ((wp <= hp && wp < limit) || hp >= limit) {
      ++wp;
    } else {
      ++hp;
    }
  }
  const int x0 = 1 + rng.UniformInt(n - 1 - wp);
  const int y0 = 1 + rng.UniformInt(n - 1 - hp);
  s.fg_box = Box{static_cast<double>(x0) / n, static_cast<double>(y0) / n,
                 static_cast<double>(wp) / n, static_cast<double>(hp) / n};
  return s;
}

Raster RenderScene(const SceneSpec& s, const SceneConfig& config) {
  const int n = config.size;
  Raster img(n, n);
  const PixelRect box = ToPixels(s.fg_box, n, n);
  const double xc = 0.5 * (box.x0 + box.x1);
  const double yb = box.y1;
  const double norm = std::sqrt(1.0 + s.ground_slope * s.ground_slope);
  const auto sky = HsvToRgb(s.sky_hue, 0.25, 0.95);
  const auto ground = HsvToRgb(s.scene_hue, 0.5, 0.85);
  const auto stripe = HsvToRgb(s.scene_hue, 0.5, 0.72);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double depth = (py - (yb + s.ground_slope * (px - xc))) / norm;
      const auto& c = depth <= 0 ? sky : (std::fmod(depth, 6.0) < 2.0 ? stripe : ground);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  }

  Rng rng(MixSeed(s.seed, 0x636c7574));
  for (int i = 0; i < config.clutter; ++i) {
    const auto color = HsvToRgb(rng.Uniform(), 0.7, 0.7);
    const double radius = rng.Uniform(2.5, 5.0);
    double cx = 0, cy = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
      cx = rng.Uniform(0, n);
      cy = rng.Uniform(0, n);
      placed = cx + radius + 2 < box.x0 || cx - radius - 2 > box.x1 ||
               cy + radius + 2 < box.y0 || cy - radius - 2 > box.y1;
    }
    if (!placed) continue;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        if (dx * dx + dy * dy <= radius * radius) {
          for (int k = 0; k < 3; ++k) img.at(x, y, k) = color[k];
        }
      }
    }
  }

  const std::vector<float> cov = GlyphCoverage(s, n);
  const auto glyph = GlyphColor(s);
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      const float a = cov[static_cast<size_t>(y) * n + x];
      for (int k = 0; k < 3; ++k) {
        img.at(x, y, k) = a * glyph[k] + (1.0f - a) * img.at(x, y, k);
      }
    }
  }
  img.Quantize();
  return img;
}

std::pair<SceneSpec, Raster> GenerateScene(uint64_t seed, Category category,
                                           const SceneConfig& config) {
  SceneSpec s = SampleScene(seed, category, config);
  Raster r = RenderScene(s, config);
  return {s, std::move(r)};
}

std::string_view SourceName(SampleSource source) {
  switch (source) {
    case SampleSource::kSameImageGt: return "same_image_gt";
    case SampleSource::kMinedNegative: return "mined_negative";
    case SampleSource::kExtendedPositive: return "extended_positive";
    case SampleSource::kAugmented: return "augmented";
  }
  return "unknown";
}

SampleSource ParseSource(std::string_view name) {
  for (SampleSource s : {SampleSource::kSameImageGt, SampleSource::kMinedNegative,
                         SampleSource::kExtendedPositive, SampleSource::kAugmented}) {
    if (SourceName(s) == name) return s;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown sample source '" + std::string(name) + "'");
}

Sample SplitScene(const SceneSpec& scene, const Raster& raster, const SceneConfig& config) {
  const int n = config.size;
  Check(raster.width() == n && raster.height() == n, ErrorCode::kInvalidArgument,
        "scene raster must be " + std::to_string(n) + "x" + std::to_string(n));
  Sample out;
  out.query_box = scene.fg_box;
  out.background = raster;
  const auto mean = ChannelMean(raster);
  const PixelRect r = ToPixels(scene.fg_box, n, n);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      for (int k = 0; k < 3; ++k) out.background.at(x, y, k) = static_cast<float>(mean[k]);
    }
  }
  out.background.Quantize();

  const std::vector<float> cov = GlyphCoverage(scene, n);
  const auto glyph = GlyphColor(scene);
  Raster fg(r.width(), r.height(), 1.0f);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const float a = cov[static_cast<size_t>(y) * n + x];
      for (int k = 0; k < 3; ++k) {
        fg.at(x - r.x0, y - r.y0, k) = a * glyph[k] + (1.0f - a);
      }
    }
  }
  out.foreground = imaging::PadToSquare(fg);
  out.foreground.Quantize();
  out.label = 1;
  out.source = SampleSource::kSameImageGt;
  return out;
}

double HueDistance(double a, double b) {
  const double d = std::abs(Frac(a) - Frac(b));
  return std::min(d, 1.0 - d);
}

double AspectMismatch(double a, double b) { return std::max(a / b, b / a); }

bool OracleCompatible(const SceneSpec& bg, const SceneSpec& fg, const OracleConfig& c) {
  Check(bg.category == fg.category, ErrorCode::kInvalidArgument,
        "oracle compares scenes of one category, got " +
            std::string(CategoryName(bg.category)) + " and " +
            std::string(CategoryName(fg.category)));
  const bool hue = HueDistance(fg.fg_hue, bg.scene_hue) <= c.tau_hue + kLabelSlack;
  const bool geo =
      std::abs(fg.fg_orientation - bg.GroundOrientation()) <= c.tau_geo + kLabelSlack;
  const bool ar = AspectMismatch(fg.fg_box.AspectRatio(1, 1), bg.fg_box.AspectRatio(1, 1)) <=
                  c.tau_ar + kLabelSlack;
  return hue && geo && ar;
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTestS: return "test_s";
    case Split::kTestR: return "test_r";
  }
  return "unknown";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test_s" || name == "s") return Split::kTestS;
  if (name == "test_r" || name == "r") return Split::kTestR;
  Fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

json ToJson(const CategoryManifest& m) {
  json entries = json::array();
  for (const ManifestEntry& e : m.entries) {
    entries.push_back({{"bg_id", e.bg_id},
                       {"query_box", ToJson(e.query_box)},
                       {"gt_fg_id", e.gt_fg_id},
                       {"candidates", e.candidates},
                       {"labels", e.labels}});
  }
  json scenes = json::array();
  for (const auto& [id, s] : m.scenes) {
    json j = ToJson(s);
    j["id"] = id;
    scenes.push_back(std::move(j));
  }
  return {{"split", SplitName(m.split)},
          {"category", CategoryName(m.category)},
          {"entries", std::move(entries)},
          {"scenes", std::move(scenes)}};
}

CategoryManifest ManifestFromJson(const json& j) {
  CategoryManifest m;
  m.split = ParseSplit(j.at("split").get<std::string>());
  m.category = ParseCategory(j.at("category").get<std::string>());
  for (const json& e : j.at("entries")) {
    ManifestEntry entry;
    entry.bg_id = e.at("bg_id").get<int>();
    entry.query_box = BoxFromJson(e.at("query_box"));
    entry.gt_fg_id = e.at("gt_fg_id").get<int>();
    entry.candidates = e.at("candidates").get<std::vector<int>>();
    entry.labels = e.at("labels").get<std::vector<int>>();
    Check(entry.candidates.size() == entry.labels.size(), ErrorCode::kCorrupt,
          "manifest entry for background " + std::to_string(entry.bg_id) +
              " has mismatched candidates and labels");
    m.entries.push_back(std::move(entry));
  }
  for (const json& s : j.at("scenes")) m.scenes[s.at("id").get<int>()] = SceneFromJson(s);
  return m;
}

void CorpusConfig::Validate() const {
  Check(!categories.empty(), ErrorCode::kInvalidArgument, "corpus needs at least one category");
  Check(train_per_category >= 2, ErrorCode::kInvalidArgument,
        "train_per_category must be at least 2");
  Check(test_candidates >= 2, ErrorCode::kInvalidArgument, "test_candidates must be at least 2");
  Check(test_backgrounds >= 1 && test_backgrounds <= test_candidates,
        ErrorCode::kInvalidArgument,
        "test_backgrounds must lie in [1, test_candidates]");
  Check(test_r_backgrounds >= 0, ErrorCode::kInvalidArgument,
        "test_r_backgrounds must be non-negative");
  Check(max_regenerations >= 1, ErrorCode::kInvalidArgument,
        "max_regenerations must be positive");
  const int64_t needed = static_cast<int64_t>(train_per_category) + test_candidates +
                         test_r_backgrounds;
  Check(needed <= kSeedSpacePerCategory, ErrorCode::kInvalidArgument,
        "corpus asks for " + std::to_string(needed) +
            " scenes per category, the seed space holds " +
            std::to_string(kSeedSpacePerCategory));
  Check(scene.min_area >= 0.05 && scene.max_area <= 0.5 && scene.min_area <= scene.max_area,
        ErrorCode::kInvalidArgument, "object area range must lie within [0.05, 0.5]");
}

json ToJson(const CorpusConfig& c) {
  std::vector<std::string> cats;
  for (Category cat : c.categories) cats.emplace_back(CategoryName(cat));
  return {{"seed", c.seed},
          {"categories", cats},
          {"train_per_category", c.train_per_category},
          {"test_backgrounds", c.test_backgrounds},
          {"test_candidates", c.test_candidates},
          {"test_r_backgrounds", c.test_r_backgrounds},
          {"max_regenerations", c.max_regenerations},
          {"scene",
           {{"size", c.scene.size},
            {"min_area", c.scene.min_area},
            {"max_area", c.scene.max_area},
            {"hue_jitter", c.scene.hue_jitter},
            {"orientation_jitter", c.scene.orientation_jitter},
            {"max_log_stretch", c.scene.max_log_stretch},
            {"clutter", c.scene.clutter}}},
          {"oracle",
           {{"tau_hue", c.oracle.tau_hue},
            {"tau_geo", c.oracle.tau_geo},
            {"tau_ar", c.oracle.tau_ar}}}};
}

CorpusConfig CorpusConfigFromJson(const json& j) {
  CorpusConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("categories")) {
    c.categories.clear();
    for (const auto& name : j.at("categories")) {
      c.categories.push_back(ParseCategory(name.get<std::string>()));
    }
  }
  c.train_per_category = j.value("train_per_category", c.train_per_category);
  c.test_backgrounds = j.value("test_backgrounds", c.test_backgrounds);
  c.test_candidates = j.value("test_candidates", c.test_candidates);
  c.test_r_backgrounds = j.value("test_r_backgrounds", c.test_r_backgrounds);
  c.max_regenerations = j.value("max_regenerations", c.max_regenerations);
  c.workers = j.value("workers", c.workers);
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    c.scene.size = s.value("size", c.scene.size);
    c.scene.min_area = s.value("min_area", c.scene.min_area);
    c.scene.max_area = s.value("max_area", c.scene.max_area);
    c.scene.hue_jitter = s.value("hue_jitter", c.scene.hue_jitter);
    c.scene.orientation_jitter = s.value("orientation_jitter", c.scene.orientation_jitter);
    c.scene.max_log_stretch = s.value("max_log_stretch", c.scene.max_log_stretch);
    c.scene.clutter = s.value("clutter", c.scene.clutter);
  }
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    c.oracle.tau_hue = o.value("tau_hue", c.oracle.tau_hue);
    c.oracle.tau_geo = o.value("tau_geo", c.oracle.tau_geo);
    c.oracle.tau_ar = o.value("tau_ar", c.oracle.tau_ar);
  }
  return c;
}

const std::vector<CategoryData>& Corpus::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kTestS: return test_s;
    case Split::kTestR: return test_r;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown split");
}

const CategoryData& Corpus::ForegroundSource(Split s, size_t category_index) const {
  const auto& data = split(s == Split::kTestR ? Split::kTestS : s);
  Check(category_index < data.size(), ErrorCode::kNotFound, "category index out of range");
  return data[category_index];
}

namespace {

struct Generated {
  SceneSpec spec;
  Sample sample;
};

Generated Generate(uint64_t seed, Category category, const SceneConfig& config) {
  auto [spec, raster] = GenerateScene(seed, category, config);
  Sample sample = SplitScene(spec, raster, config);
  return {spec, std::move(sample)};
}

std::vector<int> Labels(const SceneSpec& bg, const std::vector<int>& candidates,
                        const std::map<int, SceneSpec>& scenes, const OracleConfig& oracle) {
  std::vector<int> labels;
  for (int id : candidates) labels.push_back(OracleCompatible(bg, scenes.at(id), oracle) ? 1 : 0);
  return labels;
}

int CountPositive(const std::vector<int>& labels) {
  return static_cast<int>(std::count(labels.begin(), labels.end(), 1));
}

void BuildCategory(const CorpusConfig& cfg, Category cat, CategoryData* train,
                   CategoryData* test_s, CategoryData* test_r) {
  const int n_train = cfg.train_per_category;
  const int n_cand = cfg.test_candidates;

  train->manifest = {Split::kTrain, cat, {}, {}};
  std::vector<Generated> generated(n_train);
  ParallelFor(n_train, cfg.workers, [&](int id) {
    generated[id] = Generate(SceneSeed(cfg.seed, cat, id, 0), cat, cfg.scene);
  });
  for (int id = 0; id < n_train; ++id) {
    Generated& g = generated[id];
    train->manifest.scenes[id] = g.spec;
    train->manifest.entries.push_back({id, g.spec.fg_box, id, {}, {}});
    train->backgrounds[id] = std::move(g.sample.background);
    train->foregrounds[id] = std::move(g.sample.foreground);
  }

  // Test foregrounds; the first test_backgrounds scenes also serve as
  // queries. A query whose candidates are all compatible is regenerated.
  std::vector<int> test_ids(n_cand);
  std::vector<int> attempts(n_cand, 0);
  for (int i = 0; i < n_cand; ++i) test_ids[i] = n_train + i;
  generated.assign(n_cand, {});
  ParallelFor(n_cand, cfg.workers, [&](int i) {
    generated[i] = Generate(SceneSeed(cfg.seed, cat, test_ids[i], 0), cat, cfg.scene);
  });
  test_s->manifest = {Split::kTestS, cat, {}, {}};
  auto& scenes = test_s->manifest.scenes;
  for (int i = 0; i < n_cand; ++i) scenes[test_ids[i]] = generated[i].spec;
  for (int q = 0; q < cfg.test_backgrounds; ++q) {
    while (CountPositive(Labels(scenes[test_ids[q]], test_ids, scenes, cfg.oracle)) == n_cand) {
      Check(++attempts[q] < cfg.max_regenerations, ErrorCode::kInvalidArgument,
            "could not generate a test background with an incompatible candidate");
      generated[q] = Generate(SceneSeed(cfg.seed, cat, test_ids[q], attempts[q]), cat, cfg.scene);
      scenes[test_ids[q]] = generated[q].spec;
      q = -1;  // labels of earlier queries may have changed
      break;
    }
  }
  for (int i = 0; i < n_cand; ++i) {
    test_s->foregrounds[test_ids[i]] = std::move(generated[i].sample.foreground);
  }
  for (int q = 0; q < cfg.test_backgrounds; ++q) {
    const int id = test_ids[q];
    test_s->manifest.entries.push_back(
        {id, scenes[id].fg_box, id, test_ids, Labels(scenes[id], test_ids, scenes, cfg.oracle)});
    test_s->backgrounds[id] = std::move(generated[q].sample.background);
  }

  // Fresh backgrounds sharing the test foregrounds; each needs at least one
  // compatible and one incompatible candidate.
  test_r->manifest = {Split::kTestR, cat, {}, {}};
  std::vector<Generated> fresh(cfg.test_r_backgrounds);
  std::vector<std::vector<int>> fresh_labels(cfg.test_r_backgrounds);
  ParallelFor(cfg.test_r_backgrounds, cfg.workers, [&](int b) {
    const int id = n_train + n_cand + b;
    for (int attempt = 0;; ++attempt) {
      Check(attempt < cfg.max_regenerations, ErrorCode::kInvalidArgument,
            "could not generate a test_r background with both compatible and "
            "incompatible candidates after " + std::to_string(cfg.max_regenerations) +
                " attempts");
      Generated g = Generate(SceneSeed(cfg.seed, cat, id, attempt), cat, cfg.scene);
      std::vector<int> labels = Labels(g.spec, test_ids, scenes, cfg.oracle);
      const int pos = CountPositive(labels);
      if (pos >= 1 && pos <= n_cand - 1) {
        fresh[b] = std::move(g);
        fresh_labels[b] = std::move(labels);
        return;
      }
    }
  });
  for (int b = 0; b < cfg.test_r_backgrounds; ++b) {
    const int id = n_train + n_cand + b;
    test_r->manifest.scenes[id] = fresh[b].spec;
    test_r->manifest.entries.push_back(
        {id, fresh[b].spec.fg_box, -1, test_ids, std::move(fresh_labels[b])});
    test_r->backgrounds[id] = std::move(fresh[b].sample.background);
  }
}

void WriteJsonFile(const json& j, const fs::path& path) {
  std::ofstream f(path);
  Check(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream f(path);
  Check(static_cast<bool>(f), ErrorCode::kNotFound, "missing " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kCorrupt, path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

Corpus BuildCorpus(const CorpusConfig& config) {
  config.Validate();
  Corpus corpus;
  corpus.config = config;
  for (Category cat : config.categories) {
    CategoryData train, test_s, test_r;
    BuildCategory(config, cat, &train, &test_s, &test_r);
    corpus.train.push_back(std::move(train));
    corpus.test_s.push_back(std::move(test_s));
    corpus.test_r.push_back(std::move(test_r));
  }
  return corpus;
}

void SaveCorpus(const Corpus& corpus, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  WriteJsonFile({{"format_version", 1}, {"config", ToJson(corpus.config)}},
                root / "corpus.json");
  for (Split split : {Split::kTrain, Split::kTestS, Split::kTestR}) {
    for (const CategoryData& data : corpus.split(split)) {
      const fs::path d = root / SplitName(split) / CategoryName(data.manifest.category);
      fs::create_directories(d);
      WriteJsonFile(ToJson(data.manifest), d / "manifest.json");
      for (const auto& [id, r] : data.backgrounds) {
        WritePng(r, (d / ("bg_" + std::to_string(id) + ".png")).string());
      }
      for (const auto& [id, r] : data.foregrounds) {
        WritePng(r, (d / ("fg_" + std::to_string(id) + ".png")).string());
      }
    }
  }
}

Corpus LoadCorpus(const std::string& dir) {
  const fs::path root(dir);
  const json top = ReadJsonFile(root / "corpus.json");
  Check(top.value("format_version", 0) == 1, ErrorCode::kVersionMismatch,
        "unsupported corpus format in " + dir);
  Corpus corpus;
  corpus.config = CorpusConfigFromJson(top.at("config"));
  for (Split split : {Split::kTrain, Split::kTestS, Split::kTestR}) {
    auto& out = split == Split::kTrain ? corpus.train
                                       : (split == Split::kTestS ? corpus.test_s : corpus.test_r);
    for (Category cat : corpus.config.categories) {
      const fs::path d = root / SplitName(split) / CategoryName(cat);
      CategoryData data;
      data.manifest = ManifestFromJson(ReadJsonFile(d / "manifest.json"));
      Check(data.manifest.split == split && data.manifest.category == cat, ErrorCode::kCorrupt,
            "manifest in " + d.string() + " does not match its directory");
      for (const ManifestEntry& e : data.manifest.entries) {
        data.backgrounds[e.bg_id] = ReadPng((d / ("bg_" + std::to_string(e.bg_id) + ".png")).string());
      }
      if (split != Split::kTestR) {
        for (const auto& [id, scene] : data.manifest.scenes) {
          data.foregrounds[id] = ReadPng((d / ("fg_" + std::to_string(id) + ".png")).string());
        }
      }
      out.push_back(std::move(data));
    }
  }
  return corpus;
}

}  // namespace compsearch
