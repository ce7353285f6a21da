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

#include "compsearch/service.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "compsearch/common.h"
#include "compsearch/imaging.h"
#include "compsearch/pipeline.h"
#include "httplib.h"

namespace compsearch {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int kDefaultTopK = 10;

// A request problem tied to one field; rendered as 400 or 404.
struct RequestError {
  int status;
  std::string field;
  std::string message;
};

void SendJson(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void SendError(httplib::Response& res, const RequestError& e) {
  SendJson(res, e.status, {{"error", {{"field", e.field}, {"message", e.message}}}});
}

double NumberField(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw RequestError{400, path + "." + key, "is required"};
  const json& v = obj.at(key);
  if (!v.is_number()) throw RequestError{400, path + "." + key, "must be a number"};
  return v.get<double>();
}

Box CheckBox(const Box& b, const std::string& field) {
  constexpr double kSlack = 1e-9;
  if (!(b.w > 0)) throw RequestError{400, field + ".w", "must be positive"};
  if (!(b.h > 0)) throw RequestError{400, field + ".h", "must be positive"};
  if (!(b.x >= 0)) throw RequestError{400, field + ".x", "must be non-negative"};
  if (!(b.y >= 0)) throw RequestError{400, field + ".y", "must be non-negative"};
  if (!(b.x + b.w <= 1 + kSlack)) throw RequestError{400, field + ".w", "x + w exceeds 1"};
  if (!(b.y + b.h <= 1 + kSlack)) throw RequestError{400, field + ".h", "y + h exceeds 1"};
  return b;
}

Box BoxField(const json& body, const std::string& field) {
  if (!body.contains(field)) throw RequestError{400, field, "is required"};
  const json& j = body.at(field);
  if (!j.is_object()) throw RequestError{400, field, "must be an object with x, y, w, h"};
  return CheckBox({NumberField(j, "x", field), NumberField(j, "y", field),
                   NumberField(j, "w", field), NumberField(j, "h", field)},
                  field);
}

// "x,y,w,h" as used in composite URLs.
Box BoxParam(const std::string& text) {
  std::vector<double> v;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    char* end = nullptr;
    const double d = std::strtod(part.c_str(), &end);
    if (part.empty() || end != part.c_str() + part.size()) {
      throw RequestError{400, "box", "expected four comma-separated numbers"};
    }
    v.push_back(d);
  }
  if (v.size() != 4) throw RequestError{400, "box", "expected four comma-separated numbers"};
  return CheckBox({v[0], v[1], v[2], v[3]}, "box");
}

std::string BoxText(const Box& b) {
  std::ostringstream s;
  s.precision(17);
  s << b.x << ',' << b.y << ',' << b.w << ',' << b.h;
  return s.str();
}

int IntParam(const std::string& text, const std::string& field) {
  char* end = nullptr;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw RequestError{400, field, "must be an integer"};
  }
  return static_cast<int>(v);
}

}  // namespace

struct SearchService::Student {
  StudentModel model;
  uint64_t hash;
  std::map<std::string, ForegroundIndex> indexes;
  std::map<std::string, std::unique_ptr<StudentRanker>> rankers;
};

SearchService::SearchService(Corpus corpus, const RankOptions& rank, int max_top_k)
    : corpus_(std::move(corpus)), rank_(rank), max_top_k_(max_top_k) {
  Check(max_top_k >= 1 && max_top_k <= 50, ErrorCode::kInvalidArgument,
        "max_top_k must lie in [1, 50]");
  for (size_t i = 0; i < corpus_.test_s.size(); ++i) {
    CategoryView view;
    view.test_s = &corpus_.test_s[i];
    if (i < corpus_.test_r.size()) view.test_r = &corpus_.test_r[i];
    categories_[std::string(CategoryName(corpus_.test_s[i].manifest.category))] = view;
  }
}

SearchService::~SearchService() = default;

void SearchService::AddStudent(StudentModel model, uint64_t checkpoint_hash,
                               std::map<std::string, ForegroundIndex> indexes) {
  const InteractionMode mode = model.mode();
  auto s = std::unique_ptr<Student>(
      new Student{std::move(model), checkpoint_hash, std::move(indexes), {}});
  for (const auto& [name, view] : categories_) {
    const auto it = s->indexes.find(name);
    Check(it != s->indexes.end(), ErrorCode::kNotFound,
          "no " + std::string(ModeName(mode)) + " index for category " + name);
    CheckIndexMatches(it->second, checkpoint_hash, mode);
    s->rankers[name] = std::make_unique<StudentRanker>(s->model, it->second);
  }
  students_[mode] = std::move(s);
}

std::unique_ptr<SearchService> SearchService::Load(const AppConfig& cfg) {
  const Paths paths{cfg.workdir};
  auto service = std::make_unique<SearchService>(LoadCorpus(paths.corpus()), cfg.rank,
                                                 cfg.serve.max_top_k);
  for (InteractionMode mode : kAllModes) {
    if (!std::filesystem::exists(paths.student(mode))) continue;
    LoadedStudent student = LoadStudent(paths.student(mode));
    std::map<std::string, ForegroundIndex> indexes;
    for (const auto& [name, view] : service->categories_) {
      indexes[name] = LoadIndex(paths.index(mode, name));
    }
    service->AddStudent(std::move(student.model), student.hash, std::move(indexes));
  }
  Check(service->students_.count(cfg.mode) > 0, ErrorCode::kNotFound,
        "no " + std::string(ModeName(cfg.mode)) + " student in " + cfg.workdir);
  service->default_mode_ = cfg.mode;
  return service;
}

const SearchService::CategoryView* SearchService::FindCategory(const std::string& name) const {
  const auto it = categories_.find(name);
  return it == categories_.end() ? nullptr : &it->second;
}

const Raster* SearchService::FindBackground(const CategoryView& view, int id) const {
  for (const CategoryData* d : {view.test_s, view.test_r}) {
    if (!d) continue;
    const auto it = d->backgrounds.find(id);
    if (it != d->backgrounds.end()) return &it->second;
  }
  return nullptr;
}

void SearchService::Mount(httplib::Server& server) const {
  auto guarded = [](auto handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const RequestError& e) {
        SendError(res, e);
      } catch (const Error& e) {
        const int status = e.code() == ErrorCode::kNotFound ? 404 : 400;
        SendJson(res, status, {{"error", {{"field", ""}, {"message", e.what()}}}});
      } catch (const std::exception& e) {
        SendJson(res, 500, {{"error", {{"field", ""}, {"message", e.what()}}}});
      }
    };
  };

  server.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::vector<std::string> modes;
    for (const auto& [mode, s] : students_) modes.emplace_back(ModeName(mode));
    SendJson(res, 200, {{"status", "ok"}, {"modes", modes}});
  }));

  server.Get("/categories", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& [name, view] : categories_) {
      size_t backgrounds = view.test_s->backgrounds.size();
      if (view.test_r) backgrounds += view.test_r->backgrounds.size();
      out.push_back({{"name", name},
                     {"backgrounds", backgrounds},
                     {"foregrounds", view.test_s->foregrounds.size()}});
    }
    SendJson(res, 200, {{"categories", out}});
  }));

  server.Get("/backgrounds/:category",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string name = req.path_params.at("category");
               const CategoryView* view = FindCategory(name);
               if (!view) throw RequestError{404, "category", "unknown category " + name};
               json out = json::array();
               for (const CategoryData* d : {view->test_s, view->test_r}) {
                 if (!d) continue;
                 for (const ManifestEntry& e : d->manifest.entries) {
                   out.push_back({{"id", e.bg_id},
                                  {"split", SplitName(d->manifest.split)},
                                  {"query_box", ToJson(e.query_box)}});
                 }
               }
               SendJson(res, 200, {{"category", name}, {"backgrounds", out}});
             }));

  server.Post("/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body;
    Raster upload;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("request")) throw RequestError{400, "request", "is required"};
      body = json::parse(req.get_file_value("request").content, nullptr, false);
      if (req.has_file("background")) {
        try {
          const std::string& png = req.get_file_value("background").content;
          upload = DecodePng(std::vector<uint8_t>(png.begin(), png.end()));
        } catch (const Error& e) {
          throw RequestError{400, "background", e.what()};
        }
      }
    } else {
      body = json::parse(req.body, nullptr, false);
    }
    if (body.is_discarded() || !body.is_object()) {
      throw RequestError{400, "body", "must be a JSON object"};
    }
    if (!body.contains("category") || !body.at("category").is_string()) {
      throw RequestError{400, "category", "is required and must be a string"};
    }
    const std::string category = body.at("category").get<std::string>();
    const CategoryView* view = FindCategory(category);
    if (!view) throw RequestError{404, "category", "unknown category " + category};

    InteractionMode mode = default_mode_;
    if (body.contains("mode")) {
      if (!body.at("mode").is_string()) throw RequestError{400, "mode", "must be a string"};
      try {
        mode = ParseMode(body.at("mode").get<std::string>());
      } catch (const Error& e) {
        throw RequestError{400, "mode", e.what()};
      }
    }
    const auto student = students_.find(mode);
    if (student == students_.end()) {
      throw RequestError{404, "mode", "no model loaded for " + std::string(ModeName(mode))};
    }

    int top_k = kDefaultTopK;
    if (body.contains("top_k")) {
      if (!body.at("top_k").is_number_integer()) {
        throw RequestError{400, "top_k", "must be an integer"};
      }
      top_k = body.at("top_k").get<int>();
      if (top_k < 1 || top_k > max_top_k_) {
        throw RequestError{400, "top_k",
                           "must lie in [1, " + std::to_string(max_top_k_) + "]"};
      }
    }
    const Box box = BoxField(body, "query_box");

    const Raster* background = nullptr;
    json bg_id = nullptr;
    Raster resized;
    if (!upload.empty()) {
      const int size = student->second->model.geometry().input_size;
      resized = upload.width() == size && upload.height() == size
                    ? upload
                    : imaging::CropAndResize(upload, {0, 0, 1, 1}, size, size);
      background = &resized;
    } else {
      if (!body.contains("background_id") || !body.at("background_id").is_number_integer()) {
        throw RequestError{400, "background_id",
                           "is required (an integer) unless a background file is uploaded"};
      }
      const int id = body.at("background_id").get<int>();
      background = FindBackground(*view, id);
      if (!background) {
        throw RequestError{404, "background_id", "unknown background " + std::to_string(id)};
      }
      bg_id = id;
    }

    const auto start = Clock::now();
    const RankedResult ranked =
        student->second->rankers.at(category)->Rank(*background, box, rank_);
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

    json results = json::array();
    const size_t n = std::min(ranked.ranked.size(), static_cast<size_t>(top_k));
    for (size_t i = 0; i < n; ++i) {
      const ScoredId& r = ranked.ranked[i];
      json entry = {{"fg_id", r.fg_id}, {"score", r.score}, {"composite", nullptr}};
      if (!bg_id.is_null()) {
        entry["composite"] = "/composite/" + std::to_string(bg_id.get<int>()) + "/" +
                             std::to_string(r.fg_id) + "?category=" + category +
                             "&box=" + BoxText(box);
      }
      results.push_back(std::move(entry));
    }
    json out = {{"category", category},
                {"mode", ModeName(mode)},
                {"background_id", bg_id},
                {"query_box", ToJson(box)},
                {"results", results},
                {"excluded", ranked.excluded.size()},
                {"note", ranked.note}};
    // Timing travels in a header so identical requests get identical bodies.
    res.set_header("Server-Timing", "rank;dur=" + std::to_string(ms));
    SendJson(res, 200, out);
  }));

  server.Get("/composite/:bg/:fg",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               std::string category;
               if (req.has_param("category")) {
                 category = req.get_param_value("category");
               } else if (categories_.size() == 1) {
                 category = categories_.begin()->first;
               } else {
                 throw RequestError{400, "category", "is required when serving several"};
               }
               const CategoryView* view = FindCategory(category);
               if (!view) throw RequestError{404, "category", "unknown category " + category};
               if (!req.has_param("box")) throw RequestError{400, "box", "is required"};
               const Box box = BoxParam(req.get_param_value("box"));
               const int bg = IntParam(req.path_params.at("bg"), "bg");
               const int fg = IntParam(req.path_params.at("fg"), "fg");
               const Raster* background = FindBackground(*view, bg);
               if (!background) {
                 throw RequestError{404, "bg", "unknown background " + std::to_string(bg)};
               }
               const auto it = view->test_s->foregrounds.find(fg);
               if (it == view->test_s->foregrounds.end()) {
                 throw RequestError{404, "fg", "unknown foreground " + std::to_string(fg)};
               }
               const std::vector<uint8_t> png =
                   EncodePng(imaging::Composite(*background, box, it->second));
               res.status = 200;
               res.set_content(std::string(png.begin(), png.end()), "image/png");
             }));
}

void Serve(const SearchService& service, const ServeConfig& cfg) {
  int port = cfg.port;
  if (const char* env = std::getenv(kPortEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    Check(*env != '\0' && *end == '\0' && v > 0 && v < 65536, ErrorCode::kInvalidArgument,
          std::string(kPortEnv) + " must be a port number, got '" + env + "'");
    port = static_cast<int>(v);
  }
  httplib::Server server;
  server.new_task_queue = [threads = cfg.threads] { return new httplib::ThreadPool(threads); };
  service.Mount(server);
  Check(server.bind_to_port(cfg.host, port), ErrorCode::kIo,
        "cannot bind " + cfg.host + ":" + std::to_string(port));
  LogEvent("serve", "listening", {{"host", cfg.host}, {"port", port}});
  Check(server.listen_after_bind(), ErrorCode::kIo, "server stopped unexpectedly");
}

}  // namespace compsearch
