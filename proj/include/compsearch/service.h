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

// Read-only HTTP retrieval service over frozen artifacts.
#ifndef COMPSEARCH_SERVICE_H_
#define COMPSEARCH_SERVICE_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "compsearch/config.h"
#include "compsearch/corpus.h"
#include "compsearch/models.h"
#include "compsearch/retrieval.h"

namespace httplib {
class Server;
}

namespace compsearch {

class SearchService {
 public:
  SearchService(Corpus corpus, const RankOptions& rank, int max_top_k);
  SearchService(const SearchService&) = delete;
  SearchService& operator=(const SearchService&) = delete;
  ~SearchService();

  // Registers a student with one index per corpus category.
  void AddStudent(StudentModel model, uint64_t checkpoint_hash,
                  std::map<std::string, ForegroundIndex> indexes);

  // Loads the corpus, every student checkpoint in the work directory and
  // its index files. The configured default mode must be among them.
  static std::unique_ptr<SearchService> Load(const AppConfig& cfg);

  // Routes:
  //   GET  /healthz
  //   GET  /categories
  //   GET  /backgrounds/{category}
  //   POST /query                     JSON, or multipart with a "request"
  //                                   field and a "background" PNG file
  //   GET  /composite/{bg}/{fg}?box=x,y,w,h[&category=name]
  void Mount(httplib::Server& server) const;

  InteractionMode default_mode() const { return default_mode_; }
  void set_default_mode(InteractionMode mode) { default_mode_ = mode; }

 private:
  struct Student;
  struct CategoryView {
    const CategoryData* test_s = nullptr;
    const CategoryData* test_r = nullptr;
  };

  const CategoryView* FindCategory(const std::string& name) const;
  const Raster* FindBackground(const CategoryView& view, int id) const;

  Corpus corpus_;
  RankOptions rank_;
  int max_top_k_;
  InteractionMode default_mode_ = InteractionMode::kMapConcatLocal;
  std::map<std::string, CategoryView> categories_;
  std::map<InteractionMode, std::unique_ptr<Student>> students_;
};

// Binds and serves until the process ends. The port comes from the
// COMPSEARCH_PORT environment variable when set.
void Serve(const SearchService& service, const ServeConfig& cfg);

}  // namespace compsearch

#endif  // COMPSEARCH_SERVICE_H_
