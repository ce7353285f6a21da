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

#ifndef COMPSEARCH_TRAINING_H_
#define COMPSEARCH_TRAINING_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "compsearch/losses.h"
#include "compsearch/models.h"
#include "compsearch/sampling.h"
#include "json.hpp"

namespace compsearch {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamStore& store, const AdamConfig& config);
  // Applies one update from the accumulated gradients.
  void Step();
  int64_t steps() const { return t_; }

 private:
  std::vector<FParam*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 30;
  int batch = 16;               // composites per teacher step
  int student_backgrounds = 4;  // backgrounds per student step
  // Mined negatives used per background and epoch, rotating through the
  // list; 0 uses all of them every epoch.
  int negatives_per_epoch = 0;
  uint64_t seed = 1;
  AdamConfig adam;
  LossConfig losses;
  bool realworld = false;  // random query-box padding
  double pad_fraction = 0.3;
  int workers = 1;

  void Validate() const;
};

nlohmann::json ToJson(const TrainConfig& c);
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base = {});

struct EpochStats {
  int epoch = 0;
  int steps = 0;
  double loss = 0;
  double trp = 0;
  double kd = 0;
  double cls = 0;
  double seconds = 0;
};

struct TrainReport {
  std::string kind;
  std::vector<EpochStats> epochs;
  double wall_seconds = 0;
  std::string checkpoint;

  nlohmann::json ToJson() const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct CompositeExample {
  const Raster* background;
  Box query_box;
  const Raster* foreground;
  int label;
};

// Trains a composite classifier with binary cross entropy. `examples`
// supplies each epoch's samples; they are shuffled with the epoch seed.
TrainReport TrainCompositeClassifier(
    TeacherModel& model, TeacherInput input,
    const std::function<std::vector<CompositeExample>(int epoch)>& examples,
    const TrainConfig& cfg, const std::string& kind, const EpochCallback& on_epoch = {});

// Builds an epoch's teacher examples from triplets.
std::vector<CompositeExample> TeacherExamples(const TrainingSet& set, const TrainConfig& cfg,
                                              int epoch);

TrainReport TrainTeacher(TeacherModel& model, TeacherInput input, const TrainingSet& set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct StepLosses {
  double loss = 0;
  double trp = 0;
  double kd = 0;
  double cls = 0;
};

// Student optimization against a frozen teacher.
class StudentTrainer {
 public:
  StudentTrainer(StudentModel& model, const TeacherModel& teacher, TeacherInput input,
                 const TrainingSet& set, const TrainConfig& cfg);

  // Forward and backward over the given triplets; gradients are left in
  // the student's parameters. Applies an optimizer update when `update`.
  StepLosses Step(const std::vector<int>& triplets, int epoch, int step, bool update = true);
  EpochStats RunEpoch(int epoch);

 private:
  struct Pair {
    int triplet;
    const TripletItem* item;
    int label;
  };
  std::vector<const TripletItem*> Negatives(const TrainTriplet& t, int epoch) const;
  const FTensor& TeacherFeature(const TrainTriplet& t, const TripletItem& item, const Box& box);

  StudentModel& model_;
  const TeacherModel& teacher_;
  TeacherInput input_;
  const TrainingSet& set_;
  TrainConfig cfg_;
  Adam adam_;
  bool use_kd_;
  bool use_cls_;
  std::map<std::tuple<int, int, Augmentation, uint64_t>, FTensor> teacher_cache_;
};

TrainReport TrainStudent(StudentModel& model, const TeacherModel& teacher, TeacherInput input,
                         const TrainingSet& set, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {});

}  // namespace compsearch

#endif  // COMPSEARCH_TRAINING_H_
