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

#ifndef COMPSEARCH_RNG_H_
#define COMPSEARCH_RNG_H_

#include <cstdint>
#include <random>
#include <vector>

namespace compsearch {

// splitmix64 finalizer; used to derive independent stream seeds.
uint64_t MixSeed(uint64_t a, uint64_t b);
uint64_t MixSeed(uint64_t a, uint64_t b, uint64_t c);

// Portable random stream: the conversions below do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n).
  int UniformInt(int n);
  double Normal();
  template <typename It>
  void Shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) {
      const int j = UniformInt(static_cast<int>(n));
      std::swap(first[n - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace compsearch

#endif  // COMPSEARCH_RNG_H_
