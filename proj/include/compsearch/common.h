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

#ifndef COMPSEARCH_COMMON_H_
#define COMPSEARCH_COMMON_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace compsearch {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNotFound,
  kCorrupt,
  kVersionMismatch,
  kNumerical,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a code, so the
// CLI and the HTTP service can map it to an exit status or a response code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

inline void Check(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

// 64-bit FNV-1a hash.
uint64_t Fnv1a(const uint8_t* data, size_t n);
uint64_t Fnv1a(std::string_view bytes);

// Runs fn(0) .. fn(n - 1) on up to `workers` threads. Each index runs
// exactly once; results must be written to per-index slots so the outcome
// does not depend on scheduling. The first exception is rethrown.
void ParallelFor(int n, int workers, const std::function<void(int)>& fn);

}  // namespace compsearch

#endif  // COMPSEARCH_COMMON_H_
