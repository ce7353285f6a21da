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

#include "compsearch/tensor.h"

#include <sstream>

namespace compsearch::nn {

std::size_t NumElements(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    Check(d >= 0, ErrorCode::kShapeMismatch,
          "negative dimension in shape " + ShapeString(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string ShapeString(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace compsearch::nn
