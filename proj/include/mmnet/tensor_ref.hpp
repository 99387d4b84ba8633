// Copyright 2026 The mmnet Authors.
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

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace mmnet {

// Non-owning view of one parameter tensor, used for flattening parameter
// sets into optimizers and checkpoint files.
struct TensorRef {
  std::string name;
  double* data;
  int rows;
  int cols;
  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
  Eigen::Map<Eigen::VectorXd> flat() const { return {data, size()}; }
};

using TensorList = std::vector<TensorRef>;

}  // namespace mmnet
