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

#include <cstdint>

#include "mmnet/linalg.hpp"

namespace mmnet {

// One observation Y = L X + noise. X is s x t (sources by time), Y is n x t.
struct InverseProblemInstance {
  Matrix X_true;
  Matrix Y;
  Matrix L;
  double snr_db = 0.0;
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(L.rows()); }
  int s() const { return static_cast<int>(L.cols()); }
  int t() const { return static_cast<int>(Y.cols()); }
};

}  // namespace mmnet
