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

#include <string>
#include <vector>

#include <json.hpp>

#include "mmnet/datagen.hpp"
#include "mmnet/linalg.hpp"

namespace mmnet {

/// A metric value plus a flag marking a degenerate input.
struct FlaggedValue {
  double value = 0.0;
  bool flagged = false;
};

/// Graph distance between the peaks of the time-aggregated absolute amplitudes.
/// An all-zero estimate yields the graph diameter with the flag set.
FlaggedValue localization_error(const Matrix& X_true, const Matrix& X_est, const Geometry& geom);

/// Mann-Whitney AUC of time-aggregated |X_est| against the nonzero support of X_true.
/// Empty or full support yields 0.5 with the flag set.
FlaggedValue auc_extent(const Matrix& X_true, const Matrix& X_est);

double nmse(const Matrix& X_true, const Matrix& X_est);

/// Peak is max|X_true|; capped at 99 dB when the MSE is below 1e-15.
double psnr(const Matrix& X_true, const Matrix& X_est);
constexpr double kPsnrCapDb = 99.0;

/// Peak-time offset (in samples) at the source with the largest true energy.
double time_error(const Matrix& X_true, const Matrix& X_est);

struct SampleMetrics {
  int sample = -1;
  double le = 0.0, auc = 0.0, nmse = 0.0, psnr_db = 0.0, te = 0.0;
  bool le_flag = false, auc_flag = false;
};

SampleMetrics evaluate_sample(const Matrix& X_true, const Matrix& X_est, const Geometry& geom, int sample = -1);

struct MetricsReport {
  double le = 0.0, auc = 0.0, nmse = 0.0, psnr_db = 0.0, te = 0.0;
  int le_flags = 0, auc_flags = 0;
  std::vector<SampleMetrics> per_sample;
};

MetricsReport make_report(std::vector<SampleMetrics> samples);
nlohmann::json to_json(const MetricsReport& r);

/// Columns: sample,le,auc,nmse,psnr_db,te. The final row has sample "mean".
std::string to_csv(const MetricsReport& r);

}  // namespace mmnet
