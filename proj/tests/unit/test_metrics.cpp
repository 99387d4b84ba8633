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

#include <doctest.h>

#include <sstream>

#include "mmnet/metrics.hpp"
#include "oracles.hpp"

using namespace mmnet;

namespace {

Matrix spike(int s, int t, int row, int col, double a = 1.0) {
  Matrix m = Matrix::Zero(s, t);
  m(row, col) = a;
  return m;
}

// Pairwise-count AUC.
double auc_pairs(const Vector& score, const std::vector<bool>& pos) {
  double wins = 0, pairs = 0;
  for (Eigen::Index i = 0; i < score.size(); ++i)
    for (Eigen::Index j = 0; j < score.size(); ++j)
      if (pos[static_cast<std::size_t>(i)] && !pos[static_cast<std::size_t>(j)]) {
        pairs += 1;
        wins += score(i) > score(j) ? 1.0 : score(i) == score(j) ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("metric examples") {
  Geometry g;
  g.s = 10;
  const Matrix X = spike(10, 4, 2, 1);
  CHECK(localization_error(X, X, g).value == 0.0);
  CHECK(localization_error(X, spike(10, 4, 5, 0), g).value == 3.0);
  CHECK(localization_error(X, spike(10, 4, 9, 0), g).value == 3.0);
  const FlaggedValue z = localization_error(X, Matrix::Zero(10, 4), g);
  CHECK(z.flagged);
  CHECK(z.value == 5.0);
  CHECK(nmse(X, X) == 0.0);
  CHECK(nmse(X, Matrix::Zero(10, 4)) == 1.0);
  CHECK(nmse(X, 2 * X) == 1.0);
  CHECK(psnr(X, X) == kPsnrCapDb);
  CHECK(psnr(X, Matrix::Zero(10, 4)) == doctest::Approx(10 * std::log10(40.0)));
  CHECK(time_error(X, spike(10, 4, 2, 3)) == 2.0);
  CHECK(auc_extent(X, X).value == 1.0);
  CHECK(auc_extent(Matrix::Zero(10, 4), X).flagged);
  CHECK(auc_extent(Matrix::Ones(10, 4), X).value == 0.5);
}

TEST_CASE("AUC matches the pairwise oracle and is chance on noise") {
  std::mt19937_64 rng(3);
  double mean = 0;
  const int trials = 300;
  for (int k = 0; k < trials; ++k) {
    Matrix X = Matrix::Zero(20, 3);
    std::vector<bool> pos(20, false);
    for (int i = 0; i < 5; ++i) {
      X(i * 3, 0) = 1.0;
      pos[static_cast<std::size_t>(i * 3)] = true;
    }
    const Matrix E = oracle::random_matrix(20, 3, rng);
    const Vector score = E.cwiseAbs().rowwise().sum();
    const double a = auc_extent(X, E).value;
    CHECK(a == doctest::Approx(auc_pairs(score, pos)).epsilon(1e-12));
    mean += a / trials;
  }
  CHECK(std::abs(mean - 0.5) < 0.03);
}

TEST_CASE("metrics are invariant under ring rotation") {
  std::mt19937_64 rng(5);
  Geometry g;
  g.s = 12;
  const Matrix X = spike(12, 3, 4, 1) + 0.5 * spike(12, 3, 5, 1);
  const Matrix E = oracle::random_matrix(12, 3, rng);
  const SampleMetrics base = evaluate_sample(X, E, g);
  for (int r = 1; r < 12; r += 5) {
    Matrix Xr(12, 3), Er(12, 3);
    for (int i = 0; i < 12; ++i) {
      Xr.row((i + r) % 12) = X.row(i);
      Er.row((i + r) % 12) = E.row(i);
    }
    const SampleMetrics m = evaluate_sample(Xr, Er, g);
    CHECK(m.le == base.le);
    CHECK(m.auc == doctest::Approx(base.auc));
    CHECK(m.nmse == doctest::Approx(base.nmse));
    CHECK(m.te == base.te);
  }
}

TEST_CASE("report means and CSV agree with per-sample values") {
  std::mt19937_64 rng(9);
  Geometry g;
  g.s = 8;
  std::vector<SampleMetrics> all;
  double nm = 0;
  for (int k = 0; k < 6; ++k) {
    const Matrix X = spike(8, 2, k, 0), E = oracle::random_matrix(8, 2, rng);
    all.push_back(evaluate_sample(X, E, g, k));
    nm += all.back().nmse / 6;
  }
  all.push_back(evaluate_sample(spike(8, 2, 0, 0), Matrix::Zero(8, 2), g, 6));
  nm = nm * 6 / 7 + all.back().nmse / 7;
  const MetricsReport r = make_report(all);
  CHECK(r.nmse == doctest::Approx(nm).epsilon(1e-14));
  CHECK(r.le_flags == 1);
  const std::string csv = to_csv(r);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "sample,le,auc,nmse,psnr_db,te");
  int rows = 0;
  std::string last;
  while (std::getline(is, line))
    if (!line.empty()) {
      ++rows;
      last = line;
    }
  CHECK(rows == 8);
  CHECK(last.rfind("mean,", 0) == 0);
  CHECK(to_json(r)["mean"]["nmse"].get<double>() == r.nmse);
}
