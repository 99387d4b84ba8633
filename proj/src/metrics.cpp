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

#include "mmnet/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "mmnet/errors.hpp"

namespace mmnet {

namespace {

void check_shapes(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(who) + ": shapes differ");
  if (a.size() == 0) throw InvalidInput(std::string(who) + ": empty input");
}

Vector energy(const Matrix& X) { return X.cwiseAbs().rowwise().sum(); }

int argmax(const Vector& v) {
  Eigen::Index k = 0;
  v.maxCoeff(&k);
  return static_cast<int>(k);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FlaggedValue localization_error(const Matrix& X_true, const Matrix& X_est, const Geometry& geom) {
  check_shapes(X_true, X_est, "localization_error");
  if (geom.s != X_true.rows()) throw ShapeError("localization_error: geometry size differs from s");
  const Vector et = energy(X_true), ee = energy(X_est);
  if (ee.maxCoeff() == 0.0) return {static_cast<double>(geom.diameter()), true};
  const std::vector<int> d = geom.distances_from(argmax(et));
  return {static_cast<double>(d[static_cast<std::size_t>(argmax(ee))]), false};
}

FlaggedValue auc_extent(const Matrix& X_true, const Matrix& X_est) {
  check_shapes(X_true, X_est, "auc_extent");
  const Vector et = energy(X_true), ee = energy(X_est);
  std::vector<double> pos, neg;
  for (Eigen::Index i = 0; i < et.size(); ++i) (et(i) != 0.0 ? pos : neg).push_back(ee(i));
  if (pos.empty() || neg.empty()) return {0.5, true};
  double wins = 0.0;
  for (double a : pos)
    for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return {wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size())), false};
}

double nmse(const Matrix& X_true, const Matrix& X_est) {
  check_shapes(X_true, X_est, "nmse");
  const double den = X_true.squaredNorm();
  if (den == 0.0) throw DomainError("zero_norm", "nmse: X_true is zero");
  return (X_true - X_est).squaredNorm() / den;
}

double psnr(const Matrix& X_true, const Matrix& X_est) {
  check_shapes(X_true, X_est, "psnr");
  const double mse = (X_true - X_est).squaredNorm() / static_cast<double>(X_true.size());
  if (mse < 1e-15) return kPsnrCapDb;
  const double peak = X_true.cwiseAbs().maxCoeff();
  if (peak == 0.0) throw DomainError("zero_norm", "psnr: X_true is zero");
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double time_error(const Matrix& X_true, const Matrix& X_est) {
  check_shapes(X_true, X_est, "time_error");
  const int j = argmax(energy(X_true));
  const int kt = argmax(X_true.row(j).cwiseAbs().transpose());
  const int ke = argmax(X_est.row(j).cwiseAbs().transpose());
  return std::abs(kt - ke);
}

SampleMetrics evaluate_sample(const Matrix& X_true, const Matrix& X_est, const Geometry& geom, int sample) {
  SampleMetrics m;
  m.sample = sample;
  const FlaggedValue le = localization_error(X_true, X_est, geom);
  const FlaggedValue auc = auc_extent(X_true, X_est);
  m.le = le.value;
  m.le_flag = le.flagged;
  m.auc = auc.value;
  m.auc_flag = auc.flagged;
  m.nmse = nmse(X_true, X_est);
  m.psnr_db = psnr(X_true, X_est);
  m.te = time_error(X_true, X_est);
  return m;
}

MetricsReport make_report(std::vector<SampleMetrics> samples) {
  MetricsReport r;
  r.per_sample = std::move(samples);
  const double n = static_cast<double>(r.per_sample.size());
  if (r.per_sample.empty()) return r;
  for (const auto& m : r.per_sample) {
    r.le += m.le;
    r.auc += m.auc;
    r.nmse += m.nmse;
    r.psnr_db += m.psnr_db;
    r.te += m.te;
    r.le_flags += m.le_flag;
    r.auc_flags += m.auc_flag;
  }
  r.le /= n;
  r.auc /= n;
  r.nmse /= n;
  r.psnr_db /= n;
  r.te /= n;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.per_sample)
    rows.push_back({{"sample", m.sample},
                    {"le", m.le},
                    {"auc", m.auc},
                    {"nmse", m.nmse},
                    {"psnr_db", m.psnr_db},
                    {"te", m.te},
                    {"le_flag", m.le_flag},
                    {"auc_flag", m.auc_flag}});
  return {{"mean",
           {{"le", r.le}, {"auc", r.auc}, {"nmse", r.nmse}, {"psnr_db", r.psnr_db}, {"te", r.te}}},
          {"count", r.per_sample.size()},
          {"le_flags", r.le_flags},
          {"auc_flags", r.auc_flags},
          {"per_sample", rows}};
}

std::string to_csv(const MetricsReport& r) {
  std::string out = "sample,le,auc,nmse,psnr_db,te\n";
  auto row = [&](const std::string& id, double le, double auc, double nm, double ps, double te) {
    out += id + "," + fmt(le) + "," + fmt(auc) + "," + fmt(nm) + "," + fmt(ps) + "," + fmt(te) + "\n";
  };
  for (const auto& m : r.per_sample) row(std::to_string(m.sample), m.le, m.auc, m.nmse, m.psnr_db, m.te);
  row("mean", r.le, r.auc, r.nmse, r.psnr_db, r.te);
  return out;
}

}  // namespace mmnet
