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

#include "mmnet/linalg.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mmnet/errors.hpp"

namespace mmnet::linalg {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) throw InvalidInput(std::string(what) + ": non-finite entries");
}

void require_symmetric(const Matrix& h, const char* what) {
  if (h.rows() != h.cols()) throw InvalidInput(std::string(what) + ": matrix is not square");
  if (h.rows() > kDenseOracleMaxDim)
    throw InvalidInput(std::string(what) + ": dimension " + std::to_string(h.rows()) +
                       " exceeds dense oracle cap");
  require_finite(h, what);
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInput(std::string(what) + ": matrix is not symmetric");
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

double spectral_norm(const Matrix& m, int iters, double tol, std::uint64_t seed) {
  require_finite(m, "spectral_norm");
  if (iters < 1) throw InvalidInput("spectral_norm: iters must be >= 1");
  if (m.size() == 0) return 0.0;
  // Gram of the smaller side: same nonzero spectrum, cheaper iteration.
  const Matrix gram = m.rows() < m.cols() ? Matrix(m * m.transpose())
                                          : Matrix(m.transpose() * m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(gram.cols());
  for (auto& e : v) e = normal(rng);
  v.normalize();
  double rayleigh = v.dot(gram * v);
  for (int k = 0; k < iters; ++k) {
    Vector w = gram * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    const double next = v.dot(gram * v);
    const bool converged = std::abs(next - rayleigh) <= tol * std::abs(next);
    rayleigh = next;
    if (converged) break;
  }
  return std::sqrt(std::max(rayleigh, 0.0));
}

double dense_symmetric_eigmax(const Matrix& h) {
  require_symmetric(h, "dense_symmetric_eigmax");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues()(h.rows() - 1);
}

double dense_symmetric_dominant(const Matrix& h) {
  require_symmetric(h, "dense_symmetric_dominant");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h),
                                                    Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(h.rows() - 1);
  return std::abs(lo) > std::abs(hi) ? lo : hi;
}

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size())
    throw ShapeError("matvec: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " times length " + std::to_string(v.size()));
  return m * v;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()));
  return a * b;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return a.dot(b);
}

double norm2(const Vector& v) { return std::sqrt(v.dot(v)); }

double norm1(const Vector& v) { return v.cwiseAbs().sum(); }

double operator_norm1(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().colwise().sum().maxCoeff();
}

}  // namespace mmnet::linalg
