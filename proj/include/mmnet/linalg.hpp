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

#include <Eigen/Dense>
#include <cstdint>

namespace mmnet {

// Dense row-major storage for every matrix in the library (leadfields, Φ
// weights, source/measurement blocks). All arithmetic is 64-bit.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace linalg {

// Dense oracles refuse inputs above this dimension.
inline constexpr int kDenseOracleMaxDim = 256;

// Largest singular value by power iteration on the smaller Gram matrix.
// The start vector is drawn from `seed`; iteration stops once the Rayleigh
// quotient changes by less than tol (relative) or after `iters` steps.
double spectral_norm(const Matrix& m, int iters = 5000, double tol = 1e-15,
                     std::uint64_t seed = 0x5eed);

// Largest eigenvalue of a symmetric matrix via full eigendecomposition.
// Throws InvalidInput when asymmetric beyond 1e-8 (scaled) or dim > 256.
double dense_symmetric_eigmax(const Matrix& h);

// Eigenvalue of largest magnitude (signed), same preconditions.
double dense_symmetric_dominant(const Matrix& h);

Vector matvec(const Matrix& m, const Vector& v);
Matrix matmul(const Matrix& a, const Matrix& b);
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& v);
double norm1(const Vector& v);

// Operator 1-norm: maximum absolute column sum.
double operator_norm1(const Matrix& m);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace linalg
}  // namespace mmnet
