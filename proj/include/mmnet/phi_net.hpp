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

#include "mmnet/autodiff.hpp"
#include "mmnet/linalg.hpp"
#include "mmnet/tensor_ref.hpp"

namespace mmnet {

double soft_relu(double z, double eps);
double soft_relu_d(double z, double eps);
double soft_relu_dd(double z, double eps);

// Three-layer network x -> W3 σ(W2 σ(W1 x + b1) + b2) + b3 with the smooth
// activation σ(z) = (z + sqrt(z^2 + eps^2)) / 2. Matrices are applied to each
// column independently.
struct PhiParameters {
  Matrix W1, W2, W3;
  Vector b1, b2, b3;
  double epsilon_sigma = 0.1;

  int input_dim() const { return static_cast<int>(W1.cols()); }
  int hidden1() const { return static_cast<int>(W1.rows()); }
  int hidden2() const { return static_cast<int>(W2.rows()); }

  // Throws ShapeError/ConfigError when the chain does not compose.
  void validate() const;
  TensorList tensors();
  PhiParameters zeros_like() const;
};

// W_k = I, b_k = 0 for square layers of width s.
PhiParameters identity_phi(int s, double eps = 0.1);
// Identity plus N(0, jitter^2) entries; biases zero. Widths default to s.
PhiParameters init_phi(int s, std::uint64_t seed, double jitter = 0.01, double eps = 0.1);
// Dense N(0, scale^2/fan_in) weights and biases.
PhiParameters random_phi(int s, int hidden, std::uint64_t seed, double scale = 1.0,
                         double eps = 0.1);
// rows x cols matrix with W(i, j) = kernel[j - i + r], r = kernel.size() / 2,
// zero outside the band: a 1-D convolution written as a dense layer.
Matrix toeplitz_weight(int rows, int cols, const Vector& kernel);

Matrix phi_forward(const Matrix& X, const PhiParameters& phi);
Vector phi_forward(const Vector& x, const PhiParameters& phi);
// J = W3 diag(σ'(z2)) W2 diag(σ'(z1)) W1 at the single input x.
Matrix phi_jacobian(const Vector& x, const PhiParameters& phi);
// Column-wise J(x_k)^T V_k.
Matrix phi_vjp(const Matrix& X, const PhiParameters& phi, const Matrix& V);

// Graph-side parameters of Φ.
struct PhiExprs {
  ad::Expr W1, W2, W3, b1, b2, b3;
  double eps = 0.1;
  std::vector<ad::Expr> all() const { return {W1, W2, W3, b1, b2, b3}; }
};

PhiExprs phi_variables(ad::Graph& g, const PhiParameters& shape_of, const std::string& prefix = "phi");
// Φ(X) where `X` has input_dim rows and any number of columns.
ad::Expr phi_graph(ad::Graph& g, const PhiExprs& p, ad::Expr X);
void bind_phi(ad::Tape& tape, const PhiExprs& p, const PhiParameters& phi);

// ∂loss/∂θ for a loss built over `p`, evaluated on `tape` (which must have
// every variable of the loss bound). Returned in PhiParameters layout.
PhiParameters phi_param_gradient(ad::Graph& g, ad::Expr loss, const PhiExprs& p, ad::Tape& tape,
                                 const PhiParameters& shape_of);

}  // namespace mmnet
