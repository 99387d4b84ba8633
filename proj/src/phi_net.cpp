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

#include "mmnet/phi_net.hpp"

#include <cmath>
#include <random>

#include "mmnet/errors.hpp"

namespace mmnet {

double soft_relu(double z, double eps) { return 0.5 * (z + std::sqrt(z * z + eps * eps)); }

double soft_relu_d(double z, double eps) { return 0.5 * (1.0 + z / std::sqrt(z * z + eps * eps)); }

double soft_relu_dd(double z, double eps) {
  const double q = z * z + eps * eps;
  return 0.5 * eps * eps / (q * std::sqrt(q));
}

void PhiParameters::validate() const {
  if (!(epsilon_sigma > 0)) throw ConfigError("phi: epsilon_sigma must be positive");
  if (W1.size() == 0) throw ShapeError("phi: empty W1");
  if (b1.size() != W1.rows() || W2.cols() != W1.rows() || b2.size() != W2.rows() ||
      W3.cols() != W2.rows() || b3.size() != W3.rows() || W3.rows() != W1.cols())
    throw ShapeError("phi: layer shapes do not compose to R^s -> R^s");
  if (!W1.allFinite() || !W2.allFinite() || !W3.allFinite() || !b1.allFinite() ||
      !b2.allFinite() || !b3.allFinite())
    throw InvalidInput("phi: non-finite parameters");
}

TensorList PhiParameters::tensors() {
  auto mat = [](const char* name, Matrix& m) {
    return TensorRef{name, m.data(), static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  };
  auto vec = [](const char* name, Vector& v) {
    return TensorRef{name, v.data(), static_cast<int>(v.size()), 1};
  };
  return {mat("phi.W1", W1), mat("phi.W2", W2), mat("phi.W3", W3),
          vec("phi.b1", b1), vec("phi.b2", b2), vec("phi.b3", b3)};
}

PhiParameters PhiParameters::zeros_like() const {
  PhiParameters z;
  z.W1 = Matrix::Zero(W1.rows(), W1.cols());
  z.W2 = Matrix::Zero(W2.rows(), W2.cols());
  z.W3 = Matrix::Zero(W3.rows(), W3.cols());
  z.b1 = Vector::Zero(b1.size());
  z.b2 = Vector::Zero(b2.size());
  z.b3 = Vector::Zero(b3.size());
  z.epsilon_sigma = epsilon_sigma;
  return z;
}

PhiParameters identity_phi(int s, double eps) {
  if (s < 1) throw ShapeError("identity_phi: s must be positive");
  PhiParameters p;
  p.W1 = p.W2 = p.W3 = Matrix::Identity(s, s);
  p.b1 = p.b2 = p.b3 = Vector::Zero(s);
  p.epsilon_sigma = eps;
  p.validate();
  return p;
}

PhiParameters init_phi(int s, std::uint64_t seed, double jitter, double eps) {
  PhiParameters p = identity_phi(s, eps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, jitter);
  for (Matrix* w : {&p.W1, &p.W2, &p.W3})
    for (Eigen::Index i = 0; i < w->size(); ++i) w->data()[i] += normal(rng);
  return p;
}

PhiParameters random_phi(int s, int hidden, std::uint64_t seed, double scale, double eps) {
  if (s < 1 || hidden < 1) throw ShapeError("random_phi: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto draw = [&](int r, int c) {
    Matrix m(r, c);
    const double sd = scale / std::sqrt(static_cast<double>(c));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * normal(rng);
    return m;
  };
  auto bias = [&](int r) {
    Vector v(r);
    for (auto& e : v) e = 0.5 * scale * normal(rng);
    return v;
  };
  PhiParameters p;
  p.W1 = draw(hidden, s);
  p.b1 = bias(hidden);
  p.W2 = draw(hidden, hidden);
  p.b2 = bias(hidden);
  p.W3 = draw(s, hidden);
  p.b3 = bias(s);
  p.epsilon_sigma = eps;
  p.validate();
  return p;
}

Matrix toeplitz_weight(int rows, int cols, const Vector& kernel) {
  if (rows < 1 || cols < 1 || kernel.size() == 0) throw ShapeError("toeplitz_weight: empty shape");
  const int r = static_cast<int>(kernel.size()) / 2;
  Matrix w = Matrix::Zero(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = std::max(0, i - r); j < std::min(cols, i - r + static_cast<int>(kernel.size())); ++j)
      w(i, j) = kernel(j - i + r);
  return w;
}

namespace {

Matrix act(const Matrix& z, double eps) {
  return z.unaryExpr([eps](double v) { return soft_relu(v, eps); });
}

Matrix act_d(const Matrix& z, double eps) {
  return z.unaryExpr([eps](double v) { return soft_relu_d(v, eps); });
}

void check_input(const Matrix& X, const PhiParameters& phi) {
  if (X.rows() != phi.input_dim())
    throw ShapeError("phi: input has " + std::to_string(X.rows()) + " rows, expected " +
                     std::to_string(phi.input_dim()));
}

}  // namespace

Matrix phi_forward(const Matrix& X, const PhiParameters& phi) {
  check_input(X, phi);
  const double eps = phi.epsilon_sigma;
  Matrix z1 = phi.W1 * X;
  z1.colwise() += phi.b1;
  Matrix z2 = phi.W2 * act(z1, eps);
  z2.colwise() += phi.b2;
  Matrix out = phi.W3 * act(z2, eps);
  out.colwise() += phi.b3;
  return out;
}

Vector phi_forward(const Vector& x, const PhiParameters& phi) {
  return phi_forward(Matrix(x), phi).col(0);
}

Matrix phi_jacobian(const Vector& x, const PhiParameters& phi) {
  check_input(Matrix(x), phi);
  const double eps = phi.epsilon_sigma;
  const Vector z1 = phi.W1 * x + phi.b1;
  const Vector z2 = phi.W2 * act(Matrix(z1), eps).col(0) + phi.b2;
  const Vector d1 = act_d(Matrix(z1), eps).col(0);
  const Vector d2 = act_d(Matrix(z2), eps).col(0);
  return phi.W3 * d2.asDiagonal() * phi.W2 * d1.asDiagonal() * phi.W1;
}

Matrix phi_vjp(const Matrix& X, const PhiParameters& phi, const Matrix& V) {
  check_input(X, phi);
  if (V.rows() != phi.W3.rows() || V.cols() != X.cols()) throw ShapeError("phi_vjp: V shape");
  const double eps = phi.epsilon_sigma;
  Matrix z1 = phi.W1 * X;
  z1.colwise() += phi.b1;
  Matrix z2 = phi.W2 * act(z1, eps);
  z2.colwise() += phi.b2;
  const Matrix u2 = (phi.W3.transpose() * V).cwiseProduct(act_d(z2, eps));
  const Matrix u1 = (phi.W2.transpose() * u2).cwiseProduct(act_d(z1, eps));
  return phi.W1.transpose() * u1;
}

PhiExprs phi_variables(ad::Graph& g, const PhiParameters& s, const std::string& prefix) {
  s.validate();
  PhiExprs p;
  p.W1 = g.variable(prefix + ".W1", static_cast<int>(s.W1.rows()), static_cast<int>(s.W1.cols()));
  p.W2 = g.variable(prefix + ".W2", static_cast<int>(s.W2.rows()), static_cast<int>(s.W2.cols()));
  p.W3 = g.variable(prefix + ".W3", static_cast<int>(s.W3.rows()), static_cast<int>(s.W3.cols()));
  p.b1 = g.variable(prefix + ".b1", static_cast<int>(s.b1.size()), 1);
  p.b2 = g.variable(prefix + ".b2", static_cast<int>(s.b2.size()), 1);
  p.b3 = g.variable(prefix + ".b3", static_cast<int>(s.b3.size()), 1);
  p.eps = s.epsilon_sigma;
  return p;
}

ad::Expr phi_graph(ad::Graph& g, const PhiExprs& p, ad::Expr X) {
  const ad::Expr a1 = g.soft_relu(g.add_bias(g.matmul(p.W1, X), p.b1), p.eps);
  const ad::Expr a2 = g.soft_relu(g.add_bias(g.matmul(p.W2, a1), p.b2), p.eps);
  return g.add_bias(g.matmul(p.W3, a2), p.b3);
}

void bind_phi(ad::Tape& tape, const PhiExprs& p, const PhiParameters& phi) {
  tape.bind(p.W1, phi.W1);
  tape.bind(p.W2, phi.W2);
  tape.bind(p.W3, phi.W3);
  tape.bind(p.b1, Matrix(phi.b1));
  tape.bind(p.b2, Matrix(phi.b2));
  tape.bind(p.b3, Matrix(phi.b3));
}

PhiParameters phi_param_gradient(ad::Graph& g, ad::Expr loss, const PhiExprs& p, ad::Tape& tape,
                                 const PhiParameters& shape_of) {
  const auto grads = g.gradients(loss, p.all());
  PhiParameters out = shape_of.zeros_like();
  out.W1 = tape.value(grads[0]);
  out.W2 = tape.value(grads[1]);
  out.W3 = tape.value(grads[2]);
  out.b1 = tape.value(grads[3]).col(0);
  out.b2 = tape.value(grads[4]).col(0);
  out.b3 = tape.value(grads[5]).col(0);
  return out;
}

}  // namespace mmnet
