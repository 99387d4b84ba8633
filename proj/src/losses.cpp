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

#include "mmnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mmnet/errors.hpp"

namespace mmnet {

namespace {

constexpr double kZeroNorm = 1e-300;

double clamp_unit(double c) {
  if (c > 1.0 && c <= 1.0 + 1e-12) return 1.0;
  if (c < -1.0 && c >= -1.0 - 1e-12) return -1.0;
  return c;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

void DomainConstraints::validate() const {
  if (!(upsilon > 0)) throw ConfigError("constraints: upsilon must be positive");
  if (!(delta_lo > 0) || !(delta_lo <= delta_hi)) throw ConfigError("constraints: need 0 < delta_lo <= delta_hi");
  if (!(lx_floor > 0)) throw ConfigError("constraints: lx_floor must be positive");
}

void ObjectiveSpec::validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("objective: lambda must be >= 0");
  constraints.validate();
}

double cos_sim(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "cos_sim");
  const double na = a.norm(), nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) throw DomainError("zero_norm", "cos_sim: zero-norm input");
  return clamp_unit(a.cwiseProduct(b).sum() / (na * nb));
}

double cos_sim(const Vector& a, const Vector& b) { return cos_sim(Matrix(a), Matrix(b)); }

Matrix cos_sim_grad_a(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "cos_sim_grad_a");
  const double na = a.norm(), nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) throw DomainError("zero_norm", "cos_sim_grad_a: zero-norm input");
  const double ab = a.cwiseProduct(b).sum();
  return b / (na * nb) - (ab / (na * na * na * nb)) * a;
}

Vector cos_sim_grad_a(const Vector& a, const Vector& b) {
  return cos_sim_grad_a(Matrix(a), Matrix(b)).col(0);
}

Matrix cos_sim_hessian_oracle(const Vector& a, const Vector& b, bool wrt_a) {
  if (!wrt_a) return cos_sim_hessian_oracle(b, a, true);
  if (a.size() != b.size()) throw ShapeError("cos_sim_hessian_oracle: length mismatch");
  if (a.size() > 32) throw InvalidInput("cos_sim_hessian_oracle: dimension above 32");
  const double na = a.norm(), nb = b.norm();
  if (na < kZeroNorm || nb < kZeroNorm) throw DomainError("zero_norm", "cos_sim_hessian_oracle: zero-norm input");
  const double c = a.dot(b);
  const double na3 = na * na * na;
  const auto n = a.size();
  Matrix h = -(b * a.transpose() + a * b.transpose()) / (na3 * nb);
  h.diagonal().array() -= c / (na3 * nb);
  h += (3.0 * c / (na3 * na * na * nb)) * (a * a.transpose());
  // Exact symmetry regardless of rounding in the outer products.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) h(j, i) = h(i, j);
  return h;
}

void check_domain(const Matrix& X, const InverseProblemInstance& inst, const ObjectiveSpec& spec) {
  const auto& c = spec.constraints;
  if (X.rows() != inst.s() || X.cols() != inst.t())
    throw ShapeError("objective: X is " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                     ", expected " + std::to_string(inst.s()) + "x" + std::to_string(inst.t()));
  if (!X.allFinite()) throw NumericError("objective: non-finite iterate");
  auto norms_ok = [&](const Matrix& m, double lo, double hi) {
    if (spec.reduction == CosineReduction::flattened) {
      const double v = m.norm();
      return v >= lo && v <= hi;
    }
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      const double v = m.col(k).norm();
      if (!(v >= lo && v <= hi)) return false;
    }
    return true;
  };
  if (!norms_ok(X, c.upsilon, INFINITY)) throw DomainError("upsilon", "objective: ‖x‖ below upsilon");
  if (!norms_ok(inst.Y, c.delta_lo, c.delta_hi)) throw DomainError("y_energy", "objective: ‖y‖ outside [delta_lo, delta_hi]");
  if (!norms_ok(inst.L * X, c.lx_floor, INFINITY)) throw DomainError("lx_floor", "objective: ‖Lx‖ below lx_floor");
}

namespace {

// Mean over columns of 1 - cos(a_k, b_k), or 1 - cos(a, b) when flattened.
double one_minus_cos(const Matrix& a, const Matrix& b, CosineReduction r) {
  if (r == CosineReduction::flattened) return 1.0 - cos_sim(a, b);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) acc += 1.0 - cos_sim(Matrix(a.col(k)), Matrix(b.col(k)));
  return acc / static_cast<double>(a.cols());
}

// Gradient of one_minus_cos with respect to its first (wrt_first) or second argument.
Matrix one_minus_cos_grad(const Matrix& a, const Matrix& b, CosineReduction r, bool wrt_first) {
  if (r == CosineReduction::flattened) return -(wrt_first ? cos_sim_grad_a(a, b) : cos_sim_grad_a(b, a));
  Matrix g(a.rows(), a.cols());
  const double inv_t = 1.0 / static_cast<double>(a.cols());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const Matrix ak = a.col(k), bk = b.col(k);
    g.col(k) = -inv_t * (wrt_first ? cos_sim_grad_a(ak, bk) : cos_sim_grad_a(bk, ak)).col(0);
  }
  return g;
}

void check_phi(const Matrix& P, CosineReduction r) {
  bool bad = r == CosineReduction::flattened ? !(P.norm() > 0) : false;
  if (r == CosineReduction::per_column)
    for (Eigen::Index k = 0; k < P.cols() && !bad; ++k) bad = !(P.col(k).norm() > 0);
  if (bad) throw DomainError("phi_norm", "objective: Φ(x) has zero norm");
}

}  // namespace

ObjectiveTerms objective_terms(const Matrix& X, const InverseProblemInstance& inst,
                               const PhiParameters& phi, const ObjectiveSpec& spec) {
  check_domain(X, inst, spec);
  const Matrix P = phi_forward(X, phi);
  check_phi(P, spec.reduction);
  ObjectiveTerms t;
  t.fidelity = one_minus_cos(inst.Y, inst.L * X, spec.reduction);
  t.regularizer = one_minus_cos(X, P, spec.reduction);
  t.total = t.fidelity + spec.lambda * t.regularizer;
  return t;
}

double lower_objective(const Matrix& X, const InverseProblemInstance& inst,
                       const PhiParameters& phi, const ObjectiveSpec& spec) {
  return objective_terms(X, inst, phi, spec).total;
}

Matrix lower_gradient(const Matrix& X, const InverseProblemInstance& inst,
                      const PhiParameters& phi, const ObjectiveSpec& spec) {
  check_domain(X, inst, spec);
  const Matrix P = phi_forward(X, phi);
  check_phi(P, spec.reduction);
  const Matrix LX = inst.L * X;
  Matrix g = inst.L.transpose() * one_minus_cos_grad(inst.Y, LX, spec.reduction, false);
  const Matrix reg_x = one_minus_cos_grad(X, P, spec.reduction, true);
  const Matrix reg_p = one_minus_cos_grad(X, P, spec.reduction, false);
  g += spec.lambda * (reg_x + phi_vjp(X, phi, reg_p));
  return g;
}

double upper_loss(const Matrix& X_true, const Matrix& X_est, const PhiParameters& phi) {
  require_same_shape(X_true, X_est, "upper_loss");
  return (1.0 - cos_sim(X_true, X_est)) + (1.0 - cos_sim(X_true, phi_forward(X_true, phi)));
}

namespace {

// Vector of per-column cosines as a t x 1 expression.
ad::Expr column_cosines(ad::Graph& g, ad::Expr a, ad::Expr b) {
  auto col_sums = [&](ad::Expr m) { return g.row_sum(g.transpose(m)); };
  const ad::Expr dots = col_sums(g.elem_mul(a, b));
  const ad::Expr na = g.sqrt(col_sums(g.elem_mul(a, a)));
  const ad::Expr nb = g.sqrt(col_sums(g.elem_mul(b, b)));
  return g.div(dots, g.elem_mul(na, nb));
}

ad::Expr one_minus_cos_graph(ad::Graph& g, ad::Expr a, ad::Expr b, CosineReduction r) {
  if (r == CosineReduction::flattened) return g.scale(g.cos_sim(a, b), -1.0, 1.0);
  const double inv_t = 1.0 / g.cols(a);
  return g.scale(g.sum(column_cosines(g, a, b)), -inv_t, 1.0);
}

}  // namespace

ObjectiveExprs lower_objective_graph(ad::Graph& g, ad::Expr X, ad::Expr Y, ad::Expr L,
                                     const PhiExprs& phi, const ObjectiveSpec& spec) {
  spec.validate();
  ObjectiveExprs e;
  e.fidelity = one_minus_cos_graph(g, Y, g.matmul(L, X), spec.reduction);
  e.regularizer = one_minus_cos_graph(g, X, phi_graph(g, phi, X), spec.reduction);
  e.total = g.add(e.fidelity, g.scale(e.regularizer, spec.lambda));
  return e;
}

ad::Expr upper_loss_graph(ad::Graph& g, ad::Expr X_true, ad::Expr X_est, const PhiExprs& phi) {
  const ad::Expr rec = g.scale(g.cos_sim(X_true, X_est), -1.0, 1.0);
  const ad::Expr rep = g.scale(g.cos_sim(X_true, phi_graph(g, phi, X_true)), -1.0, 1.0);
  return g.add(rec, rep);
}

}  // namespace mmnet
