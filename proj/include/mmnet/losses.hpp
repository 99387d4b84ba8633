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

#include "mmnet/autodiff.hpp"
#include "mmnet/linalg.hpp"
#include "mmnet/phi_net.hpp"
#include "mmnet/problem.hpp"

namespace mmnet {

// Admissible set of the lower-level problem.
struct DomainConstraints {
  double upsilon = 1e-6;   // ‖x‖ ≥ upsilon
  double delta_lo = 1e-12; // ‖y‖ ∈ [delta_lo, delta_hi]
  double delta_hi = 1e12;
  double lx_floor = 1e-10; // ‖Lx‖ ≥ lx_floor

  void validate() const;
};

// How matrix-valued signals enter the cosine terms: one cosine over all
// entries, or the mean of per-column cosines.
enum class CosineReduction { flattened, per_column };

struct ObjectiveSpec {
  double lambda = 1.0;
  CosineReduction reduction = CosineReduction::flattened;
  DomainConstraints constraints;

  void validate() const;
};

double cos_sim(const Matrix& a, const Matrix& b);
double cos_sim(const Vector& a, const Vector& b);
// Gradient of cos_sim(a, b) with respect to a.
Matrix cos_sim_grad_a(const Matrix& a, const Matrix& b);
Vector cos_sim_grad_a(const Vector& a, const Vector& b);
// Dense Hessian of cos_sim(a, b) with respect to a (wrt_a) or b. dim ≤ 32.
Matrix cos_sim_hessian_oracle(const Vector& a, const Vector& b, bool wrt_a = true);

struct ObjectiveTerms {
  double fidelity = 0.0;     // 1 - cos(Y, L X)
  double regularizer = 0.0;  // 1 - cos(X, Φ(X))
  double total = 0.0;        // fidelity + λ regularizer
};

// Throws DomainError naming the violated constraint.
void check_domain(const Matrix& X, const InverseProblemInstance& inst, const ObjectiveSpec& spec);

ObjectiveTerms objective_terms(const Matrix& X, const InverseProblemInstance& inst,
                               const PhiParameters& phi, const ObjectiveSpec& spec);
double lower_objective(const Matrix& X, const InverseProblemInstance& inst,
                       const PhiParameters& phi, const ObjectiveSpec& spec);
Matrix lower_gradient(const Matrix& X, const InverseProblemInstance& inst,
                      const PhiParameters& phi, const ObjectiveSpec& spec);

// [1 - cos(X, X̂)] + [1 - cos(X, Φ(X))], cosines over all entries.
double upper_loss(const Matrix& X_true, const Matrix& X_est, const PhiParameters& phi);

struct ObjectiveExprs {
  ad::Expr fidelity, regularizer, total;
};

// Graph form of the lower objective. `X` is s x t, `Y` n x t, `L` n x s.
ObjectiveExprs lower_objective_graph(ad::Graph& g, ad::Expr X, ad::Expr Y, ad::Expr L,
                                     const PhiExprs& phi, const ObjectiveSpec& spec);
ad::Expr upper_loss_graph(ad::Graph& g, ad::Expr X_true, ad::Expr X_est, const PhiExprs& phi);

}  // namespace mmnet
