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
#include <functional>
#include <memory>
#include <vector>

#include "mmnet/autodiff.hpp"
#include "mmnet/linalg.hpp"
#include "mmnet/losses.hpp"
#include "mmnet/phi_net.hpp"
#include "mmnet/problem.hpp"

namespace mmnet {

enum class CurvatureMethod { analytic, spectral };

// Global uses the parameter-only product bound for ϱ; local uses the exact
// Jacobian norm at the evaluation point.
enum class RhoMode { global, local };

struct CurvatureOptions {
  RhoMode rho_mode = RhoMode::global;
  double beta_floor = 1e-6;
  int power_iters = 20;
  double power_tol = 1e-6;
  double safety_factor = 1.05;
  double lambda_floor = 1e-8;
  // When the first power pass lands on a negative eigenvalue λ̂, run a second
  // pass on H - λ̂ I, whose dominant eigenvalue is λmax - λ̂.
  bool shift_negative = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CurvatureBounds {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double varrho = 0.0;
  double x_norm = 0.0;
  int dim = 0;
};

struct SpectralEstimate {
  double lambda_hat = 0.0;  // Rayleigh quotient at the final iterate
  double norm_hat = 0.0;    // ‖H v_K‖, an estimate of the dominant |eigenvalue|
  Vector eigvec_hat;
  int iters_used = 0;
  double residual = 0.0;    // ‖H v − λ̂ v‖
  double safety_factor = 1.0;
  bool flat = false;        // H v vanished
  bool shifted = false;     // refined by the shifted second pass
  std::vector<double> rayleigh_history;
};

struct CurvatureInterval {
  double nu_lo = 0.0;
  double nu_hi = 0.0;
  CurvatureMethod source = CurvatureMethod::analytic;
  bool nu_lo_lowered = false;  // nu_lo was reduced to keep nu_lo ≤ nu_hi
  bool fell_back = false;      // spectral requested, analytic used
};

// 5 ‖L‖² / ‖L X‖², entries of X taken together.
double fidelity_bound(const Matrix& L, const Matrix& X);
double fidelity_bound(double L_norm, const Matrix& LX);

double network_jacobian_bound(const PhiParameters& phi);
// (1/2ε) ‖W3‖ (‖W1‖² ‖W2‖² + ‖W2‖₁ ‖W1‖²), ‖·‖₁ the max absolute column sum.
double network_hessian_bound(const PhiParameters& phi);

// The regularizer curvature constant for 1 - cos(x, Φ(x)) given its pieces.
double regularizer_mu2(double alpha, double beta, double varrho, double x_norm, int dim);

// mu2 and its ingredients at X (flattened). mu1 is left at 0.
CurvatureBounds regularizer_bound(const Matrix& X, const PhiParameters& phi,
                                  const CurvatureOptions& opts = {});

// Analytic bounds with ‖L‖, ϱ and α cached for one (L, Φ) pair. L and phi
// must outlive the object.
class AnalyticCurvature {
 public:
  AnalyticCurvature(const Matrix& L, const PhiParameters& phi, const ObjectiveSpec& spec,
                    const CurvatureOptions& opts = {});

  CurvatureBounds bounds(const Matrix& X) const;
  // 1 / (mu1 + λ mu2).
  double nu_hi(const Matrix& X) const;

 private:
  const Matrix* L_;
  const PhiParameters* phi_;
  ObjectiveSpec spec_;
  CurvatureOptions opts_;
  double L_norm_, rho_global_, alpha_;
};

using HvpFn = std::function<Vector(const Vector&)>;

// Power iteration on Hessian-vector products from a seeded unit Gaussian
// start. Stops after K steps or once residual < tol |λ̂|.
SpectralEstimate estimate_lambda_max(const HvpFn& hvp, int dim, int K, std::uint64_t seed,
                                     double tol = 0.0);

// estimate_lambda_max followed, if λ̂ < 0 and opts.shift_negative, by the
// shifted pass. The result estimates the largest signed eigenvalue.
SpectralEstimate estimate_top_eigenvalue(const HvpFn& hvp, int dim, const CurvatureOptions& opts,
                                         std::uint64_t seed);

// Hessian-vector products of the lower objective, compiled once per shape.
class ObjectiveHessian {
 public:
  ObjectiveHessian(int n, int s, int t, const PhiParameters& phi_shape, const ObjectiveSpec& spec);

  void set_problem(const Matrix& Y, const Matrix& L);
  void set_phi(const PhiParameters& phi);
  void set_point(const Matrix& X);
  double value();
  Matrix gradient();
  Matrix apply(const Matrix& V);
  SpectralEstimate estimate(const Matrix& X, int K, std::uint64_t seed, double tol = 0.0);
  SpectralEstimate estimate_top(const Matrix& X, const CurvatureOptions& opts, std::uint64_t seed);

 private:
  int s_, t_;
  std::unique_ptr<ad::Graph> graph_;
  ad::Expr X_, Y_, L_;
  PhiExprs phi_;
  std::unique_ptr<ad::HvpOperator> op_;
};

CurvatureInterval interval_from_nu_hi(double nu_hi, double nu_lo, CurvatureMethod source);

// Validity box for the inverse curvature vector at X.
CurvatureInterval valid_interval(const Matrix& X, const InverseProblemInstance& inst,
                                 const PhiParameters& phi, const ObjectiveSpec& spec,
                                 CurvatureMethod method, double nu_lo,
                                 const CurvatureOptions& opts = {});

// Spectral interval from an existing estimate; falls back to `analytic`
// (may be null) when λ̂ ≤ 0.
CurvatureInterval spectral_interval(const SpectralEstimate& est, const Matrix& X,
                                    const AnalyticCurvature* analytic, double nu_lo,
                                    const CurvatureOptions& opts);

// Separable quadratic surrogate at X_bar with inverse curvature p, evaluated at X.
double quadratic_majorant(double u_bar, const Matrix& G_bar, const Matrix& X, const Matrix& X_bar, const Matrix& p);

}  // namespace mmnet
