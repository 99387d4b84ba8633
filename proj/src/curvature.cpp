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

#include "mmnet/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mmnet/errors.hpp"

namespace mmnet {

void CurvatureOptions::validate() const {
  if (!(beta_floor > 0)) throw ConfigError("curvature: beta_floor must be positive");
  if (power_iters < 1) throw ConfigError("curvature: power_iters must be >= 1");
  if (!(safety_factor >= 1.0)) throw ConfigError("curvature: safety_factor must be >= 1");
  if (!(lambda_floor > 0)) throw ConfigError("curvature: lambda_floor must be positive");
  if (power_tol < 0) throw ConfigError("curvature: power_tol must be >= 0");
}

double fidelity_bound(double L_norm, const Matrix& LX) {
  const double lx = LX.norm();
  if (!(lx > 0)) throw DomainError("lx_floor", "fidelity_bound: Lx = 0");
  return 5.0 * L_norm * L_norm / (lx * lx);
}

double fidelity_bound(const Matrix& L, const Matrix& X) {
  return fidelity_bound(linalg::spectral_norm(L), L * X);
}

double network_jacobian_bound(const PhiParameters& phi) {
  return linalg::spectral_norm(phi.W1) * linalg::spectral_norm(phi.W2) *
         linalg::spectral_norm(phi.W3);
}

double network_hessian_bound(const PhiParameters& phi) {
  if (!(phi.epsilon_sigma > 0)) throw ConfigError("network_hessian_bound: epsilon must be positive");
  const double w1 = linalg::spectral_norm(phi.W1);
  const double w2 = linalg::spectral_norm(phi.W2);
  const double w3 = linalg::spectral_norm(phi.W3);
  const double w2_one = linalg::operator_norm1(phi.W2);
  return w3 * (w1 * w1 * w2 * w2 + w2_one * w1 * w1) / (2.0 * phi.epsilon_sigma);
}

double regularizer_mu2(double alpha, double beta, double varrho, double x_norm, int dim) {
  if (!(beta > 0) || !(x_norm > 0)) throw DomainError("phi_norm", "regularizer_mu2: zero beta or ‖x‖");
  const double r = varrho / beta + 1.0 / x_norm;
  return (5.0 * varrho + 1.0) / (beta * x_norm) + 2.0 * alpha * std::sqrt(static_cast<double>(dim)) / beta +
         4.0 * r * r;
}

namespace {

double local_rho(const Matrix& X, const PhiParameters& phi) {
  double best = 0.0;
  for (Eigen::Index k = 0; k < X.cols(); ++k)
    best = std::max(best, linalg::spectral_norm(phi_jacobian(X.col(k), phi)));
  return best;
}

double checked_beta(const Matrix& P, double floor) {
  const double beta = P.norm();
  if (!(beta >= floor)) throw DomainError("beta_floor", "curvature: ‖Φ(x)‖ below beta floor");
  return beta;
}

}  // namespace

CurvatureBounds regularizer_bound(const Matrix& X, const PhiParameters& phi, const CurvatureOptions& opts) {
  opts.validate();
  CurvatureBounds b;
  b.x_norm = X.norm();
  if (!(b.x_norm > 0)) throw DomainError("upsilon", "regularizer_bound: x = 0");
  b.beta = checked_beta(phi_forward(X, phi), opts.beta_floor);
  b.varrho = opts.rho_mode == RhoMode::global ? network_jacobian_bound(phi) : local_rho(X, phi);
  b.alpha = network_hessian_bound(phi);
  b.dim = static_cast<int>(X.size());
  b.mu2 = regularizer_mu2(b.alpha, b.beta, b.varrho, b.x_norm, b.dim);
  return b;
}

AnalyticCurvature::AnalyticCurvature(const Matrix& L, const PhiParameters& phi, const ObjectiveSpec& spec,
                                     const CurvatureOptions& opts)
    : L_(&L), phi_(&phi), spec_(spec), opts_(opts) {
  opts_.validate();
  spec_.validate();
  L_norm_ = linalg::spectral_norm(L);
  rho_global_ = network_jacobian_bound(phi);
  alpha_ = network_hessian_bound(phi);
}

CurvatureBounds AnalyticCurvature::bounds(const Matrix& X) const {
  CurvatureBounds b;
  b.alpha = alpha_;
  const Matrix LX = *L_ * X;
  const Matrix P = phi_forward(X, *phi_);
  if (spec_.reduction == CosineReduction::flattened) {
    b.x_norm = X.norm();
    if (!(b.x_norm > 0)) throw DomainError("upsilon", "curvature: x = 0");
    b.mu1 = fidelity_bound(L_norm_, LX);
    b.beta = checked_beta(P, opts_.beta_floor);
    b.varrho = opts_.rho_mode == RhoMode::global ? rho_global_ : local_rho(X, *phi_);
    b.dim = static_cast<int>(X.size());
    b.mu2 = regularizer_mu2(b.alpha, b.beta, b.varrho, b.x_norm, b.dim);
    return b;
  }
  // Per-column objectives have block-diagonal Hessians scaled by 1/t; the
  // least favourable column bounds the whole.
  const double inv_t = 1.0 / static_cast<double>(X.cols());
  b.dim = static_cast<int>(X.rows());
  b.beta = INFINITY;
  b.x_norm = INFINITY;
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const Matrix xk = X.col(k);
    const double xn = xk.norm();
    if (!(xn > 0)) throw DomainError("upsilon", "curvature: zero column");
    const double beta = checked_beta(P.col(k), opts_.beta_floor);
    const double rho = opts_.rho_mode == RhoMode::global ? rho_global_ : local_rho(xk, *phi_);
    b.mu1 = std::max(b.mu1, inv_t * fidelity_bound(L_norm_, LX.col(k)));
    b.mu2 = std::max(b.mu2, inv_t * regularizer_mu2(b.alpha, beta, rho, xn, b.dim));
    b.beta = std::min(b.beta, beta);
    b.x_norm = std::min(b.x_norm, xn);
    b.varrho = std::max(b.varrho, rho);
  }
  return b;
}

double AnalyticCurvature::nu_hi(const Matrix& X) const {
  const CurvatureBounds b = bounds(X);
  return 1.0 / (b.mu1 + spec_.lambda * b.mu2);
}

SpectralEstimate estimate_lambda_max(const HvpFn& hvp, int dim, int K, std::uint64_t seed, double tol) {
  if (K < 1) throw InvalidInput("estimate_lambda_max: K must be >= 1");
  if (dim < 1) throw InvalidInput("estimate_lambda_max: dim must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(dim);
  for (auto& e : v) e = normal(rng);
  v /= v.norm();

  SpectralEstimate est;
  auto apply = [&](const Vector& x) {
    Vector hv = hvp(x);
    if (hv.size() != dim) throw ShapeError("estimate_lambda_max: HVP changed dimension");
    if (!hv.allFinite()) throw NumericError("estimate_lambda_max: non-finite Hessian-vector product");
    return hv;
  };
  Vector hv = apply(v);
  for (int k = 0;; ++k) {
    const double lam = v.dot(hv);
    est.rayleigh_history.push_back(lam);
    const double hn = hv.norm();
    est.lambda_hat = lam;
    est.norm_hat = hn;
    est.residual = (hv - lam * v).norm();
    est.iters_used = k;
    if (hn == 0.0) {
      est.flat = true;
      break;
    }
    if (k == K || est.residual < tol * std::abs(lam)) break;
    v = hv / hn;
    hv = apply(v);
  }
  est.eigvec_hat = v;
  return est;
}

SpectralEstimate estimate_top_eigenvalue(const HvpFn& hvp, int dim, const CurvatureOptions& opts,
                                         std::uint64_t seed) {
  SpectralEstimate est = estimate_lambda_max(hvp, dim, opts.power_iters, seed, opts.power_tol);
  if (!opts.shift_negative || est.flat || est.lambda_hat >= 0.0) return est;
  const double sigma = est.lambda_hat;
  const auto shifted = [&](const Vector& v) { return Vector(hvp(v) - sigma * v); };
  SpectralEstimate top = estimate_lambda_max(shifted, dim, opts.power_iters, seed ^ 0x5bd1e995ULL, opts.power_tol);
  top.lambda_hat += sigma;
  for (double& r : top.rayleigh_history) r += sigma;
  top.norm_hat = est.norm_hat;
  top.iters_used += est.iters_used;
  top.flat = false;
  top.shifted = true;
  return top;
}

ObjectiveHessian::ObjectiveHessian(int n, int s, int t, const PhiParameters& phi_shape, const ObjectiveSpec& spec)
    : s_(s), t_(t), graph_(std::make_unique<ad::Graph>()) {
  ad::Graph& g = *graph_;
  X_ = g.variable("X", s, t);
  Y_ = g.variable("Y", n, t);
  L_ = g.variable("L", n, s);
  phi_ = phi_variables(g, phi_shape);
  const ObjectiveExprs u = lower_objective_graph(g, X_, Y_, L_, phi_, spec);
  op_ = std::make_unique<ad::HvpOperator>(g, u.total, X_);
}

void ObjectiveHessian::set_problem(const Matrix& Y, const Matrix& L) {
  op_->tape().bind(Y_, Y);
  op_->tape().bind(L_, L);
}

void ObjectiveHessian::set_phi(const PhiParameters& phi) { bind_phi(op_->tape(), phi_, phi); }

void ObjectiveHessian::set_point(const Matrix& X) { op_->set_point(X); }

double ObjectiveHessian::value() { return op_->value(); }

Matrix ObjectiveHessian::gradient() { return op_->gradient(); }

Matrix ObjectiveHessian::apply(const Matrix& V) { return op_->apply(V); }

SpectralEstimate ObjectiveHessian::estimate(const Matrix& X, int K, std::uint64_t seed, double tol) {
  set_point(X);
  const int dim = s_ * t_;
  auto hvp = [&](const Vector& v) {
    const Matrix hv = op_->apply(Eigen::Map<const Matrix>(v.data(), s_, t_));
    return Vector(Eigen::Map<const Vector>(hv.data(), dim));
  };
  return estimate_lambda_max(hvp, dim, K, seed, tol);
}

SpectralEstimate ObjectiveHessian::estimate_top(const Matrix& X, const CurvatureOptions& opts, std::uint64_t seed) {
  set_point(X);
  const int dim = s_ * t_;
  auto hvp = [&](const Vector& v) {
    const Matrix hv = op_->apply(Eigen::Map<const Matrix>(v.data(), s_, t_));
    return Vector(Eigen::Map<const Vector>(hv.data(), dim));
  };
  return estimate_top_eigenvalue(hvp, dim, opts, seed);
}

CurvatureInterval interval_from_nu_hi(double nu_hi, double nu_lo, CurvatureMethod source) {
  if (!(nu_hi > 0) || !std::isfinite(nu_hi)) throw NumericError("curvature: invalid upper bound");
  if (!(nu_lo > 0)) throw ConfigError("curvature: nu_lo must be positive");
  CurvatureInterval iv;
  iv.nu_hi = nu_hi;
  iv.nu_lo = nu_lo;
  iv.source = source;
  if (nu_lo > nu_hi) {
    iv.nu_lo = nu_hi;
    iv.nu_lo_lowered = true;
  }
  return iv;
}

CurvatureInterval spectral_interval(const SpectralEstimate& est, const Matrix& X,
                                    const AnalyticCurvature* analytic, double nu_lo,
                                    const CurvatureOptions& opts) {
  if (est.flat || !(est.lambda_hat > 0)) {
    if (!analytic) throw CurvatureUnavailable("spectral estimate is not positive and no analytic bound is available");
    double nu;
    try {
      nu = analytic->nu_hi(X);
    } catch (const DomainError& e) {
      throw CurvatureUnavailable(std::string("spectral estimate is not positive and analytic bound failed: ") + e.what());
    }
    CurvatureInterval iv = interval_from_nu_hi(nu, nu_lo, CurvatureMethod::analytic);
    iv.fell_back = true;
    return iv;
  }
  const double lam = std::max(est.lambda_hat, opts.lambda_floor);
  return interval_from_nu_hi(1.0 / (opts.safety_factor * lam), nu_lo, CurvatureMethod::spectral);
}

CurvatureInterval valid_interval(const Matrix& X, const InverseProblemInstance& inst,
                                 const PhiParameters& phi, const ObjectiveSpec& spec,
                                 CurvatureMethod method, double nu_lo, const CurvatureOptions& opts) {
  opts.validate();
  if (method == CurvatureMethod::analytic) {
    const AnalyticCurvature ac(inst.L, phi, spec, opts);
    return interval_from_nu_hi(ac.nu_hi(X), nu_lo, CurvatureMethod::analytic);
  }
  ObjectiveHessian hess(inst.n(), inst.s(), inst.t(), phi, spec);
  hess.set_problem(inst.Y, inst.L);
  hess.set_phi(phi);
  const SpectralEstimate est = hess.estimate_top(X, opts, opts.seed);
  std::unique_ptr<AnalyticCurvature> ac;
  try {
    ac = std::make_unique<AnalyticCurvature>(inst.L, phi, spec, opts);
  } catch (const Error&) {
  }
  return spectral_interval(est, X, ac.get(), nu_lo, opts);
}

double quadratic_majorant(double u_bar, const Matrix& G_bar, const Matrix& X, const Matrix& X_bar, const Matrix& p) {
  if (G_bar.rows() != X.rows() || X.rows() != X_bar.rows() || p.rows() != X.rows() || G_bar.cols() != X.cols() ||
      X.cols() != X_bar.cols() || p.cols() != X.cols())
    throw ShapeError("quadratic_majorant: shape mismatch");
  const Matrix d = X - X_bar;
  return u_bar + (d.array() * G_bar.array()).sum() + 0.5 * (d.array().square() / p.array()).sum();
}

}  // namespace mmnet
