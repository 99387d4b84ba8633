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

#include "mmnet/mm_solver.hpp"

#include <cmath>
#include <memory>
#include <random>

#include "mmnet/errors.hpp"

namespace mmnet {

const char* mode_name(MajorantMode m) {
  switch (m) {
    case MajorantMode::learned: return "learned";
    case MajorantMode::analytic_fixed: return "analytic-fixed";
    case MajorantMode::spectral_fixed: return "spectral-fixed";
    case MajorantMode::gradient_descent: return "gd";
  }
  return "?";
}

MajorantMode parse_mode(const std::string& s) {
  if (s == "learned") return MajorantMode::learned;
  if (s == "analytic-fixed") return MajorantMode::analytic_fixed;
  if (s == "spectral-fixed") return MajorantMode::spectral_fixed;
  if (s == "gd" || s == "gradient-descent") return MajorantMode::gradient_descent;
  throw ConfigError("unknown majorant mode '" + s + "'");
}

const char* method_name(CurvatureMethod m) { return m == CurvatureMethod::analytic ? "analytic" : "spectral"; }

CurvatureMethod parse_method(const std::string& s) {
  if (s == "analytic") return CurvatureMethod::analytic;
  if (s == "spectral") return CurvatureMethod::spectral;
  throw ConfigError("unknown curvature method '" + s + "'");
}

void SolverConfig::validate() const {
  if (inner_iters < 1) throw ConfigError("solver: inner_iters must be >= 1");
  if (!(gamma > 0 && gamma < 2)) throw ConfigError("solver: gamma must lie in (0, 2)");
  if (!(init_scale > 0)) throw ConfigError("solver: init_scale must be positive");
  if (gd_step < 0 || !std::isfinite(gd_step)) throw ConfigError("solver: gd_step must be >= 0");
  if (!(nu_lo > 0)) throw ConfigError("solver: nu_lo must be positive");
  curvature.validate();
}

Matrix initial_iterate(int s, int t, double init_scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix X(s, t);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = init_scale * normal(rng);
  return X;
}

Matrix mm_step(const Matrix& X, const Matrix& G, const Matrix& p, double gamma, double upsilon) {
  if (X.rows() != G.rows() || X.cols() != G.cols() || X.rows() != p.rows() || X.cols() != p.cols())
    throw ShapeError("mm_step: shape mismatch");
  Matrix out = X - gamma * p.cwiseProduct(G);
  if (!out.allFinite()) throw NumericError("mm_step: non-finite iterate");
  const double nx = out.norm();
  if (nx < upsilon) {
    if (nx == 0.0) throw DomainError("upsilon", "mm_step: iterate collapsed to zero");
    out *= upsilon / nx;
  }
  return out;
}

Matrix mm_step(const Matrix& X, const Matrix& G, const MajorantVector& p, double gamma, double upsilon) {
  return mm_step(X, G, p.p, gamma, upsilon);
}

std::uint64_t power_seed(std::uint64_t seed, int iteration) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(iteration + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SolverTrace solve_lower(const InverseProblemInstance& inst, const PhiParameters& phi,
                        const PredictorParameters* pred, const SolverConfig& cfg,
                        const ObjectiveSpec& spec, ObjectiveHessian* hessian) {
  return solve_lower(inst, phi, pred, cfg, spec, initial_iterate(inst.s(), inst.t(), cfg.init_scale, cfg.seed),
                     hessian);
}

SolverTrace solve_lower(const InverseProblemInstance& inst, const PhiParameters& phi,
                        const PredictorParameters* pred, const SolverConfig& cfg,
                        const ObjectiveSpec& spec, const Matrix& X0, ObjectiveHessian* hessian) {
  cfg.validate();
  spec.validate();
  if (cfg.mode == MajorantMode::learned && !pred) throw ConfigError("solver: learned mode needs predictor parameters");
  if (pred) pred->validate();
  phi.validate();

  const AnalyticCurvature analytic(inst.L, phi, spec, cfg.curvature);
  const bool spectral = cfg.mode == MajorantMode::spectral_fixed ||
                        (cfg.mode == MajorantMode::learned && cfg.learned_box == CurvatureMethod::spectral);
  std::unique_ptr<ObjectiveHessian> own;
  if (spectral) {
    if (!hessian) {
      own = std::make_unique<ObjectiveHessian>(inst.n(), inst.s(), inst.t(), phi, spec);
      hessian = own.get();
    }
    hessian->set_problem(inst.Y, inst.L);
    hessian->set_phi(phi);
  }

  SolverTrace trace;
  PredictorState state;
  Matrix X = X0;
  double gd_step = cfg.gd_step;
  CurvatureInterval frozen;
  bool have_frozen = false;

  auto interval_at = [&](const Matrix& Xi, int i, bool use_spectral) {
    if (cfg.freeze_bounds && have_frozen) return frozen;
    CurvatureInterval iv;
    if (use_spectral) {
      const SpectralEstimate est = hessian->estimate_top(Xi, cfg.curvature, power_seed(cfg.seed, i));
      iv = spectral_interval(est, Xi, &analytic, cfg.nu_lo, cfg.curvature);
      if (iv.fell_back) ++trace.spectral_fallbacks;
    } else {
      iv = interval_from_nu_hi(analytic.nu_hi(Xi), cfg.nu_lo, CurvatureMethod::analytic);
    }
    frozen = iv;
    have_frozen = true;
    return iv;
  };

  auto record = [&](const Matrix& Xi, bool keep) {
    const ObjectiveTerms t = objective_terms(Xi, inst, phi, spec);
    trace.objectives.push_back(t.total);
    trace.fidelity.push_back(t.fidelity);
    trace.regularizer.push_back(t.regularizer);
    if (keep) trace.states.push_back(Xi);
  };

  record(X, true);
  for (int i = 0; i < cfg.inner_iters; ++i) {
    Matrix G;
    MajorantVector p;
    try {
      G = lower_gradient(X, inst, phi, spec);
      trace.gradient_norms.push_back(G.norm());
      switch (cfg.mode) {
        case MajorantMode::analytic_fixed: {
          const CurvatureInterval iv = interval_at(X, i, false);
          p = project_interval(Matrix::Constant(X.rows(), X.cols(), iv.nu_hi), iv, i);
          break;
        }
        case MajorantMode::spectral_fixed: {
          const CurvatureInterval iv = interval_at(X, i, true);
          p = project_interval(Matrix::Constant(X.rows(), X.cols(), iv.nu_hi), iv, i);
          break;
        }
        case MajorantMode::learned: {
          const CurvatureInterval iv = interval_at(X, i, cfg.learned_box == CurvatureMethod::spectral);
          Prediction pr = predict_p(X, G, state, *pred, iv.nu_hi);
          state = std::move(pr.state);
          p = project_interval(pr.p_tilde, iv, i);
          break;
        }
        case MajorantMode::gradient_descent: {
          if (gd_step == 0.0) gd_step = analytic.nu_hi(X);
          CurvatureInterval iv;
          iv.nu_lo = iv.nu_hi = gd_step;
          p = project_interval(Matrix::Constant(X.rows(), X.cols(), gd_step), iv, i);
          break;
        }
      }
      X = mm_step(X, G, p, cfg.gamma, spec.constraints.upsilon);
      const bool last = i + 1 == cfg.inner_iters;
      record(X, cfg.keep_history || last);
    } catch (const DomainError& e) {
      throw DomainError(e.constraint(), std::string(e.what()) + " (iteration " + std::to_string(i) + ")");
    }
    const auto n = trace.objectives.size();
    if (trace.objectives[n - 1] > trace.objectives[n - 2] + 1e-10) ++trace.descent_violations;
    trace.p_vectors.push_back(std::move(p));
  }
  return trace;
}

Matrix calibrate_amplitude(const Matrix& X_hat, const Matrix& L, const Matrix& Y) {
  const Matrix LX = L * X_hat;
  const double den = LX.squaredNorm();
  if (!(den > 0)) throw DomainError("lx_floor", "calibrate_amplitude: L X̂ = 0");
  return (LX.cwiseProduct(Y).sum() / den) * X_hat;
}

nlohmann::json trace_to_json(const SolverTrace& trace, double lambda) {
  nlohmann::json j;
  j["lambda"] = lambda;
  j["objective"] = trace.objectives;
  j["fidelity"] = trace.fidelity;
  j["regularizer"] = trace.regularizer;
  j["gradient_norm"] = trace.gradient_norms;
  std::vector<double> nu_hi, p_mean;
  for (const auto& p : trace.p_vectors) {
    nu_hi.push_back(p.interval.nu_hi);
    p_mean.push_back(p.p.mean());
  }
  j["nu_hi"] = nu_hi;
  j["p_mean"] = p_mean;
  j["descent_violations"] = trace.descent_violations;
  j["spectral_fallbacks"] = trace.spectral_fallbacks;
  return j;
}

}  // namespace mmnet
