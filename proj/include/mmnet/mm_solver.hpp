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
#include <vector>

#include <json.hpp>

#include "mmnet/curvature.hpp"
#include "mmnet/losses.hpp"
#include "mmnet/phi_net.hpp"
#include "mmnet/predictor.hpp"
#include "mmnet/problem.hpp"

namespace mmnet {

enum class MajorantMode { learned, analytic_fixed, spectral_fixed, gradient_descent };

const char* mode_name(MajorantMode m);
MajorantMode parse_mode(const std::string& s);
const char* method_name(CurvatureMethod m);
CurvatureMethod parse_method(const std::string& s);

struct SolverConfig {
  int inner_iters = 10;
  double gamma = 1.0;
  double init_scale = 1e-3;
  MajorantMode mode = MajorantMode::analytic_fixed;
  std::uint64_t seed = 0;
  // Constant step of the gradient-descent baseline; 0 selects the analytic
  // bound evaluated once at the initial iterate.
  double gd_step = 0.0;
  // Interval the learned p is projected onto.
  CurvatureMethod learned_box = CurvatureMethod::analytic;
  double nu_lo = 1e-12;
  // Evaluate the curvature interval once at x⁰ instead of at every iterate.
  bool freeze_bounds = false;
  // Keep every iterate; when false only x⁰ and x^I are stored.
  bool keep_history = true;
  CurvatureOptions curvature;

  void validate() const;
};

struct SolverTrace {
  std::vector<Matrix> states;
  std::vector<double> objectives;
  std::vector<double> fidelity;
  std::vector<double> regularizer;
  std::vector<double> gradient_norms;
  std::vector<MajorantVector> p_vectors;
  int descent_violations = 0;
  int spectral_fallbacks = 0;

  const Matrix& final_state() const { return states.back(); }
};

// x⁰ = init_scale · N(0, 1), s x t.
Matrix initial_iterate(int s, int t, double init_scale, std::uint64_t seed);

// x − γ p ⊙ g, radially rescaled to norm upsilon when it falls below.
Matrix mm_step(const Matrix& X, const Matrix& G, const Matrix& p, double gamma, double upsilon);
Matrix mm_step(const Matrix& X, const Matrix& G, const MajorantVector& p, double gamma, double upsilon);

// Seed of the power iteration at iteration i of a solve seeded by `seed`.
std::uint64_t power_seed(std::uint64_t seed, int iteration);

// I iterations of the lower-level MM scheme. `pred` is required in learned
// mode. `hessian` optionally supplies a compiled Hessian program for the
// spectral routes; a private one is built when it is null.
SolverTrace solve_lower(const InverseProblemInstance& inst, const PhiParameters& phi,
                        const PredictorParameters* pred, const SolverConfig& cfg,
                        const ObjectiveSpec& spec, ObjectiveHessian* hessian = nullptr);
SolverTrace solve_lower(const InverseProblemInstance& inst, const PhiParameters& phi,
                        const PredictorParameters* pred, const SolverConfig& cfg,
                        const ObjectiveSpec& spec, const Matrix& X0, ObjectiveHessian* hessian = nullptr);

// The objective is invariant to the scale of x, so estimates are reported
// after the least-squares amplitude fit c = <L X̂, Y> / ‖L X̂‖².
Matrix calibrate_amplitude(const Matrix& X_hat, const Matrix& L, const Matrix& Y);

nlohmann::json trace_to_json(const SolverTrace& trace, double lambda);

}  // namespace mmnet
