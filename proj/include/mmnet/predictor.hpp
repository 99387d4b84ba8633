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
#include "mmnet/curvature.hpp"
#include "mmnet/linalg.hpp"
#include "mmnet/tensor_ref.hpp"

namespace mmnet {

// Affine pre-activation of one gate: wx * input + wh * h + b.
struct GateParams {
  Matrix wx, wh;
  Vector b;
};

// Gated recurrent cell with input, forget and output gates and a tanh
// candidate. Every coordinate of the signal is an independent sequence with
// `input_dim` features, so one set of weights serves any signal size.
struct CellParams {
  GateParams in_gate, forget_gate, out_gate, candidate;

  int input_dim() const { return static_cast<int>(in_gate.wx.cols()); }
  int hidden_dim() const { return static_cast<int>(in_gate.wx.rows()); }
};

// Two cells and their softplus heads. F1 reads the normalized gradient; F2
// reads the normalized iterate together with F1's output.
struct PredictorParameters {
  int hidden_dim = 32;
  CellParams cell1, cell2;
  Matrix head1_w, head1_c, head2_w, head2_c;  // 1 x H and 1 x 1

  void validate() const;
  TensorList tensors();
  PredictorParameters zeros_like() const;
};

// Weights uniform in ±1/sqrt(H), biases zero.
PredictorParameters init_predictor(int hidden_dim, std::uint64_t seed);
PredictorParameters zero_predictor(int hidden_dim);

// Hidden and cell states, H x N with N the number of signal coordinates.
// Empty matrices stand for the zero state at the start of a solve.
struct PredictorState {
  Matrix h1, c1, h2, c2;
  void reset() { *this = PredictorState{}; }
};

struct CellState {
  Matrix h, c;
};

// One step for all coordinates at once. `input` is input_dim x N.
CellState cell_step(const Matrix& input, const CellState& state, const CellParams& p);

struct Prediction {
  Matrix p_tilde;  // same shape as X
  PredictorState state;
};

// p̃ = scale · F1(ĝ) ⊙ F2(x̂, F1(ĝ)), ĝ and x̂ the RMS-normalized gradient and iterate.
Prediction predict_p(const Matrix& X, const Matrix& G, const PredictorState& state,
                     const PredictorParameters& params, double scale);

struct MajorantVector {
  Matrix p;
  CurvatureInterval interval;
  int iteration = 0;
};

// Elementwise clamp onto [nu_lo, nu_hi].
MajorantVector project_interval(const Matrix& p_tilde, const CurvatureInterval& interval,
                                int iteration = 0);

// Graph-side mirror of PredictorParameters, same tensor order as tensors().
struct PredictorExprs {
  struct Gate { ad::Expr wx, wh, b; };
  struct Cell { Gate in_gate, forget_gate, out_gate, candidate; };
  Cell cell1, cell2;
  ad::Expr head1_w, head1_c, head2_w, head2_c;
  int hidden_dim = 0;
  std::vector<ad::Expr> all() const;
};

struct StateExprs {
  ad::Expr h1, c1, h2, c2;  // invalid handles mean the zero state
};

struct PredictionExprs {
  ad::Expr p_tilde;
  StateExprs state;
};

PredictorExprs predictor_variables(ad::Graph& g, const PredictorParameters& shape_of,
                                   const std::string& prefix = "pred");
void bind_predictor(ad::Tape& tape, const PredictorExprs& e, const PredictorParameters& p);
PredictionExprs predictor_graph(ad::Graph& g, const PredictorExprs& p, ad::Expr X, ad::Expr G,
                                const StateExprs& state, ad::Expr scale);

}  // namespace mmnet
