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

#include "mmnet/predictor.hpp"

#include <cmath>
#include <random>

#include "mmnet/errors.hpp"

namespace mmnet {

namespace {

constexpr double kRmsFloor = 1e-200;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_gate(const GateParams& g, int in, int h, const char* what) {
  if (g.wx.rows() != h || g.wx.cols() != in || g.wh.rows() != h || g.wh.cols() != h || g.b.size() != h)
    throw ShapeError(std::string("predictor: inconsistent gate ") + what);
  if (!g.wx.allFinite() || !g.wh.allFinite() || !g.b.allFinite())
    throw InvalidInput(std::string("predictor: non-finite gate ") + what);
}

void check_cell(const CellParams& c, int in, int h) {
  check_gate(c.in_gate, in, h, "input");
  check_gate(c.forget_gate, in, h, "forget");
  check_gate(c.out_gate, in, h, "output");
  check_gate(c.candidate, in, h, "candidate");
}

GateParams make_gate(int in, int h, std::mt19937_64* rng) {
  GateParams g{Matrix::Zero(h, in), Matrix::Zero(h, h), Vector::Zero(h)};
  if (rng) {
    const double r = 1.0 / std::sqrt(static_cast<double>(h));
    std::uniform_real_distribution<double> u(-r, r);
    for (Eigen::Index i = 0; i < g.wx.size(); ++i) g.wx.data()[i] = u(*rng);
    for (Eigen::Index i = 0; i < g.wh.size(); ++i) g.wh.data()[i] = u(*rng);
  }
  return g;
}

CellParams make_cell(int in, int h, std::mt19937_64* rng) {
  CellParams c;
  c.in_gate = make_gate(in, h, rng);
  c.forget_gate = make_gate(in, h, rng);
  c.out_gate = make_gate(in, h, rng);
  c.candidate = make_gate(in, h, rng);
  return c;
}

PredictorParameters make_predictor(int h, std::mt19937_64* rng) {
  if (h < 1) throw ConfigError("predictor: hidden_dim must be positive");
  PredictorParameters p;
  p.hidden_dim = h;
  p.cell1 = make_cell(1, h, rng);
  p.cell2 = make_cell(2, h, rng);
  p.head1_w = Matrix::Zero(1, h);
  p.head2_w = Matrix::Zero(1, h);
  p.head1_c = Matrix::Zero(1, 1);
  p.head2_c = Matrix::Zero(1, 1);
  if (rng) {
    const double r = 1.0 / std::sqrt(static_cast<double>(h));
    std::uniform_real_distribution<double> u(-r, r);
    for (Matrix* m : {&p.head1_w, &p.head2_w})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(*rng);
  }
  return p;
}

void append_gate(TensorList& out, const std::string& prefix, GateParams& g) {
  out.push_back({prefix + ".wx", g.wx.data(), static_cast<int>(g.wx.rows()), static_cast<int>(g.wx.cols())});
  out.push_back({prefix + ".wh", g.wh.data(), static_cast<int>(g.wh.rows()), static_cast<int>(g.wh.cols())});
  out.push_back({prefix + ".b", g.b.data(), static_cast<int>(g.b.size()), 1});
}

void append_cell(TensorList& out, const std::string& prefix, CellParams& c) {
  append_gate(out, prefix + ".i", c.in_gate);
  append_gate(out, prefix + ".f", c.forget_gate);
  append_gate(out, prefix + ".o", c.out_gate);
  append_gate(out, prefix + ".g", c.candidate);
}

Matrix pre_activation(const Matrix& input, const Matrix& h, const GateParams& g) {
  Matrix z = g.wx * input;
  if (h.size()) z.noalias() += g.wh * h;
  z.colwise() += g.b;
  return z;
}

Matrix rms_normalized_row(const Matrix& M) {
  const double rms = std::sqrt(M.squaredNorm() / static_cast<double>(M.size()) + kRmsFloor);
  return Eigen::Map<const Matrix>(M.data(), 1, M.size()) / rms;
}

}  // namespace

void PredictorParameters::validate() const {
  check_cell(cell1, 1, hidden_dim);
  check_cell(cell2, 2, hidden_dim);
  if (head1_w.rows() != 1 || head1_w.cols() != hidden_dim || head2_w.rows() != 1 ||
      head2_w.cols() != hidden_dim || head1_c.size() != 1 || head2_c.size() != 1)
    throw ShapeError("predictor: inconsistent heads");
}

TensorList PredictorParameters::tensors() {
  TensorList out;
  append_cell(out, "pred.cell1", cell1);
  append_cell(out, "pred.cell2", cell2);
  out.push_back({"pred.head1.w", head1_w.data(), 1, hidden_dim});
  out.push_back({"pred.head1.c", head1_c.data(), 1, 1});
  out.push_back({"pred.head2.w", head2_w.data(), 1, hidden_dim});
  out.push_back({"pred.head2.c", head2_c.data(), 1, 1});
  return out;
}

PredictorParameters PredictorParameters::zeros_like() const { return make_predictor(hidden_dim, nullptr); }

PredictorParameters init_predictor(int hidden_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_predictor(hidden_dim, &rng);
}

PredictorParameters zero_predictor(int hidden_dim) { return make_predictor(hidden_dim, nullptr); }

CellState cell_step(const Matrix& input, const CellState& state, const CellParams& p) {
  const int h = p.hidden_dim();
  if (input.rows() != p.input_dim()) throw ShapeError("cell_step: input has wrong feature count");
  const bool zero_state = state.h.size() == 0;
  if (!zero_state && (state.h.rows() != h || state.h.cols() != input.cols() || state.c.rows() != h ||
                      state.c.cols() != input.cols()))
    throw ShapeError("cell_step: state shape mismatch");
  const Matrix i = pre_activation(input, state.h, p.in_gate).unaryExpr(&sigmoid);
  const Matrix f = pre_activation(input, state.h, p.forget_gate).unaryExpr(&sigmoid);
  const Matrix o = pre_activation(input, state.h, p.out_gate).unaryExpr(&sigmoid);
  const Matrix g = pre_activation(input, state.h, p.candidate).array().tanh().matrix();
  CellState out;
  out.c = i.cwiseProduct(g);
  if (!zero_state) out.c += f.cwiseProduct(state.c);
  out.h = o.cwiseProduct(out.c.array().tanh().matrix());
  return out;
}

Prediction predict_p(const Matrix& X, const Matrix& G, const PredictorState& state,
                     const PredictorParameters& params, double scale) {
  if (X.rows() != G.rows() || X.cols() != G.cols()) throw ShapeError("predict_p: X and G differ in shape");
  const Matrix g_hat = rms_normalized_row(G);
  const Matrix x_hat = rms_normalized_row(X);
  const CellState s1 = cell_step(g_hat, {state.h1, state.c1}, params.cell1);
  Matrix z1 = params.head1_w * s1.h;
  z1.array() += params.head1_c(0, 0);
  const Matrix o1 = z1.unaryExpr(&softplus);
  Matrix in2(2, X.size());
  in2.row(0) = x_hat;
  in2.row(1) = o1;
  const CellState s2 = cell_step(in2, {state.h2, state.c2}, params.cell2);
  Matrix z2 = params.head2_w * s2.h;
  z2.array() += params.head2_c(0, 0);
  const Matrix o2 = z2.unaryExpr(&softplus);
  Prediction out;
  const Matrix prod = scale * o1.cwiseProduct(o2);
  out.p_tilde = Eigen::Map<const Matrix>(prod.data(), X.rows(), X.cols());
  if (!out.p_tilde.allFinite()) throw NumericError("predict_p: non-finite output");
  out.state = {s1.h, s1.c, s2.h, s2.c};
  return out;
}

MajorantVector project_interval(const Matrix& p_tilde, const CurvatureInterval& interval, int iteration) {
  MajorantVector m;
  m.p = p_tilde.cwiseMax(interval.nu_lo).cwiseMin(interval.nu_hi);
  m.interval = interval;
  m.iteration = iteration;
  return m;
}

std::vector<ad::Expr> PredictorExprs::all() const {
  std::vector<ad::Expr> out;
  for (const Cell* c : {&cell1, &cell2})
    for (const Gate* g : {&c->in_gate, &c->forget_gate, &c->out_gate, &c->candidate}) {
      out.push_back(g->wx);
      out.push_back(g->wh);
      out.push_back(g->b);
    }
  for (ad::Expr e : {head1_w, head1_c, head2_w, head2_c}) out.push_back(e);
  return out;
}

PredictorExprs predictor_variables(ad::Graph& g, const PredictorParameters& p, const std::string& prefix) {
  p.validate();
  const int h = p.hidden_dim;
  auto gate = [&](const std::string& name, int in) {
    return PredictorExprs::Gate{g.variable(name + ".wx", h, in), g.variable(name + ".wh", h, h),
                                g.variable(name + ".b", h, 1)};
  };
  auto cell = [&](const std::string& name, int in) {
    return PredictorExprs::Cell{gate(name + ".i", in), gate(name + ".f", in), gate(name + ".o", in),
                                gate(name + ".g", in)};
  };
  PredictorExprs e;
  e.hidden_dim = h;
  e.cell1 = cell(prefix + ".cell1", 1);
  e.cell2 = cell(prefix + ".cell2", 2);
  e.head1_w = g.variable(prefix + ".head1.w", 1, h);
  e.head1_c = g.variable(prefix + ".head1.c", 1, 1);
  e.head2_w = g.variable(prefix + ".head2.w", 1, h);
  e.head2_c = g.variable(prefix + ".head2.c", 1, 1);
  return e;
}

void bind_predictor(ad::Tape& tape, const PredictorExprs& e, const PredictorParameters& p) {
  const auto exprs = e.all();
  PredictorParameters copy = p;
  const TensorList tensors = copy.tensors();
  for (std::size_t i = 0; i < exprs.size(); ++i) {
    const TensorRef& t = tensors[i];
    tape.bind(exprs[i], Eigen::Map<const Matrix>(t.data, t.rows, t.cols));
  }
}

namespace {

struct CellExprs {
  ad::Expr h, c;
};

ad::Expr gate_graph(ad::Graph& g, const PredictorExprs::Gate& p, ad::Expr input, ad::Expr h) {
  ad::Expr z = g.matmul(p.wx, input);
  if (h.valid()) z = g.add(z, g.matmul(p.wh, h));
  return g.add_bias(z, p.b);
}

CellExprs cell_graph(ad::Graph& g, const PredictorExprs::Cell& p, ad::Expr input, ad::Expr h, ad::Expr c) {
  const ad::Expr i = g.sigmoid(gate_graph(g, p.in_gate, input, h));
  const ad::Expr f = g.sigmoid(gate_graph(g, p.forget_gate, input, h));
  const ad::Expr o = g.sigmoid(gate_graph(g, p.out_gate, input, h));
  const ad::Expr cand = g.tanh(gate_graph(g, p.candidate, input, h));
  ad::Expr c_new = g.elem_mul(i, cand);
  if (c.valid()) c_new = g.add(c_new, g.elem_mul(f, c));
  return {g.elem_mul(o, g.tanh(c_new)), c_new};
}

ad::Expr rms_normalized_row_graph(ad::Graph& g, ad::Expr M) {
  const int n = g.rows(M) * g.cols(M);
  const ad::Expr rms = g.sqrt(g.scale(g.dot(M, M), 1.0 / n, kRmsFloor));
  return g.div(g.reshape(M, 1, n), rms);
}

}  // namespace

PredictionExprs predictor_graph(ad::Graph& g, const PredictorExprs& p, ad::Expr X, ad::Expr G,
                                const StateExprs& state, ad::Expr scale) {
  const int rows = g.rows(X), cols = g.cols(X);
  const ad::Expr g_hat = rms_normalized_row_graph(g, G);
  const ad::Expr x_hat = rms_normalized_row_graph(g, X);
  const CellExprs s1 = cell_graph(g, p.cell1, g_hat, state.h1, state.c1);
  const ad::Expr o1 = g.softplus(g.add_bias(g.matmul(p.head1_w, s1.h), p.head1_c));
  const CellExprs s2 = cell_graph(g, p.cell2, g.concat_rows(x_hat, o1), state.h2, state.c2);
  const ad::Expr o2 = g.softplus(g.add_bias(g.matmul(p.head2_w, s2.h), p.head2_c));
  PredictionExprs out;
  out.p_tilde = g.reshape(g.mul(scale, g.elem_mul(o1, o2)), rows, cols);
  out.state = {s1.h, s1.c, s2.h, s2.c};
  return out;
}

}  // namespace mmnet
