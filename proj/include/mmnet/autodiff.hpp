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

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmnet/linalg.hpp"

namespace mmnet::ad {

enum class Op : std::uint8_t {
  Constant,
  Variable,
  Add,
  Sub,
  Mul,         // 1x1 scalar times matrix
  Div,         // elementwise, or by a 1x1 scalar
  Dot,         // sum of elementwise products -> 1x1
  Norm2,       // Frobenius norm -> 1x1
  MatMul,
  Scale,       // a*x + b elementwise, a and b fixed
  Sum,         // -> 1x1
  Sqrt,        // elementwise
  ElemMul,
  SoftRelu,    // k-th derivative of the SoftReLU, elementwise
  Sigmoid,
  Tanh,
  Softplus,
  Transpose,
  Reshape,     // row-major reinterpretation
  AddBias,     // (r x c) + (r x 1) broadcast over columns
  RowSum,      // (r x c) -> (r x 1)
  Broadcast,   // (1 x 1) or (r x 1) -> (r x c)
  Clamp,       // clamp(x, lo, hi) with 1x1 bounds
  ClampMask,   // 1 where lo <= x <= hi, else 0
  ConcatRows,
  RowSlice,
  PadRows,     // zero-pad rows around x to a total row count
};

const char* op_name(Op op);

// Handle to a node of a Graph. Handles are only meaningful for the graph that
// created them.
struct Expr {
  int id = -1;
  bool valid() const { return id >= 0; }
  auto operator<=>(const Expr&) const = default;
};

struct Node {
  Op op;
  int rows = 0;
  int cols = 0;
  std::vector<int> in;
  double a = 0.0;  // Scale factor, SoftRelu epsilon
  double b = 0.0;  // Scale offset
  int k = 0;       // SoftRelu derivative order, RowSlice/PadRows offset
  Matrix value;    // Constant payload
  std::string name;
};

// Append-only expression DAG. Node ids are a topological order: every child
// id is smaller than its parent's. Builders check shapes and throw ShapeError.
class Graph {
 public:
  Expr constant(const Matrix& value);
  Expr scalar(double value);
  Expr variable(const std::string& name, int rows, int cols);

  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr mul(Expr s, Expr x);
  Expr div(Expr a, Expr b);
  Expr dot(Expr a, Expr b);
  Expr norm2(Expr x);
  Expr matmul(Expr a, Expr b);
  Expr scale(Expr x, double a, double b = 0.0);
  Expr sum(Expr x);
  Expr sqrt(Expr x);
  Expr elem_mul(Expr a, Expr b);
  Expr soft_relu(Expr x, double eps, int order = 0);
  Expr sigmoid(Expr x);
  Expr tanh(Expr x);
  Expr softplus(Expr x);
  Expr transpose(Expr x);
  Expr reshape(Expr x, int rows, int cols);
  Expr add_bias(Expr m, Expr bias);
  Expr row_sum(Expr m);
  Expr broadcast(Expr x, int rows, int cols);
  Expr clamp(Expr x, Expr lo, Expr hi);
  Expr clamp_mask(Expr x, Expr lo, Expr hi);
  Expr concat_rows(Expr a, Expr b);
  Expr row_slice(Expr x, int start, int count);
  Expr pad_rows(Expr x, int start, int total);

  // sqrt(sum(x^2) + eps^2): a norm that stays differentiable at zero.
  Expr norm1_smooth(Expr x, double eps);
  // <a, b> / (|a| |b|) over all entries.
  Expr cos_sim(Expr a, Expr b);

  // Symbolic reverse sweep from the scalar `root`. Appends the adjoint
  // expressions to this graph and returns one per entry of `wrt`, shaped
  // like it. Nodes in `wrt` are treated as leaves, so the result is the
  // partial derivative holding everything upstream of them fixed. Because the
  // result is itself a graph expression it can be differentiated again.
  std::vector<Expr> gradients(Expr root, const std::vector<Expr>& wrt);
  Expr gradient(Expr root, Expr wrt) { return gradients(root, {wrt})[0]; }

  const Node& node(Expr e) const { return nodes_.at(static_cast<std::size_t>(e.id)); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int rows(Expr e) const { return node(e).rows; }
  int cols(Expr e) const { return node(e).cols; }
  // Ids of nodes that read `id` directly.
  const std::vector<int>& consumers(int id) const { return consumers_[static_cast<std::size_t>(id)]; }

 private:
  Expr push(Node n);
  void check(Expr e) const;
  Expr zeros_like(int id);

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> consumers_;
};

// Primal buffers for one evaluation context over a Graph. Values are computed
// on demand and memoized; rebinding a variable invalidates exactly the nodes
// that depend on it. A Tape is single-threaded; use one per concurrent solve.
class Tape {
 public:
  explicit Tape(const Graph& g) : g_(&g) {}

  void bind(Expr var, const Matrix& value);
  void bind_scalar(Expr var, double value);
  bool bound(Expr var) const;
  const Matrix& value(Expr e);
  double scalar(Expr e);
  // Forget every computed and bound value; buffers are kept for reuse.
  void reset();

 private:
  void grow();
  void compute(int id);
  void invalidate_from(int id);

  const Graph* g_;
  std::vector<Matrix> val_;
  std::vector<char> ready_;
};

using Bindings = std::map<Expr, Matrix>;

// One-shot helpers on top of Graph/Tape. Each builds its derivative nodes in
// `g`, so repeated calls grow the graph; reuse HvpOperator in loops.
double evaluate(const Graph& g, Expr root, const Bindings& bindings);
Matrix gradient(Graph& g, Expr root, const Bindings& bindings, Expr wrt);
Matrix hvp(Graph& g, Expr root, const Bindings& bindings, Expr wrt, const Matrix& v);

// Hessian-vector products of a scalar root with respect to one variable.
// The gradient and the gradient-dot-v program are built once; between calls
// only nodes depending on the point or on v are recomputed.
class HvpOperator {
 public:
  HvpOperator(Graph& g, Expr root, Expr wrt);

  void set_point(const Matrix& x);
  Tape& tape() { return tape_; }
  double value();
  const Matrix& gradient();
  Matrix apply(const Matrix& v);

 private:
  Graph* g_;
  Expr root_, wrt_, v_, grad_, hv_;
  Tape tape_;
};

}  // namespace mmnet::ad
