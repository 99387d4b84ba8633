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

#include "mmnet/autodiff.hpp"

#include <cmath>
#include <string>

#include "mmnet/errors.hpp"

namespace mmnet::ad {

namespace {

std::string shape_str(int r, int c) { return std::to_string(r) + "x" + std::to_string(c); }

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus_scalar(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double soft_relu_scalar(double z, double eps, int order) {
  const double q = z * z + eps * eps;
  const double r = std::sqrt(q);
  const double e2 = eps * eps;
  switch (order) {
    case 0: return 0.5 * (z + r);
    case 1: return 0.5 * (1.0 + z / r);
    case 2: return 0.5 * e2 / (q * r);
    case 3: return -1.5 * e2 * z / (q * q * r);
    case 4: return -1.5 * e2 * (e2 - 4.0 * z * z) / (q * q * q * r);
    default: throw InvalidInput("soft_relu: derivative order above 4");
  }
}

Node make(Op op, int rows, int cols, std::vector<int> in) {
  Node n;
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.in = std::move(in);
  return n;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Variable: return "variable";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Dot: return "dot";
    case Op::Norm2: return "norm2";
    case Op::MatMul: return "matmul";
    case Op::Scale: return "scale";
    case Op::Sum: return "sum";
    case Op::Sqrt: return "sqrt";
    case Op::ElemMul: return "elem_mul";
    case Op::SoftRelu: return "soft_relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::AddBias: return "add_bias";
    case Op::RowSum: return "row_sum";
    case Op::Broadcast: return "broadcast";
    case Op::Clamp: return "clamp";
    case Op::ClampMask: return "clamp_mask";
    case Op::ConcatRows: return "concat_rows";
    case Op::RowSlice: return "row_slice";
    case Op::PadRows: return "pad_rows";
  }
  return "?";
}

// ---------------------------------------------------------------- builders

Expr Graph::push(Node n) {
  const int id = size();
  for (int c : n.in) consumers_[static_cast<std::size_t>(c)].push_back(id);
  nodes_.push_back(std::move(n));
  consumers_.emplace_back();
  return Expr{id};
}

void Graph::check(Expr e) const {
  if (e.id < 0 || e.id >= size()) throw InvalidInput("autodiff: expression does not belong to graph");
}

Expr Graph::constant(const Matrix& value) {
  if (value.size() == 0) throw ShapeError("constant: empty matrix");
  if (!value.allFinite()) throw InvalidInput("constant: non-finite entries");
  Node n = make(Op::Constant, 0, 0, {});
  n.rows = static_cast<int>(value.rows());
  n.cols = static_cast<int>(value.cols());
  n.value = value;
  return push(std::move(n));
}

Expr Graph::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Expr Graph::variable(const std::string& name, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ShapeError("variable " + name + ": non-positive shape");
  Node n = make(Op::Variable, 0, 0, {});
  n.rows = rows;
  n.cols = cols;
  n.name = name;
  return push(std::move(n));
}

#define MMNET_SAME_SHAPE(what, a, b)                                                  \
  if (rows(a) != rows(b) || cols(a) != cols(b))                                       \
    throw ShapeError(std::string(what) + ": " + shape_str(rows(a), cols(a)) + " vs " + \
                     shape_str(rows(b), cols(b)));

Expr Graph::add(Expr a, Expr b) {
  check(a), check(b);
  MMNET_SAME_SHAPE("add", a, b);
  return push(make(Op::Add, rows(a), cols(a), {a.id, b.id}));
}

Expr Graph::sub(Expr a, Expr b) {
  check(a), check(b);
  MMNET_SAME_SHAPE("sub", a, b);
  return push(make(Op::Sub, rows(a), cols(a), {a.id, b.id}));
}

Expr Graph::mul(Expr s, Expr x) {
  check(s), check(x);
  if (rows(s) != 1 || cols(s) != 1) throw ShapeError("mul: left operand must be 1x1");
  return push(make(Op::Mul, rows(x), cols(x), {s.id, x.id}));
}

Expr Graph::div(Expr a, Expr b) {
  check(a), check(b);
  const bool by_scalar = rows(b) == 1 && cols(b) == 1;
  if (!by_scalar) MMNET_SAME_SHAPE("div", a, b);
  return push(make(Op::Div, rows(a), cols(a), {a.id, b.id}));
}

Expr Graph::dot(Expr a, Expr b) {
  check(a), check(b);
  MMNET_SAME_SHAPE("dot", a, b);
  return push(make(Op::Dot, 1, 1, {a.id, b.id}));
}

Expr Graph::norm2(Expr x) {
  check(x);
  return push(make(Op::Norm2, 1, 1, {x.id}));
}

Expr Graph::matmul(Expr a, Expr b) {
  check(a), check(b);
  if (cols(a) != rows(b))
    throw ShapeError("matmul: " + shape_str(rows(a), cols(a)) + " times " +
                     shape_str(rows(b), cols(b)));
  return push(make(Op::MatMul, rows(a), cols(b), {a.id, b.id}));
}

Expr Graph::scale(Expr x, double a, double b) {
  check(x);
  Node n = make(Op::Scale, rows(x), cols(x), {x.id});
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

Expr Graph::sum(Expr x) {
  check(x);
  return push(make(Op::Sum, 1, 1, {x.id}));
}

Expr Graph::sqrt(Expr x) {
  check(x);
  return push(make(Op::Sqrt, rows(x), cols(x), {x.id}));
}

Expr Graph::elem_mul(Expr a, Expr b) {
  check(a), check(b);
  MMNET_SAME_SHAPE("elem_mul", a, b);
  return push(make(Op::ElemMul, rows(a), cols(a), {a.id, b.id}));
}

Expr Graph::soft_relu(Expr x, double eps, int order) {
  check(x);
  if (!(eps > 0)) throw ConfigError("soft_relu: epsilon must be positive");
  if (order < 0 || order > 4) throw InvalidInput("soft_relu: derivative order must be in [0, 4]");
  Node n = make(Op::SoftRelu, rows(x), cols(x), {x.id});
  n.a = eps;
  n.k = order;
  return push(std::move(n));
}

Expr Graph::sigmoid(Expr x) {
  check(x);
  return push(make(Op::Sigmoid, rows(x), cols(x), {x.id}));
}

Expr Graph::tanh(Expr x) {
  check(x);
  return push(make(Op::Tanh, rows(x), cols(x), {x.id}));
}

Expr Graph::softplus(Expr x) {
  check(x);
  return push(make(Op::Softplus, rows(x), cols(x), {x.id}));
}

Expr Graph::transpose(Expr x) {
  check(x);
  return push(make(Op::Transpose, cols(x), rows(x), {x.id}));
}

Expr Graph::reshape(Expr x, int r, int c) {
  check(x);
  if (r < 1 || c < 1 || static_cast<long>(r) * c != static_cast<long>(rows(x)) * cols(x))
    throw ShapeError("reshape: " + shape_str(rows(x), cols(x)) + " to " + shape_str(r, c));
  return push(make(Op::Reshape, r, c, {x.id}));
}

Expr Graph::add_bias(Expr m, Expr bias) {
  check(m), check(bias);
  if (cols(bias) != 1 || rows(bias) != rows(m))
    throw ShapeError("add_bias: bias " + shape_str(rows(bias), cols(bias)) + " for " +
                     shape_str(rows(m), cols(m)));
  return push(make(Op::AddBias, rows(m), cols(m), {m.id, bias.id}));
}

Expr Graph::row_sum(Expr m) {
  check(m);
  return push(make(Op::RowSum, rows(m), 1, {m.id}));
}

Expr Graph::broadcast(Expr x, int r, int c) {
  check(x);
  const bool ok = cols(x) == 1 && (rows(x) == 1 || rows(x) == r);
  if (!ok || r < 1 || c < 1)
    throw ShapeError("broadcast: " + shape_str(rows(x), cols(x)) + " to " + shape_str(r, c));
  return push(make(Op::Broadcast, r, c, {x.id}));
}

Expr Graph::clamp(Expr x, Expr lo, Expr hi) {
  check(x), check(lo), check(hi);
  if (rows(lo) * cols(lo) != 1 || rows(hi) * cols(hi) != 1)
    throw ShapeError("clamp: bounds must be 1x1");
  return push(make(Op::Clamp, rows(x), cols(x), {x.id, lo.id, hi.id}));
}

Expr Graph::clamp_mask(Expr x, Expr lo, Expr hi) {
  check(x), check(lo), check(hi);
  if (rows(lo) * cols(lo) != 1 || rows(hi) * cols(hi) != 1)
    throw ShapeError("clamp_mask: bounds must be 1x1");
  return push(make(Op::ClampMask, rows(x), cols(x), {x.id, lo.id, hi.id}));
}

Expr Graph::concat_rows(Expr a, Expr b) {
  check(a), check(b);
  if (cols(a) != cols(b)) throw ShapeError("concat_rows: column counts differ");
  return push(make(Op::ConcatRows, rows(a) + rows(b), cols(a), {a.id, b.id}));
}

Expr Graph::row_slice(Expr x, int start, int count) {
  check(x);
  if (start < 0 || count < 1 || start + count > rows(x))
    throw ShapeError("row_slice: rows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") of " + std::to_string(rows(x)));
  Node n = make(Op::RowSlice, count, cols(x), {x.id});
  n.k = start;
  return push(std::move(n));
}

Expr Graph::pad_rows(Expr x, int start, int total) {
  check(x);
  if (start < 0 || start + rows(x) > total) throw ShapeError("pad_rows: window out of range");
  Node n = make(Op::PadRows, total, cols(x), {x.id});
  n.k = start;
  return push(std::move(n));
}

#undef MMNET_SAME_SHAPE

Expr Graph::norm1_smooth(Expr x, double eps) {
  return sqrt(scale(dot(x, x), 1.0, eps * eps));
}

Expr Graph::cos_sim(Expr a, Expr b) {
  return div(dot(a, b), elem_mul(norm2(a), norm2(b)));
}

Expr Graph::zeros_like(int id) {
  return constant(Matrix::Zero(node(id).rows, node(id).cols));
}

// ---------------------------------------------------------------- gradients

std::vector<Expr> Graph::gradients(Expr root, const std::vector<Expr>& wrt) {
  check(root);
  if (rows(root) != 1 || cols(root) != 1) throw ShapeError("gradients: root must be 1x1");
  const int n_root = root.id;
  std::vector<char> is_wrt(static_cast<std::size_t>(n_root + 1), 0);
  int lowest = n_root + 1;
  for (Expr w : wrt) {
    check(w);
    if (w.id <= n_root) is_wrt[static_cast<std::size_t>(w.id)] = 1;
    lowest = std::min(lowest, w.id);
  }

  // Nodes between the wrt set and the root. wrt nodes count as leaves.
  std::vector<char> dep(static_cast<std::size_t>(n_root + 1), 0);
  for (int id = std::max(lowest, 0); id <= n_root; ++id) {
    if (is_wrt[static_cast<std::size_t>(id)]) {
      dep[static_cast<std::size_t>(id)] = 1;
      continue;
    }
    for (int c : node(id).in)
      if (c >= lowest && dep[static_cast<std::size_t>(c)]) {
        dep[static_cast<std::size_t>(id)] = 1;
        break;
      }
  }
  std::vector<int> adj(static_cast<std::size_t>(n_root + 1), -1);
  auto accumulate = [&](int target, Expr contrib) {
    if (target < lowest || !dep[static_cast<std::size_t>(target)]) return;
    int& slot = adj[static_cast<std::size_t>(target)];
    slot = slot < 0 ? contrib.id : add(Expr{slot}, contrib).id;
  };
  if (dep[static_cast<std::size_t>(n_root)]) adj[static_cast<std::size_t>(n_root)] = scalar(1.0).id;

  for (int id = n_root; id >= lowest && id >= 0; --id) {
    const int a_id = adj[static_cast<std::size_t>(id)];
    if (a_id < 0 || is_wrt[static_cast<std::size_t>(id)]) continue;
    // Copy: push() may reallocate nodes_.
    const Node nd = node(id);
    const Expr a{a_id};
    const Expr y{id};
    auto in = [&](int i) { return Expr{nd.in[static_cast<std::size_t>(i)]}; };
    auto needs = [&](int i) {
      const int c = nd.in[static_cast<std::size_t>(i)];
      return c >= lowest && dep[static_cast<std::size_t>(c)];
    };
    switch (nd.op) {
      case Op::Constant:
      case Op::Variable:
      case Op::ClampMask:
        break;
      case Op::Add:
        if (needs(0)) accumulate(nd.in[0], a);
        if (needs(1)) accumulate(nd.in[1], a);
        break;
      case Op::Sub:
        if (needs(0)) accumulate(nd.in[0], a);
        if (needs(1)) accumulate(nd.in[1], scale(a, -1.0));
        break;
      case Op::Mul:
        if (needs(0)) accumulate(nd.in[0], dot(a, in(1)));
        if (needs(1)) accumulate(nd.in[1], mul(in(0), a));
        break;
      case Op::Div: {
        const bool by_scalar = rows(in(1)) == 1 && cols(in(1)) == 1;
        if (needs(0)) accumulate(nd.in[0], div(a, in(1)));
        if (needs(1)) {
          if (by_scalar)
            accumulate(nd.in[1], scale(div(dot(a, y), in(1)), -1.0));
          else
            accumulate(nd.in[1], scale(elem_mul(a, div(y, in(1))), -1.0));
        }
        break;
      }
      case Op::Dot:
        if (needs(0)) accumulate(nd.in[0], mul(a, in(1)));
        if (needs(1)) accumulate(nd.in[1], mul(a, in(0)));
        break;
      case Op::Norm2:
        accumulate(nd.in[0], mul(div(a, y), in(0)));
        break;
      case Op::MatMul:
        if (needs(0)) accumulate(nd.in[0], matmul(a, transpose(in(1))));
        if (needs(1)) accumulate(nd.in[1], matmul(transpose(in(0)), a));
        break;
      case Op::Scale:
        accumulate(nd.in[0], scale(a, nd.a));
        break;
      case Op::Sum:
        accumulate(nd.in[0], broadcast(a, rows(in(0)), cols(in(0))));
        break;
      case Op::Sqrt:
        accumulate(nd.in[0], div(a, scale(y, 2.0)));
        break;
      case Op::ElemMul:
        if (needs(0)) accumulate(nd.in[0], elem_mul(a, in(1)));
        if (needs(1)) accumulate(nd.in[1], elem_mul(a, in(0)));
        break;
      case Op::SoftRelu:
        accumulate(nd.in[0], elem_mul(a, soft_relu(in(0), nd.a, nd.k + 1)));
        break;
      case Op::Sigmoid:
        accumulate(nd.in[0], elem_mul(a, elem_mul(y, scale(y, -1.0, 1.0))));
        break;
      case Op::Tanh:
        accumulate(nd.in[0], elem_mul(a, scale(elem_mul(y, y), -1.0, 1.0)));
        break;
      case Op::Softplus:
        accumulate(nd.in[0], elem_mul(a, sigmoid(in(0))));
        break;
      case Op::Transpose:
        accumulate(nd.in[0], transpose(a));
        break;
      case Op::Reshape:
        accumulate(nd.in[0], reshape(a, rows(in(0)), cols(in(0))));
        break;
      case Op::AddBias:
        if (needs(0)) accumulate(nd.in[0], a);
        if (needs(1)) accumulate(nd.in[1], row_sum(a));
        break;
      case Op::RowSum:
        accumulate(nd.in[0], broadcast(a, rows(in(0)), cols(in(0))));
        break;
      case Op::Broadcast:
        accumulate(nd.in[0], rows(in(0)) == 1 && nd.rows != 1 ? sum(a) : row_sum(a));
        break;
      case Op::Clamp:
        if (needs(0)) accumulate(nd.in[0], elem_mul(a, clamp_mask(in(0), in(1), in(2))));
        break;
      case Op::ConcatRows:
        if (needs(0)) accumulate(nd.in[0], row_slice(a, 0, rows(in(0))));
        if (needs(1)) accumulate(nd.in[1], row_slice(a, rows(in(0)), rows(in(1))));
        break;
      case Op::RowSlice:
        accumulate(nd.in[0], pad_rows(a, nd.k, rows(in(0))));
        break;
      case Op::PadRows:
        accumulate(nd.in[0], row_slice(a, nd.k, rows(in(0))));
        break;
    }
  }

  std::vector<Expr> out;
  out.reserve(wrt.size());
  for (Expr w : wrt) {
    const int a_id = w.id <= n_root ? adj[static_cast<std::size_t>(w.id)] : -1;
    out.push_back(a_id >= 0 ? Expr{a_id} : zeros_like(w.id));
  }
  return out;
}

// ---------------------------------------------------------------- tape

void Tape::grow() {
  const auto n = static_cast<std::size_t>(g_->size());
  if (val_.size() < n) {
    val_.resize(n);
    ready_.resize(n, 0);
  }
}

void Tape::bind(Expr var, const Matrix& value) {
  grow();
  const Node& nd = g_->node(var);
  if (nd.op != Op::Variable) throw InvalidInput("bind: node is not a variable");
  if (value.rows() != nd.rows || value.cols() != nd.cols)
    throw ShapeError("bind " + nd.name + ": expected " + shape_str(nd.rows, nd.cols) + ", got " +
                     shape_str(static_cast<int>(value.rows()), static_cast<int>(value.cols())));
  if (!value.allFinite()) throw EvaluationError("bind " + nd.name + ": non-finite value");
  invalidate_from(var.id);
  val_[static_cast<std::size_t>(var.id)] = value;
  ready_[static_cast<std::size_t>(var.id)] = 1;
}

void Tape::bind_scalar(Expr var, double value) { bind(var, Matrix::Constant(1, 1, value)); }

bool Tape::bound(Expr var) const {
  return static_cast<std::size_t>(var.id) < ready_.size() && ready_[static_cast<std::size_t>(var.id)];
}

void Tape::invalidate_from(int id) {
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (int c : g_->consumers(cur)) {
      if (static_cast<std::size_t>(c) < ready_.size() && ready_[static_cast<std::size_t>(c)]) {
        ready_[static_cast<std::size_t>(c)] = 0;
        stack.push_back(c);
      }
    }
  }
}

void Tape::reset() { std::fill(ready_.begin(), ready_.end(), 0); }

const Matrix& Tape::value(Expr e) {
  grow();
  if (e.id < 0 || e.id >= g_->size()) throw InvalidInput("tape: expression does not belong to graph");
  if (ready_[static_cast<std::size_t>(e.id)]) return val_[static_cast<std::size_t>(e.id)];
  // Iterative post-order so deep unrolled programs cannot overflow the stack.
  std::vector<std::pair<int, bool>> stack{{e.id, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (ready_[static_cast<std::size_t>(id)]) continue;
    if (expanded) {
      compute(id);
      continue;
    }
    stack.push_back({id, true});
    for (int c : g_->node(id).in)
      if (!ready_[static_cast<std::size_t>(c)]) stack.push_back({c, false});
  }
  return val_[static_cast<std::size_t>(e.id)];
}

double Tape::scalar(Expr e) {
  const Matrix& m = value(e);
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("tape: scalar() on non-1x1 node");
  return m(0, 0);
}

void Tape::compute(int id) {
  const Node& nd = g_->node(id);
  auto arg = [&](int i) -> const Matrix& {
    return val_[static_cast<std::size_t>(nd.in[static_cast<std::size_t>(i)])];
  };
  Matrix& out = val_[static_cast<std::size_t>(id)];
  switch (nd.op) {
    case Op::Constant:
      out = nd.value;
      break;
    case Op::Variable:
      throw EvaluationError("unbound variable '" + nd.name + "'");
    case Op::Add:
      out = arg(0) + arg(1);
      break;
    case Op::Sub:
      out = arg(0) - arg(1);
      break;
    case Op::Mul:
      out = arg(0)(0, 0) * arg(1);
      break;
    case Op::Div: {
      const Matrix& d = arg(1);
      if (d.size() == 1) {
        if (d(0, 0) == 0.0) throw EvaluationError("division by zero");
        out = arg(0) / d(0, 0);
      } else {
        if ((d.array() == 0.0).any()) throw EvaluationError("division by zero");
        out = arg(0).cwiseQuotient(d);
      }
      break;
    }
    case Op::Dot:
      out.resize(1, 1);
      out(0, 0) = arg(0).cwiseProduct(arg(1)).sum();
      break;
    case Op::Norm2: {
      const double v = arg(0).norm();
      if (v < 1e-12) throw EvaluationError("norm of a (near-)zero input");
      out.resize(1, 1);
      out(0, 0) = v;
      break;
    }
    case Op::MatMul:
      out.noalias() = arg(0) * arg(1);
      break;
    case Op::Scale:
      out = (nd.a * arg(0).array() + nd.b).matrix();
      break;
    case Op::Sum:
      out.resize(1, 1);
      out(0, 0) = arg(0).sum();
      break;
    case Op::Sqrt:
      if ((arg(0).array() < 0.0).any()) throw EvaluationError("square root of a negative value");
      out = arg(0).cwiseSqrt();
      break;
    case Op::ElemMul:
      out = arg(0).cwiseProduct(arg(1));
      break;
    case Op::SoftRelu: {
      const double eps = nd.a;
      const int k = nd.k;
      out = arg(0).unaryExpr([eps, k](double z) { return soft_relu_scalar(z, eps, k); });
      break;
    }
    case Op::Sigmoid:
      out = arg(0).unaryExpr([](double z) { return sigmoid_scalar(z); });
      break;
    case Op::Tanh:
      out = arg(0).array().tanh().matrix();
      break;
    case Op::Softplus:
      out = arg(0).unaryExpr([](double z) { return softplus_scalar(z); });
      break;
    case Op::Transpose:
      out = arg(0).transpose();
      break;
    case Op::Reshape:
      out = Eigen::Map<const Matrix>(arg(0).data(), nd.rows, nd.cols);
      break;
    case Op::AddBias:
      out = arg(0);
      out.colwise() += arg(1).col(0);
      break;
    case Op::RowSum:
      out = arg(0).rowwise().sum();
      break;
    case Op::Broadcast:
      if (arg(0).rows() == 1)
        out = Matrix::Constant(nd.rows, nd.cols, arg(0)(0, 0));
      else
        out = arg(0).col(0).replicate(1, nd.cols);
      break;
    case Op::Clamp:
      out = arg(0).cwiseMax(arg(1)(0, 0)).cwiseMin(arg(2)(0, 0));
      break;
    case Op::ClampMask: {
      const double lo = arg(1)(0, 0), hi = arg(2)(0, 0);
      out = arg(0).unaryExpr([lo, hi](double z) { return (z >= lo && z <= hi) ? 1.0 : 0.0; });
      break;
    }
    case Op::ConcatRows:
      out.resize(nd.rows, nd.cols);
      out.topRows(arg(0).rows()) = arg(0);
      out.bottomRows(arg(1).rows()) = arg(1);
      break;
    case Op::RowSlice:
      out = arg(0).middleRows(nd.k, nd.rows);
      break;
    case Op::PadRows:
      out = Matrix::Zero(nd.rows, nd.cols);
      out.middleRows(nd.k, arg(0).rows()) = arg(0);
      break;
  }
  ready_[static_cast<std::size_t>(id)] = 1;
}

// ---------------------------------------------------------------- helpers

namespace {

void bind_all(Tape& tape, const Bindings& bindings) {
  for (const auto& [var, value] : bindings) tape.bind(var, value);
}

}  // namespace

double evaluate(const Graph& g, Expr root, const Bindings& bindings) {
  if (g.rows(root) != 1 || g.cols(root) != 1) throw ShapeError("evaluate: root must be 1x1");
  Tape tape(g);
  bind_all(tape, bindings);
  return tape.scalar(root);
}

Matrix gradient(Graph& g, Expr root, const Bindings& bindings, Expr wrt) {
  if (!bindings.count(wrt)) throw EvaluationError("gradient: wrt variable is not bound");
  const Expr grad = g.gradient(root, wrt);
  Tape tape(g);
  bind_all(tape, bindings);
  tape.value(root);
  return tape.value(grad);
}

Matrix hvp(Graph& g, Expr root, const Bindings& bindings, Expr wrt, const Matrix& v) {
  if (!bindings.count(wrt)) throw EvaluationError("hvp: wrt variable is not bound");
  HvpOperator op(g, root, wrt);
  bind_all(op.tape(), bindings);
  op.tape().value(root);
  return op.apply(v);
}

HvpOperator::HvpOperator(Graph& g, Expr root, Expr wrt) : g_(&g), root_(root), wrt_(wrt), tape_(g) {
  if (g.node(wrt).op != Op::Variable) throw InvalidInput("hvp: wrt must be a variable");
  grad_ = g.gradient(root, wrt);
  v_ = g.variable("hvp_direction", g.rows(wrt), g.cols(wrt));
  hv_ = g.gradient(g.dot(grad_, v_), wrt);
}

void HvpOperator::set_point(const Matrix& x) { tape_.bind(wrt_, x); }

double HvpOperator::value() { return tape_.scalar(root_); }

const Matrix& HvpOperator::gradient() { return tape_.value(grad_); }

Matrix HvpOperator::apply(const Matrix& v) {
  tape_.bind(v_, v);
  return tape_.value(hv_);
}

}  // namespace mmnet::ad
