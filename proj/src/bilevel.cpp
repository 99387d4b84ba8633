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

#include "mmnet/bilevel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "mmnet/binio.hpp"
#include "mmnet/errors.hpp"

namespace mmnet {

namespace fs = std::filesystem;

TensorList ModelParameters::tensors() {
  TensorList out = phi.tensors();
  for (auto& t : predictor.tensors()) out.push_back(t);
  return out;
}

ModelParameters ModelParameters::zeros_like() const { return {phi.zeros_like(), predictor.zeros_like()}; }

AdamState AdamState::zeros(const TensorList& params) {
  AdamState s;
  for (const auto& t : params) {
    s.m.push_back(Vector::Zero(t.size()));
    s.v.push_back(Vector::Zero(t.size()));
  }
  return s;
}

void adaptive_moment_step(const TensorList& params, const std::vector<Vector>& grads, AdamState& st,
                          const AdamConfig& cfg) {
  if (grads.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw ShapeError("adam: parameter, gradient and moment counts differ");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].flat();
    const Vector& g = grads[k];
    if (g.size() != p.size() || st.m[k].size() != p.size()) throw ShapeError("adam: shape mismatch for " + params[k].name);
    if (!g.allFinite()) throw NumericError("adam: non-finite gradient for " + params[k].name);
    st.m[k] = cfg.beta1 * st.m[k] + (1.0 - cfg.beta1) * g;
    st.v[k] = cfg.beta2 * st.v[k] + (1.0 - cfg.beta2) * g.cwiseAbs2();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double mhat = st.m[k](i) / c1;
      const double vhat = st.v[k](i) / c2;
      p(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------- unroll

UnrolledProgram::UnrolledProgram(int n, int s, int t, const ModelParameters& shape_of, const SolverConfig& solver,
                                 const ObjectiveSpec& spec)
    : n_(n), s_(s), t_(t), solver_(solver), spec_(spec), graph_(std::make_unique<ad::Graph>()) {
  solver_.validate();
  spec_.validate();
  ad::Graph& g = *graph_;
  X0_ = g.variable("X0", s, t);
  Y_ = g.variable("Y", n, t);
  L_ = g.variable("L", n, s);
  Xtrue_ = g.variable("X_true", s, t);
  phi_ = phi_variables(g, shape_of.phi);
  pred_ = predictor_variables(g, shape_of.predictor);
  const ad::Expr nu_lo = g.scalar(solver_.nu_lo);

  ad::Expr X = X0_;
  StateExprs state;
  for (int i = 0; i < solver_.inner_iters; ++i) {
    const ad::Expr u = lower_objective_graph(g, X, Y_, L_, phi_, spec_).total;
    const ad::Expr G = g.gradient(u, X);
    const ad::Expr nu = g.variable("nu_" + std::to_string(i), 1, 1);
    const PredictionExprs pr = predictor_graph(g, pred_, X, G, state, nu);
    state = pr.state;
    const ad::Expr p = g.clamp(pr.p_tilde, nu_lo, nu);
    const ad::Expr pre = g.sub(X, g.scale(g.elem_mul(p, G), solver_.gamma));
    const ad::Expr r = g.variable("radial_" + std::to_string(i), 1, 1);
    X = g.mul(r, pre);
    u_.push_back(u);
    nu_.push_back(nu);
    p_.push_back(p);
    pre_.push_back(pre);
    radial_.push_back(r);
    states_.push_back(X);
  }
  u_.push_back(lower_objective_graph(g, X, Y_, L_, phi_, spec_).total);
  loss_ = upper_loss_graph(g, Xtrue_, X, phi_);
  std::vector<ad::Expr> params = phi_.all();
  for (ad::Expr e : pred_.all()) params.push_back(e);
  grads_ = g.gradients(loss_, params);
  tape_ = std::make_unique<ad::Tape>(g);
  if (solver_.learned_box == CurvatureMethod::spectral)
    hessian_ = std::make_unique<ObjectiveHessian>(n, s, t, shape_of.phi, spec_);
}

UnrollResult UnrolledProgram::run(const InverseProblemInstance& inst, const Matrix& X0, const ModelParameters& params,
                                  std::uint64_t seed, bool with_gradient, const std::vector<double>* fixed_nu,
                                  const std::vector<double>* fixed_radial) {
  if (inst.n() != n_ || inst.s() != s_ || inst.t() != t_) throw ShapeError("unroll: instance shape differs from program");
  const int I = solver_.inner_iters;
  if ((fixed_nu && static_cast<int>(fixed_nu->size()) != I) || (fixed_radial && static_cast<int>(fixed_radial->size()) != I))
    throw InvalidInput("unroll: fixed constants must have one entry per iteration");
  ad::Tape& tape = *tape_;
  tape.reset();
  tape.bind(X0_, X0);
  tape.bind(Y_, inst.Y);
  tape.bind(L_, inst.L);
  tape.bind(Xtrue_, inst.X_true);
  bind_phi(tape, phi_, params.phi);
  bind_predictor(tape, pred_, params.predictor);

  std::unique_ptr<AnalyticCurvature> analytic;
  if (!fixed_nu) analytic = std::make_unique<AnalyticCurvature>(inst.L, params.phi, spec_, solver_.curvature);
  if (!fixed_nu && hessian_) {
    hessian_->set_problem(inst.Y, inst.L);
    hessian_->set_phi(params.phi);
  }

  UnrollResult res;
  for (int i = 0; i < I; ++i) {
    const Matrix& Xi = tape.value(i == 0 ? X0_ : states_[static_cast<std::size_t>(i - 1)]);
    double nu;
    if (fixed_nu) {
      nu = (*fixed_nu)[static_cast<std::size_t>(i)];
    } else if (solver_.freeze_bounds && i > 0) {
      nu = res.nu_hi.front();
    } else if (hessian_) {
      const SpectralEstimate est = hessian_->estimate_top(Xi, solver_.curvature, power_seed(seed, i));
      nu = spectral_interval(est, Xi, analytic.get(), solver_.nu_lo, solver_.curvature).nu_hi;
    } else {
      nu = analytic->nu_hi(Xi);
    }
    res.nu_hi.push_back(nu);
    tape.bind_scalar(nu_[static_cast<std::size_t>(i)], nu);
    double r = 1.0;
    if (fixed_radial) {
      r = (*fixed_radial)[static_cast<std::size_t>(i)];
    } else {
      const double norm = tape.value(pre_[static_cast<std::size_t>(i)]).norm();
      if (!std::isfinite(norm)) throw NumericError("unroll: non-finite iterate at iteration " + std::to_string(i));
      if (norm < spec_.constraints.upsilon) {
        if (norm == 0.0) throw DomainError("upsilon", "unroll: iterate collapsed to zero");
        r = spec_.constraints.upsilon / norm;
      }
    }
    res.radial.push_back(r);
    tape.bind_scalar(radial_[static_cast<std::size_t>(i)], r);
    const Matrix& p = tape.value(p_[static_cast<std::size_t>(i)]);
    const double lo = std::min(solver_.nu_lo, nu);
    res.p_violations += static_cast<int>(((p.array() < lo) || (p.array() > nu)).count());
  }
  for (const auto& u : u_) res.objectives.push_back(tape.scalar(u));
  for (std::size_t i = 1; i < res.objectives.size(); ++i)
    if (res.objectives[i] > res.objectives[i - 1] + 1e-10) ++res.descent_violations;
  res.X_final = tape.value(states_.back());
  res.loss = tape.scalar(loss_);
  if (with_gradient) {
    for (ad::Expr gexpr : grads_) {
      const Matrix& gv = tape.value(gexpr);
      res.grads.emplace_back(Eigen::Map<const Vector>(gv.data(), gv.size()));
    }
  }
  return res;
}

// ---------------------------------------------------------------- records

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"lower_objective", r.lower_objective},
          {"descent_violations", r.descent_violations},
          {"p_violations", r.p_violations},
          {"skipped", r.skipped}};
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.val_loss = j.at("val_loss").get<double>();
  r.lower_objective = j.at("lower_objective").get<double>();
  r.descent_violations = j.at("descent_violations").get<int>();
  r.p_violations = j.at("p_violations").get<int>();
  r.skipped = j.at("skipped").get<int>();
  return r;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (hidden_dim < 1) throw ConfigError("train: hidden_dim must be >= 1");
  if (checkpoint_every < 0 || max_train < 0 || max_val < 0) throw ConfigError("train: negative count");
  if (solver.mode != MajorantMode::learned) throw ConfigError("train: solver mode must be learned");
  objective.validate();
  solver.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"hidden_dim", c.hidden_dim},
          {"phi_jitter", c.phi_jitter},
          {"seed", c.seed},
          {"lambda", c.objective.lambda},
          {"reduction", c.objective.reduction == CosineReduction::flattened ? "flattened" : "per-column"},
          {"inner_iters", c.solver.inner_iters},
          {"gamma", c.solver.gamma},
          {"init_scale", c.solver.init_scale},
          {"box", method_name(c.solver.learned_box)},
          {"nu_lo", c.solver.nu_lo},
          {"power_iters", c.solver.curvature.power_iters},
          {"safety_factor", c.solver.curvature.safety_factor}};
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr std::size_t kHeader = 4 + 4 + 8;

ModelParameters model_from_shapes(int s, int h1, int h2, double eps, int hidden) {
  if (s < 1 || h1 < 1 || h2 < 1 || hidden < 1) throw FormatError("checkpoint: non-positive dimension in metadata", kHeader);
  ModelParameters m;
  m.phi.W1 = Matrix::Zero(h1, s);
  m.phi.W2 = Matrix::Zero(h2, h1);
  m.phi.W3 = Matrix::Zero(s, h2);
  m.phi.b1 = Vector::Zero(h1);
  m.phi.b2 = Vector::Zero(h2);
  m.phi.b3 = Vector::Zero(s);
  m.phi.epsilon_sigma = eps;
  m.predictor = zero_predictor(hidden);
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
  Checkpoint copy = ck;
  TensorList tensors = copy.params.tensors();
  const bool has_moments = !copy.adam.m.empty();
  if (has_moments && (copy.adam.m.size() != tensors.size() || copy.adam.v.size() != tensors.size()))
    throw InvalidInput("save_checkpoint: optimizer moments do not match parameters");

  nlohmann::json meta;
  meta["format"] = "mmnet-checkpoint";
  meta["phi"] = {{"s", copy.params.phi.input_dim()},
                 {"hidden1", copy.params.phi.hidden1()},
                 {"hidden2", copy.params.phi.hidden2()},
                 {"epsilon_sigma", copy.params.phi.epsilon_sigma}};
  meta["predictor"] = {{"hidden_dim", copy.params.predictor.hidden_dim}};
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : tensors) table.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  meta["tensors"] = table;
  meta["adam"] = {{"step", copy.adam.step}, {"has_moments", has_moments}};
  meta["epoch"] = copy.epoch;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : copy.history) hist.push_back(to_json(r));
  meta["history"] = hist;
  meta["config"] = copy.config.is_null() ? nlohmann::json::object() : copy.config;
  const std::string text = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  binio::put<std::uint32_t>(os, kCheckpointVersion);
  binio::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) binio::put_f64(os, t.data, static_cast<std::size_t>(t.size()));
  if (has_moments) {
    for (const auto& m : copy.adam.m) binio::put_f64(os, m.data(), static_cast<std::size_t>(m.size()));
    for (const auto& v : copy.adam.v) binio::put_f64(os, v.data(), static_cast<std::size_t>(v.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(is)), {});
  if (buf.size() < kHeader) throw FormatError("checkpoint: truncated header", static_cast<std::int64_t>(buf.size()));
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic", 0);
  const auto version = binio::get<std::uint32_t>(buf, 4);
  if (version != kCheckpointVersion)
    throw UnsupportedVersion("checkpoint: unsupported version " + std::to_string(version), 4);
  const auto meta_len = binio::get<std::uint64_t>(buf, 8);
  if (meta_len > buf.size() - kHeader)
    throw FormatError("checkpoint: truncated metadata", static_cast<std::int64_t>(buf.size()));

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(buf.begin() + kHeader, buf.begin() + static_cast<std::ptrdiff_t>(kHeader + meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: metadata: ") + e.what(), static_cast<std::int64_t>(kHeader + e.byte));
  }

  Checkpoint ck;
  bool has_moments = false;
  try {
    const auto& phi = meta.at("phi");
    ck.params = model_from_shapes(phi.at("s").get<int>(), phi.at("hidden1").get<int>(), phi.at("hidden2").get<int>(),
                                  phi.at("epsilon_sigma").get<double>(), meta.at("predictor").at("hidden_dim").get<int>());
    ck.adam.step = meta.at("adam").at("step").get<std::int64_t>();
    has_moments = meta.at("adam").at("has_moments").get<bool>();
    ck.epoch = meta.at("epoch").get<int>();
    for (const auto& r : meta.at("history")) ck.history.push_back(epoch_record_from_json(r));
    ck.config = meta.at("config");
    const auto& table = meta.at("tensors");
    const TensorList expected = ck.params.tensors();
    if (table.size() != expected.size()) throw FormatError("checkpoint: shape table has wrong tensor count", kHeader);
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const auto& e = table.at(k);
      if (e.at("name").get<std::string>() != expected[k].name || e.at("rows").get<int>() != expected[k].rows ||
          e.at("cols").get<int>() != expected[k].cols)
        throw FormatError("checkpoint: shape table entry " + std::to_string(k) + " (" + expected[k].name +
                              ") is inconsistent",
                          kHeader);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: metadata: ") + e.what(), kHeader);
  }

  TensorList tensors = ck.params.tensors();
  std::size_t total = 0;
  for (const auto& t : tensors) total += static_cast<std::size_t>(t.size());
  const std::size_t copies = has_moments ? 3 : 1;
  std::size_t offset = kHeader + meta_len;
  const std::size_t need = total * copies * sizeof(double);
  if (buf.size() - offset != need)
    throw FormatError("checkpoint: tensor payload is " + std::to_string(buf.size() - offset) + " bytes, expected " +
                          std::to_string(need),
                      static_cast<std::int64_t>(std::min(buf.size(), offset + need)));
  for (auto& t : tensors) {
    binio::get_f64(buf, offset, t.data, static_cast<std::size_t>(t.size()));
    offset += static_cast<std::size_t>(t.size()) * sizeof(double);
  }
  if (has_moments) {
    ck.adam = [&] {
      AdamState a = AdamState::zeros(tensors);
      a.step = ck.adam.step;
      return a;
    }();
    for (auto* group : {&ck.adam.m, &ck.adam.v})
      for (auto& vec : *group) {
        binio::get_f64(buf, offset, vec.data(), static_cast<std::size_t>(vec.size()));
        offset += static_cast<std::size_t>(vec.size()) * sizeof(double);
      }
  }
  ck.params.phi.validate();
  ck.params.predictor.validate();
  return ck;
}

// ---------------------------------------------------------------- training

std::uint64_t solve_seed(std::uint64_t seed, int index) {
  return sample_seed(seed ^ 0x5157u, static_cast<std::uint64_t>(index));
}

ModelParameters initial_model(int s, const TrainConfig& cfg) {
  ModelParameters m;
  m.phi = init_phi(s, sample_seed(cfg.seed, 0xF1), cfg.phi_jitter);
  m.predictor = init_predictor(cfg.hidden_dim, sample_seed(cfg.seed, 0xF2));
  return m;
}

namespace {

std::vector<int> truncated(const std::vector<int>& v, int cap) {
  if (cap <= 0 || cap >= static_cast<int>(v.size())) return v;
  return {v.begin(), v.begin() + cap};
}

double mean_val_loss(UnrolledProgram& prog, const Dataset& data, const std::vector<int>& idx,
                     const ModelParameters& params, const TrainConfig& cfg) {
  double acc = 0.0;
  int used = 0;
  for (int i : idx) {
    const InverseProblemInstance inst = data.instance(i);
    const std::uint64_t seed = solve_seed(cfg.seed, i);
    const Matrix X0 = initial_iterate(inst.s(), inst.t(), cfg.solver.init_scale, seed);
    try {
      acc += prog.run(inst, X0, params, seed, false).loss;
      ++used;
    } catch (const CurvatureUnavailable&) {
    }
  }
  return used ? acc / used : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double validation_loss(const Dataset& data, const std::vector<int>& indices, const ModelParameters& params,
                       const TrainConfig& cfg) {
  ModelParameters shape = params;
  UnrolledProgram prog(data.config.n, data.config.s, data.config.t, shape, cfg.solver, cfg.objective);
  return mean_val_loss(prog, data, indices, params, cfg);
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const Checkpoint* resume, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.count() < 1 || data.train.empty()) throw InvalidInput("train: dataset has no training samples");
  Checkpoint cur;
  if (resume) {
    cur = *resume;
  } else {
    cur.params = initial_model(data.config.s, cfg);
    cur.adam = AdamState::zeros(cur.params.tensors());
  }
  cur.config = to_json(cfg);
  if (cur.params.phi.input_dim() != data.config.s) throw ShapeError("train: model and dataset disagree on s");
  if (cur.params.predictor.hidden_dim != cfg.hidden_dim && !resume)
    throw ShapeError("train: predictor hidden size mismatch");
  if (cur.adam.m.empty()) cur.adam = AdamState::zeros(cur.params.tensors());

  const std::vector<int> train_idx = truncated(data.train, cfg.max_train);
  const std::vector<int> val_idx = truncated(data.val, cfg.max_val);
  UnrolledProgram prog(data.config.n, data.config.s, data.config.t, cur.params, cfg.solver, cfg.objective);
  const AdamConfig adam{cfg.learning_rate};

  TrainResult out;
  out.log = cur.history;
  double best_val = std::numeric_limits<double>::infinity();
  for (const auto& r : cur.history) best_val = std::min(best_val, r.val_loss);
  out.best = cur;
  out.last = cur;

  for (int epoch = cur.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = train_idx;
    std::mt19937_64 rng(sample_seed(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    int used = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      TensorList tensors = cur.params.tensors();
      std::vector<Vector> grads;
      for (const auto& t : tensors) grads.push_back(Vector::Zero(t.size()));
      int in_batch = 0;
      for (std::size_t j = start; j < stop; ++j) {
        const int idx = order[j];
        const InverseProblemInstance inst = data.instance(idx);
        const std::uint64_t seed = solve_seed(cfg.seed, idx);
        const Matrix X0 = initial_iterate(inst.s(), inst.t(), cfg.solver.init_scale, seed);
        UnrollResult r;
        try {
          r = prog.run(inst, X0, cur.params, seed, true);
        } catch (const CurvatureUnavailable&) {
          ++rec.skipped;
          continue;
        }
        if (!std::isfinite(r.loss))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));
        for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += r.grads[k];
        rec.train_loss += r.loss;
        rec.lower_objective += r.objectives.back();
        rec.descent_violations += r.descent_violations;
        rec.p_violations += r.p_violations;
        ++in_batch;
        ++used;
      }
      if (in_batch == 0) continue;
      for (auto& g : grads) g /= static_cast<double>(in_batch);
      adaptive_moment_step(tensors, grads, cur.adam, adam);
    }
    if (used) {
      rec.train_loss /= used;
      rec.lower_objective /= used;
    }
    rec.val_loss = val_idx.empty() ? rec.train_loss : mean_val_loss(prog, data, val_idx, cur.params, cfg);
    cur.epoch = epoch;
    cur.history.push_back(rec);
    out.log.push_back(rec);
    const bool improved = rec.val_loss < best_val;
    if (improved) {
      best_val = rec.val_loss;
      out.best = cur;
    }
    out.last = cur;
    if (on_epoch) on_epoch(rec, cur, improved);
  }
  return out;
}

}  // namespace mmnet
