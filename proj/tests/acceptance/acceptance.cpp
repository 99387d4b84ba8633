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

// Acceptance suite. Prints one PASS/FAIL line per criterion; pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mmnet/autodiff.hpp"
#include "mmnet/bilevel.hpp"
#include "mmnet/curvature.hpp"
#include "mmnet/datagen.hpp"
#include "mmnet/errors.hpp"
#include "mmnet/losses.hpp"
#include "mmnet/metrics.hpp"
#include "mmnet/mm_solver.hpp"
#include "mmnet/phi_net.hpp"
#include "mmnet/predictor.hpp"
#include "oracles.hpp"

using namespace mmnet;
namespace fs = std::filesystem;

namespace {

// Desk-scale training recipe, chosen to fit the 15 minute budget on one core.
constexpr int kDeskEpochs = 20;
constexpr double kDeskLearningRate = 3e-4;
constexpr int kDeskHidden = 8;
constexpr int kDeskMaxVal = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

InverseProblemInstance random_instance(int n, int s, int t, std::mt19937_64& rng) {
  InverseProblemInstance inst;
  inst.L = oracle::random_matrix(n, s, rng);
  inst.X_true = oracle::random_matrix(s, t, rng);
  inst.Y = inst.L * inst.X_true + 0.3 * oracle::random_matrix(n, t, rng);
  return inst;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double spectral_norm_oracle(const Matrix& m) { return oracle::jacobi_singular_values(m).front(); }

// ---------------------------------------------------------------- 1

Outcome majorization_validity() {
  std::mt19937_64 rng(101);
  int pass = 0, total = 0;
  double worst = -1e300;
  for (int k = 0; k < 1000; ++k) {
    const int n = uniform_int(rng, 3, 8), s = uniform_int(rng, 4, 10), t = uniform_int(rng, 1, 3);
    const InverseProblemInstance inst = random_instance(n, s, t, rng);
    const PhiParameters phi = random_phi(s, s, 7000 + static_cast<std::uint64_t>(k), log_uniform(rng, 0.3, 1.5));
    ObjectiveSpec spec;
    spec.lambda = log_uniform(rng, 0.1, 10.0);
    const Matrix Xb = oracle::random_matrix(s, t, rng, log_uniform(rng, 0.1, 10.0));
    const double nu = AnalyticCurvature(inst.L, phi, spec).nu_hi(Xb);
    Matrix P = Matrix::Constant(s, t, nu);
    if (k % 2) {
      std::uniform_real_distribution<double> f(0.1, 1.0);
      for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] *= f(rng);
    }
    // Candidates along the MM step, the reverse step and random directions.
    const Matrix G = lower_gradient(Xb, inst, phi, spec);
    const double ub = lower_objective(Xb, inst, phi, spec);
    const Matrix X = (k % 3 == 0)   ? Matrix(Xb - P.cwiseProduct(G))
                     : (k % 3 == 1) ? Matrix(Xb + log_uniform(rng, 1e-3, 1.0) * Xb.norm() *
                                                      oracle::random_matrix(s, t, rng) / std::sqrt(double(s * t)))
                                    : Matrix(Xb - log_uniform(rng, 0.1, 3.0) * P.cwiseProduct(G));
    double u;
    try {
      check_domain(X, inst, spec);
      u = lower_objective(X, inst, phi, spec);
    } catch (const DomainError&) {
      --k;
      continue;
    }
    ++total;
    const double gap = quadratic_majorant(ub, G, X, Xb, P) - (u - 1e-9 * (1 + std::abs(u)));
    worst = std::max(worst, -gap);
    pass += gap >= 0;
  }
  return {pass == total, std::to_string(pass) + "/" + std::to_string(total) + " majorized"};
}

// ---------------------------------------------------------------- 2

// Gradient of 1 - cos(y, L x) with respect to x, written out directly.
Vector fidelity_grad(const Matrix& L, const Vector& y, const Vector& x) {
  const Vector a = L * x;
  const double na = a.norm(), ny = y.norm(), c = a.dot(y) / (na * ny);
  return -L.transpose() * (y / (na * ny) - c * a / (na * na));
}

Outcome fidelity_hessian_bound() {
  std::mt19937_64 rng(202);
  int pass = 0;
  double worst_ratio = 0;
  for (int k = 0; k < 1000; ++k) {
    const int n = uniform_int(rng, 2, 10), s = uniform_int(rng, 2, 12);
    const Matrix L = oracle::random_matrix(n, s, rng, log_uniform(rng, 0.1, 10));
    const Vector y = oracle::random_matrix(n, 1, rng);
    const Vector x = oracle::random_matrix(s, 1, rng, log_uniform(rng, 0.01, 100));
    const Matrix H = oracle::fd_hessian(
        [&](const Matrix& p) { return Matrix(fidelity_grad(L, y, Vector(p))); }, Matrix(x), 1e-6 * x.norm());
    const double eig = oracle::bisection_eigmax(H);
    const double bound = 5 * std::pow(spectral_norm_oracle(L), 2) / (L * x).squaredNorm();
    const double lib = fidelity_bound(L, Matrix(x));
    pass += eig <= bound + 1e-8 && std::abs(lib - bound) <= 1e-9 * bound;
    worst_ratio = std::max(worst_ratio, eig / bound);
  }
  return {pass == 1000, std::to_string(pass) + "/1000, max eigmax/bound " + fmt("%.3f", worst_ratio)};
}

// ---------------------------------------------------------------- 3

Outcome network_bounds() {
  std::mt19937_64 rng(303);
  int pass_j = 0, pass_h = 0, total = 0;
  double worst_j = 0, worst_h = 0;
  for (int net = 0; net < 20; ++net) {
    const int s = uniform_int(rng, 2, 8);
    PhiParameters phi = random_phi(s, s, 900 + static_cast<std::uint64_t>(net), log_uniform(rng, 0.5, 2.0));
    phi.epsilon_sigma = log_uniform(rng, 0.05, 1.0);
    const double n1 = spectral_norm_oracle(phi.W1), n2 = spectral_norm_oracle(phi.W2), n3 = spectral_norm_oracle(phi.W3);
    double col1 = 0;
    for (Eigen::Index j = 0; j < phi.W2.cols(); ++j) col1 = std::max(col1, phi.W2.col(j).cwiseAbs().sum());
    const double jb = n3 * n2 * n1;
    const double hb = n3 * (n1 * n1 * n2 * n2 + col1 * n1 * n1) / (2 * phi.epsilon_sigma);
    for (int k = 0; k < 500; ++k) {
      const Vector x = oracle::random_matrix(s, 1, rng, log_uniform(rng, 0.01, 3.0));
      const double h = 1e-6;
      Matrix J(s, s);
      for (int c = 0; c < s; ++c) {
        Vector e = Vector::Zero(s);
        e(c) = h;
        J.col(c) = (phi_forward(Vector(x + e), phi) - phi_forward(Vector(x - e), phi)) / (2 * h);
      }
      const double jn = spectral_norm_oracle(J);
      pass_j += jn <= jb * (1 + 1e-7);
      worst_j = std::max(worst_j, jn / jb);
      std::vector<Matrix> Hs(static_cast<std::size_t>(s), Matrix(s, s));
      const double h2 = 1e-5;
      for (int c = 0; c < s; ++c) {
        Vector e = Vector::Zero(s);
        e(c) = h2;
        const Matrix d = (phi_jacobian(Vector(x + e), phi) - phi_jacobian(Vector(x - e), phi)) / (2 * h2);
        for (int i = 0; i < s; ++i) Hs[static_cast<std::size_t>(i)].col(c) = d.row(i).transpose();
      }
      double emax = -1e300;
      for (Matrix& Hi : Hs) emax = std::max(emax, oracle::bisection_eigmax(0.5 * (Hi + Hi.transpose())));
      pass_h += emax <= hb * (1 + 1e-7);
      worst_h = std::max(worst_h, emax / hb);
      ++total;
    }
  }
  return {pass_j == total && pass_h == total,
          "Jacobian " + std::to_string(pass_j) + "/" + std::to_string(total) + " (max ratio " + fmt("%.3f", worst_j) +
              "), Hessian " + std::to_string(pass_h) + "/" + std::to_string(total) + " (max ratio " +
              fmt("%.3f", worst_h) + ")"};
}

// ---------------------------------------------------------------- 4

Outcome power_iteration_accuracy() {
  std::mt19937_64 rng(404);
  int pass = 0;
  double worst = 0, worst_top = 0;
  for (int k = 0; k < 100; ++k) {
    const int s = uniform_int(rng, 4, 32), n = std::max(2, s / 2), t = 1;
    const InverseProblemInstance inst = random_instance(n, s, t, rng);
    const PhiParameters phi = random_phi(s, s, 4000 + static_cast<std::uint64_t>(k), log_uniform(rng, 0.3, 1.0));
    const ObjectiveSpec spec;
    const Matrix X = oracle::random_matrix(s, t, rng);
    ObjectiveHessian oh(n, s, t, phi, spec);
    oh.set_problem(inst.Y, inst.L);
    oh.set_phi(phi);
    const SpectralEstimate est = oh.estimate(X, 20, 50 + static_cast<std::uint64_t>(k), 1e-6);
    const Matrix H = oracle::fd_hessian([&](const Matrix& p) { return lower_gradient(p, inst, phi, spec); }, X, 1e-5);
    const Matrix Hs = 0.5 * (H + H.transpose());
    const double top = oracle::bisection_eigmax(Hs), bottom = -oracle::bisection_eigmax(-Hs);
    const double dominant = std::abs(top) >= std::abs(bottom) ? top : bottom;
    const double err = std::abs(est.lambda_hat - dominant) / std::abs(dominant);
    pass += err <= 0.01;
    worst = std::max(worst, err);
    CurvatureOptions opts;
    const SpectralEstimate t2 = oh.estimate_top(X, opts, 50 + static_cast<std::uint64_t>(k));
    worst_top = std::max(worst_top, std::abs(t2.lambda_hat - top) / std::abs(top));
  }
  return {pass == 100, std::to_string(pass) + "/100 within 1% of the dominant eigenvalue (max rel err " +
                           fmt("%.2e", worst) + "; shifted estimate vs largest eigenvalue max rel err " +
                           fmt("%.2e", worst_top) + ")"};
}

// ---------------------------------------------------------------- 5

Outcome autodiff_correctness() {
  std::mt19937_64 rng(505);
  int grad_pass = 0, grad_total = 0, hvp_pass = 0, sym_pass = 0;
  double worst_g = 0, worst_h = 0, worst_s = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const int n = uniform_int(rng, 2, 6), s = uniform_int(rng, 2, 8), t = uniform_int(rng, 1, 3);
    const InverseProblemInstance inst = random_instance(n, s, t, rng);
    const PhiParameters phi = random_phi(s, s, 5000 + static_cast<std::uint64_t>(seed), 0.8);
    ObjectiveSpec spec;
    spec.reduction = seed % 2 ? CosineReduction::per_column : CosineReduction::flattened;
    const Matrix X = oracle::random_matrix(s, t, rng);

    // Lower objective: gradient, HVP and symmetry on the compiled program.
    ObjectiveHessian oh(n, s, t, phi, spec);
    oh.set_problem(inst.Y, inst.L);
    oh.set_phi(phi);
    auto f = [&](const Matrix& p) {
      oh.set_point(p);
      return oh.value();
    };
    auto g = [&](const Matrix& p) {
      oh.set_point(p);
      return oh.gradient();
    };
    const Matrix fdg = oracle::fd_gradient(f, X, 1e-6);
    const double eg = oracle::rel_err(g(X), fdg, 1e-12);
    ++grad_total;
    grad_pass += eg <= 1e-6;
    worst_g = std::max(worst_g, eg);

    const Matrix v = oracle::random_matrix(s, t, rng), w = oracle::random_matrix(s, t, rng);
    oh.set_point(X);
    const Matrix hv = oh.apply(v), hw = oh.apply(w);
    const double h = 1e-5;
    const Matrix fdh = (g(X + h * v) - g(X - h * v)) / (2 * h);
    const double eh = oracle::rel_err(hv, fdh, 1e-12);
    hvp_pass += eh <= 1e-5;
    worst_h = std::max(worst_h, eh);
    const double a = (w.array() * hv.array()).sum(), b = (v.array() * hw.array()).sum();
    const double es = std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    sym_pass += es <= 1e-8;
    worst_s = std::max(worst_s, es);

    // Upper loss with respect to every network tensor and the estimate.
    ad::Graph gr;
    const ad::Expr Xt = gr.variable("Xt", s, t), Xe = gr.variable("Xe", s, t);
    const PhiExprs pe = phi_variables(gr, phi);
    const ad::Expr loss = upper_loss_graph(gr, Xt, Xe, pe);
    std::vector<ad::Expr> wrt = pe.all();
    wrt.push_back(Xe);
    const std::vector<ad::Expr> grads = gr.gradients(loss, wrt);
    ad::Tape tape(gr);
    const Matrix Xest = oracle::random_matrix(s, t, rng);
    tape.bind(Xt, inst.X_true);
    tape.bind(Xe, Xest);
    bind_phi(tape, pe, phi);
    PhiParameters copy = phi;
    TensorList tl = copy.tensors();
    for (std::size_t k = 0; k < tl.size(); ++k) {
      Matrix fd(tl[k].rows, tl[k].cols);
      for (Eigen::Index i = 0; i < fd.size(); ++i) {
        const double orig = tl[k].data[i], hh = 1e-6 * std::max(1.0, std::abs(orig));
        tl[k].data[i] = orig + hh;
        const double up = upper_loss(inst.X_true, Xest, copy);
        tl[k].data[i] = orig - hh;
        const double dn = upper_loss(inst.X_true, Xest, copy);
        tl[k].data[i] = orig;
        fd.data()[i] = (up - dn) / (2 * hh);
      }
      const double e = oracle::rel_err(tape.value(grads[k]), fd, 1e-12);
      ++grad_total;
      grad_pass += e <= 1e-6;
      worst_g = std::max(worst_g, e);
    }
    const Matrix fde = oracle::fd_gradient([&](const Matrix& p) { return upper_loss(inst.X_true, p, phi); }, Xest, 1e-6);
    const double ee = oracle::rel_err(tape.value(grads.back()), fde, 1e-12);
    ++grad_total;
    grad_pass += ee <= 1e-6;
    worst_g = std::max(worst_g, ee);
  }
  return {grad_pass == grad_total && hvp_pass == 100 && sym_pass == 100,
          "gradients " + std::to_string(grad_pass) + "/" + std::to_string(grad_total) + " (max " + fmt("%.1e", worst_g) +
              "), HVP " + std::to_string(hvp_pass) + "/100 (max " + fmt("%.1e", worst_h) + "), symmetry " +
              std::to_string(sym_pass) + "/100 (max " + fmt("%.1e", worst_s) + ")"};
}

// ---------------------------------------------------------------- 6

Outcome monotone_descent() {
  GeneratorConfig gc;
  gc.count = 1;
  const Matrix L = make_leadfield(gc.n, gc.s, gc.condition_target, gc.leadfield_seed);
  const ObjectiveSpec spec;
  int violations = 0, steps = 0, box = 0;
  for (int k = 0; k < 200; ++k) {
    const InverseProblemInstance inst = simulate_sample(gc, L, sample_seed(606, static_cast<std::uint64_t>(k)));
    const PhiParameters phi = init_phi(gc.s, 606 + static_cast<std::uint64_t>(k), 0.05);
    const PredictorParameters pred = init_predictor(8, 700 + static_cast<std::uint64_t>(k));
    for (MajorantMode m : {MajorantMode::analytic_fixed, MajorantMode::learned}) {
      SolverConfig cfg;
      cfg.mode = m;
      cfg.inner_iters = 10;
      cfg.gamma = 1.0;
      cfg.seed = static_cast<std::uint64_t>(k);
      const SolverTrace tr = solve_lower(inst, phi, &pred, cfg, spec);
      for (std::size_t i = 1; i < tr.objectives.size(); ++i) {
        ++steps;
        violations += tr.objectives[i] > tr.objectives[i - 1] + 1e-10;
      }
      for (const MajorantVector& p : tr.p_vectors)
        box += p.p.maxCoeff() > p.interval.nu_hi || p.p.minCoeff() < p.interval.nu_lo;
    }
  }
  return {violations == 0 && box == 0, std::to_string(violations) + " violations over " + std::to_string(steps) +
                                           " steps, " + std::to_string(box) + " out-of-box p"};
}

// ---------------------------------------------------------------- 7

Outcome hypergradient_fd() {
  std::mt19937_64 rng(707);
  const int n = 3, s = 4, t = 1;
  InverseProblemInstance inst = random_instance(n, s, t, rng);
  TrainConfig tc;
  tc.hidden_dim = 4;
  tc.solver.mode = MajorantMode::learned;
  tc.solver.inner_iters = 3;
  ModelParameters mp = initial_model(s, tc);
  mp.phi = random_phi(s, s, 77, 0.8);
  mp.predictor = init_predictor(4, 78);
  UnrolledProgram prog(n, s, t, mp, tc.solver, tc.objective);
  const Matrix X0 = initial_iterate(s, t, 0.5, 3);
  const UnrollResult base = prog.run(inst, X0, mp, 3);
  TensorList tl = mp.tensors();
  int pass = 0;
  double worst = 0;
  std::string worst_name;
  // Predictor gradients are ~1e-6 against a loss of order 1, so the step is
  // kept at 1e-4 to stay clear of cancellation error.
  for (std::size_t k = 0; k < tl.size(); ++k) {
    Vector fd(tl[k].size());
    for (Eigen::Index i = 0; i < tl[k].size(); ++i) {
      const double orig = tl[k].data[i], h = 1e-4 * std::max(1.0, std::abs(orig));
      tl[k].data[i] = orig + h;
      const double up = prog.run(inst, X0, mp, 3, false, &base.nu_hi, &base.radial).loss;
      tl[k].data[i] = orig - h;
      const double dn = prog.run(inst, X0, mp, 3, false, &base.nu_hi, &base.radial).loss;
      tl[k].data[i] = orig;
      fd(i) = (up - dn) / (2 * h);
    }
    const double e = oracle::rel_err(Matrix(base.grads[k]), Matrix(fd), 1e-8);
    pass += e <= 1e-4;
    if (e > worst) {
      worst = e;
      worst_name = tl[k].name;
    }
  }
  return {pass == static_cast<int>(tl.size()), std::to_string(pass) + "/" + std::to_string(tl.size()) +
                                                   " tensors within 1e-4 (worst " + fmt("%.1e", worst) + " on " +
                                                   worst_name + ")"};
}

// ---------------------------------------------------------------- 8 and 9

struct ModeScore {
  double nmse = 0, psnr = 0;
};

ModeScore score_mode(const Dataset& d, const std::vector<int>& idx, const ModelParameters& mp, MajorantMode mode,
                     const TrainConfig& tc) {
  SolverConfig cfg = tc.solver;
  cfg.mode = mode;
  std::unique_ptr<ObjectiveHessian> hess;
  if (mode == MajorantMode::spectral_fixed ||
      (mode == MajorantMode::learned && cfg.learned_box == CurvatureMethod::spectral))
    hess = std::make_unique<ObjectiveHessian>(d.config.n, d.config.s, d.config.t, mp.phi, tc.objective);
  ModeScore sc;
  for (int i : idx) {
    const InverseProblemInstance inst = d.instance(i);
    cfg.seed = solve_seed(tc.seed, i);
    const SolverTrace tr = solve_lower(inst, mp.phi, &mp.predictor, cfg, tc.objective, hess.get());
    const Matrix X = calibrate_amplitude(tr.final_state(), inst.L, inst.Y);
    sc.nmse += nmse(inst.X_true, X) / static_cast<double>(idx.size());
    sc.psnr += psnr(inst.X_true, X) / static_cast<double>(idx.size());
  }
  return sc;
}

// Training recipe for the desk-scale experiments.
TrainConfig desk_train_config() {
  TrainConfig tc;
  tc.epochs = kDeskEpochs;
  tc.learning_rate = kDeskLearningRate;
  tc.hidden_dim = kDeskHidden;
  tc.max_val = kDeskMaxVal;
  tc.seed = 0;
  tc.solver.mode = MajorantMode::learned;
  tc.solver.learned_box = CurvatureMethod::spectral;
  return tc;
}

std::optional<ModelParameters> g_desk_model;

GeneratorConfig desk_data_config() {
  GeneratorConfig gc;
  gc.count = 500;
  gc.n = 16;
  gc.s = 64;
  gc.t = 8;
  gc.snr_db = 10.0;
  gc.waveform = Waveform::gaussian;
  gc.seed = 0;
  return gc;
}

ModelParameters train_desk_model(std::string* detail) {
  const Dataset d = generate_dataset(desk_data_config());
  const TrainConfig tc = desk_train_config();
  const TrainResult r = train(d, tc);
  int best = 0;
  double bv = 1e300;
  for (const EpochRecord& e : r.log)
    if (e.val_loss < bv) {
      bv = e.val_loss;
      best = e.epoch;
    }
  if (detail) *detail = std::to_string(r.log.size()) + " epochs, best val loss " + fmt("%.4f", bv) + " at epoch " +
                        std::to_string(best);
  g_desk_model = r.best.params;
  return r.best.params;
}

Outcome desk_ordering() {
  std::string train_detail;
  const ModelParameters mp = train_desk_model(&train_detail);
  const Dataset d = generate_dataset(desk_data_config());
  const TrainConfig tc = desk_train_config();
  const ModeScore learned = score_mode(d, d.val, mp, MajorantMode::learned, tc);
  const ModeScore analytic = score_mode(d, d.val, mp, MajorantMode::analytic_fixed, tc);
  const ModeScore gd = score_mode(d, d.val, mp, MajorantMode::gradient_descent, tc);
  const double best_base = std::min(analytic.nmse, gd.nmse);
  const double gain = 1 - learned.nmse / best_base;
  const bool pass = learned.nmse < analytic.nmse && learned.nmse < gd.nmse && learned.psnr > analytic.psnr &&
                    learned.psnr > gd.psnr && gain >= 0.10;
  return {pass, train_detail + "; val nMSE learned " + fmt("%.4f", learned.nmse) + " analytic-fixed " +
                    fmt("%.4f", analytic.nmse) + " gd " + fmt("%.4f", gd.nmse) + " (gain " + fmt("%.1f%%", 100 * gain) +
                    "); PSNR " + fmt("%.2f", learned.psnr) + " / " + fmt("%.2f", analytic.psnr) + " / " +
                    fmt("%.2f", gd.psnr) + " dB"};
}

Outcome cross_shape() {
  std::string note;
  if (!g_desk_model) {
    train_desk_model(nullptr);
    note = "trained here; ";
  }
  GeneratorConfig gc = desk_data_config();
  gc.t = 32;
  gc.count = 100;
  gc.waveform = Waveform::oscillatory;
  gc.seed = 9;
  const Dataset d = generate_dataset(gc);
  std::vector<int> all(static_cast<std::size_t>(d.count()));
  for (int i = 0; i < d.count(); ++i) all[static_cast<std::size_t>(i)] = i;
  const TrainConfig tc = desk_train_config();
  const ModeScore learned = score_mode(d, all, *g_desk_model, MajorantMode::learned, tc);
  const ModeScore gd = score_mode(d, all, *g_desk_model, MajorantMode::gradient_descent, tc);
  return {learned.nmse < gd.nmse, note + "t=32 oscillatory nMSE learned " + fmt("%.4f", learned.nmse) + " gd " +
                                      fmt("%.4f", gd.nmse)};
}

// ---------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome determinism_and_formats() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const fs::path root = fs::temp_directory_path() / "mmnet_acceptance_10";
  fs::remove_all(root);
  GeneratorConfig gc;
  gc.n = 6;
  gc.s = 12;
  gc.t = 4;
  gc.count = 20;
  gc.seed = 5;
  for (Waveform w : {Waveform::gaussian, Waveform::oscillatory}) {
    gc.waveform = w;
    const std::string tag = waveform_name(w);
    const Dataset a = generate_dataset(gc), b = generate_dataset(gc);
    write_dataset(root / (tag + "_a"), a);
    write_dataset(root / (tag + "_b"), b);
    for (const char* f : {"X.bin", "Y.bin", "L.bin", "manifest.json", "train.json", "val.json"})
      expect(slurp(root / (tag + "_a") / f) == slurp(root / (tag + "_b") / f), tag + " dataset file " + f + " differs");
    const Dataset c = read_dataset(root / (tag + "_a"));
    bool same = c.L == a.L && c.train == a.train && c.val == a.val && c.seeds == a.seeds;
    for (int i = 0; i < a.count(); ++i)
      same = same && c.X[static_cast<std::size_t>(i)] == a.X[static_cast<std::size_t>(i)] &&
             c.Y[static_cast<std::size_t>(i)] == a.Y[static_cast<std::size_t>(i)];
    expect(same, tag + " dataset round-trip");
  }
  gc.waveform = Waveform::gaussian;
  const Dataset d = generate_dataset(gc);
  TrainConfig tc;
  tc.epochs = 3;
  tc.hidden_dim = 4;
  tc.learning_rate = 1e-3;
  tc.solver.mode = MajorantMode::learned;
  tc.solver.inner_iters = 4;
  auto log_of = [](const TrainResult& r) {
    std::string s;
    for (const EpochRecord& e : r.log) s += to_json(e).dump() + "\n";
    return s;
  };
  const TrainResult r1 = train(d, tc), r2 = train(d, tc);
  expect(log_of(r1) == log_of(r2), "training log differs between identical runs");
  save_checkpoint(r1.last, root / "a.mmck");
  save_checkpoint(r2.last, root / "b.mmck");
  expect(slurp(root / "a.mmck") == slurp(root / "b.mmck"), "checkpoints from identical runs differ");
  const Checkpoint back = load_checkpoint(root / "a.mmck");
  save_checkpoint(back, root / "c.mmck");
  expect(slurp(root / "a.mmck") == slurp(root / "c.mmck"), "checkpoint round-trip");

  auto format_error = [&](const std::function<void()>& f) {
    try {
      f();
    } catch (const FormatError&) {
      return true;
    } catch (...) {
      return false;
    }
    return false;
  };
  const std::string ck = slurp(root / "a.mmck");
  for (std::size_t cut : {std::size_t{2}, std::size_t{7}, std::size_t{15}, ck.size() / 3, ck.size() - 1}) {
    std::ofstream(root / "t.mmck", std::ios::binary | std::ios::trunc) << ck.substr(0, cut);
    expect(format_error([&] { load_checkpoint(root / "t.mmck"); }), "truncated checkpoint at " + std::to_string(cut));
  }
  for (const char* f : {"X.bin", "Y.bin", "L.bin"}) {
    const fs::path dir = root / (std::string("trunc_") + f);
    fs::copy(root / "gaussian_a", dir);
    fs::resize_file(dir / f, fs::file_size(dir / f) - 3);
    expect(format_error([&] { read_dataset(dir); }), std::string("truncated ") + f);
  }
  {
    const fs::path dir = root / "trunc_manifest";
    fs::copy(root / "gaussian_a", dir);
    const std::string m = slurp(dir / "manifest.json");
    std::ofstream(dir / "manifest.json", std::ios::trunc) << m.substr(0, m.size() / 2);
    expect(format_error([&] { read_dataset(dir); }), "truncated manifest");
  }
  fs::remove_all(root);
  std::string detail = failures.empty() ? "datasets, logs, checkpoints bit-identical; truncations rejected" : "";
  for (const std::string& f : failures) detail += f + "; ";
  return {failures.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "majorization validity", 30, majorization_validity},
      {2, "fidelity Hessian bound", 30, fidelity_hessian_bound},
      {3, "network Jacobian and Hessian bounds", 60, network_bounds},
      {4, "power iteration accuracy", 60, power_iteration_accuracy},
      {5, "gradient and HVP correctness", 60, autodiff_correctness},
      {6, "monotone descent", 60, monotone_descent},
      {7, "hypergradient through the unroll", 120, hypergradient_fd},
      {8, "desk-scale ordering", 900, desk_ordering},
      {9, "cross-shape generalization", 300, cross_shape},
      {10, "determinism and format round-trips", 30, determinism_and_formats},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  int failed = 0;
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s criterion %d (%s): %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
