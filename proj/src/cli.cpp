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

#include "mmnet/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmnet/bilevel.hpp"
#include "mmnet/binio.hpp"
#include "mmnet/curvature.hpp"
#include "mmnet/datagen.hpp"
#include "mmnet/errors.hpp"
#include "mmnet/metrics.hpp"
#include "mmnet/mm_solver.hpp"

namespace mmnet::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void apply_config(CLI::App& app, const std::string& path) {
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path + ": top level must be an object");
  for (const auto& [key, val] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : app.get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("config " + path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (!(val.is_string() || val.is_number() || val.is_boolean()))
      throw ConfigError("config " + path + ": key '" + key + "' must be a scalar");
    opt->add_result(val.is_string() ? val.get<std::string>() : val.dump());
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config " + path + ": key '" + key + "': " + e.what());
    }
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

double parse_snr(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("--snr must be a number or 'inf', got '" + s + "'");
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

CosineReduction parse_reduction(const std::string& s) {
  if (s == "flattened") return CosineReduction::flattened;
  if (s == "per-column") return CosineReduction::per_column;
  throw ConfigError("unknown reduction '" + s + "'");
}

// ---------------------------------------------------------------- datagen

struct DatagenOpts {
  std::string config, out, preset = "desk", name = "surrogate", waveform = "gaussian", snr = "10",
                      geometry = "ring";
  int n = 16, s = 64, t = 8, count = 500, patch_extent = 4, grid_cols = 0, rk4_substeps = 64;
  double condition = 100.0, patch_tau = 2.0, val_fraction = 0.2;
  std::uint64_t seed = 0, leadfield_seed = 12345;
};

void add_datagen(CLI::App& app, DatagenOpts& o) {
  app.add_option("--config", o.config, "JSON file with option values; flags win");
  app.add_option("--out", o.out, "Output dataset directory (required)");
  app.add_option("--preset", o.preset, "Shape preset; desk uses t=32 for oscillatory data, full sets n=90, s=994, t=64 (500 if oscillatory)")
      ->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--name", o.name, "Dataset name");
  app.add_option("--n", o.n, "Number of sensors");
  app.add_option("--s", o.s, "Number of sources");
  app.add_option("--t", o.t, "Number of time samples (preset-dependent when omitted)");
  app.add_option("--count", o.count, "Number of samples");
  app.add_option("--waveform", o.waveform, "Source waveform")->check(CLI::IsMember({"gaussian", "oscillatory"}));
  app.add_option("--snr", o.snr, "Sensor SNR in dB, or inf");
  app.add_option("--seed", o.seed, "Sample seed");
  app.add_option("--leadfield-seed", o.leadfield_seed, "Leadfield seed");
  app.add_option("--condition", o.condition, "Leadfield condition number");
  app.add_option("--patch-extent", o.patch_extent, "Sources added around the patch centre (support is extent + 1)");
  app.add_option("--patch-tau", o.patch_tau, "Patch amplitude decay length");
  app.add_option("--geometry", o.geometry, "Source neighborhood graph")->check(CLI::IsMember({"ring", "grid"}));
  app.add_option("--grid-cols", o.grid_cols, "Grid width (grid geometry)");
  app.add_option("--rk4-substeps", o.rk4_substeps, "Integrator substeps per sample (oscillatory)");
  app.add_option("--val-fraction", o.val_fraction, "Validation fraction");
}

GeneratorConfig generator_from(CLI::App& app, DatagenOpts& o) {
  if (o.preset == "full") {
    auto set = [&](const char* flag, int& field, int v) {
      if (app.get_option("--" + std::string(flag))->count() == 0) field = v;
    };
    set("n", o.n, 90);
    set("s", o.s, 994);
    set("t", o.t, o.waveform == "oscillatory" ? 500 : 64);
  } else if (o.waveform == "oscillatory" && app.get_option("--t")->count() == 0) {
    o.t = 32;
  }
  GeneratorConfig c;
  c.name = o.name;
  c.n = o.n;
  c.s = o.s;
  c.t = o.t;
  c.count = o.count;
  c.waveform = parse_waveform(o.waveform);
  c.snr_db = parse_snr(o.snr);
  c.seed = o.seed;
  c.leadfield_seed = o.leadfield_seed;
  c.condition_target = o.condition;
  c.patch_extent = o.patch_extent;
  c.patch_tau = o.patch_tau;
  c.geometry = o.geometry == "grid" ? GeometryKind::grid : GeometryKind::ring;
  c.grid_cols = o.grid_cols;
  c.rk4_substeps = o.rk4_substeps;
  c.val_fraction = o.val_fraction;
  c.validate();
  return c;
}

int cmd_datagen(CLI::App& app, DatagenOpts& o, std::ostream& out) {
  require(o.out, "--out");
  const GeneratorConfig c = generator_from(app, o);
  const Dataset d = generate_dataset(c);
  write_dataset(o.out, d);
  out << json{{"out", o.out}, {"name", c.name}, {"n", c.n}, {"s", c.s}, {"t", c.t}, {"count", c.count},
              {"train", d.train.size()}, {"val", d.val.size()}}
             .dump()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- shared solver options

struct SolverOpts {
  int inner_iters = 10, power_iters = 20;
  double gamma = 1.0, lambda = 1.0, nu_lo = 1e-12, init_scale = 1e-3;
  std::string reduction = "flattened", box = "analytic";
  std::uint64_t seed = 0;
};

void add_solver(CLI::App& app, SolverOpts& o) {
  app.add_option("--inner-iters", o.inner_iters, "MM iterations per solve");
  app.add_option("--gamma", o.gamma, "Step relaxation");
  app.add_option("--lambda", o.lambda, "Regularization weight");
  app.add_option("--reduction", o.reduction, "Cosine reduction")->check(CLI::IsMember({"flattened", "per-column"}));
  app.add_option("--box", o.box, "Curvature box for the learned mode")->check(CLI::IsMember({"analytic", "spectral"}));
  app.add_option("--nu-lo", o.nu_lo, "Lower end of the curvature box");
  app.add_option("--power-iters", o.power_iters, "Power iterations for spectral estimates");
  app.add_option("--init-scale", o.init_scale, "Scale of the random initial iterate");
  app.add_option("--seed", o.seed, "Seed");
}

SolverConfig solver_from(const SolverOpts& o) {
  SolverConfig c;
  c.inner_iters = o.inner_iters;
  c.gamma = o.gamma;
  c.nu_lo = o.nu_lo;
  c.init_scale = o.init_scale;
  c.learned_box = parse_method(o.box);
  c.curvature.power_iters = o.power_iters;
  c.seed = o.seed;
  c.validate();
  return c;
}

ObjectiveSpec objective_from(const SolverOpts& o) {
  ObjectiveSpec s;
  s.lambda = o.lambda;
  s.reduction = parse_reduction(o.reduction);
  s.validate();
  return s;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string config, data, out, resume;
  int epochs = 500, batch_size = 1, hidden = 32, checkpoint_every = 0, max_train = 0, max_val = 0;
  double lr = 5e-5, phi_jitter = 0.01;
  SolverOpts solver;
};

void add_train(CLI::App& app, TrainOpts& o) {
  app.add_option("--config", o.config, "JSON file with option values; flags win");
  app.add_option("--data", o.data, "Dataset directory (required)");
  app.add_option("--out", o.out, "Output directory for checkpoints and log (required)");
  app.add_option("--resume", o.resume, "Checkpoint to continue from");
  app.add_option("--epochs", o.epochs, "Total epochs");
  app.add_option("--lr", o.lr, "Adam learning rate");
  app.add_option("--batch-size", o.batch_size, "Samples per Adam step");
  app.add_option("--hidden", o.hidden, "Predictor hidden size");
  app.add_option("--phi-jitter", o.phi_jitter, "Initial perturbation of the identity network");
  app.add_option("--checkpoint-every", o.checkpoint_every, "Also save epoch_N.mmck every N epochs (0 = never)");
  app.add_option("--max-train", o.max_train, "Cap on training samples (0 = all)");
  app.add_option("--max-val", o.max_val, "Cap on validation samples (0 = all)");
  add_solver(app, o.solver);
}

void write_log(std::ofstream& log, const EpochRecord& r) {
  log << to_json(r).dump() << "\n";
  log.flush();
}

int cmd_train(TrainOpts& o, std::ostream& out) {
  require(o.data, "--data");
  require(o.out, "--out");
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch_size;
  cfg.hidden_dim = o.hidden;
  cfg.phi_jitter = o.phi_jitter;
  cfg.seed = o.solver.seed;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.max_train = o.max_train;
  cfg.max_val = o.max_val;
  cfg.objective = objective_from(o.solver);
  cfg.solver = solver_from(o.solver);
  cfg.solver.mode = MajorantMode::learned;
  cfg.validate();

  const Dataset data = read_dataset(o.data);
  Checkpoint resume;
  if (!o.resume.empty()) resume = load_checkpoint(o.resume);
  const fs::path dir = o.out;
  ensure_dir(dir);
  const fs::path log_path = dir / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  if (!o.resume.empty())
    for (const auto& r : resume.history) write_log(log, r);

  bool wrote_best = false;
  const auto on_epoch = [&](const EpochRecord& r, const Checkpoint& last, bool improved) {
    write_log(log, r);
    save_checkpoint(last, dir / "last.mmck");
    if (improved) {
      save_checkpoint(last, dir / "model.mmck");
      wrote_best = true;
    }
    if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0)
      save_checkpoint(last, dir / ("epoch_" + std::to_string(r.epoch) + ".mmck"));
  };
  const TrainResult res = train(data, cfg, o.resume.empty() ? nullptr : &resume, on_epoch);
  if (!wrote_best && (o.resume.empty() || !fs::exists(dir / "model.mmck"))) save_checkpoint(res.best, dir / "model.mmck");
  save_checkpoint(res.last, dir / "last.mmck");

  json summary{{"out", o.out}, {"epochs", res.last.epoch}, {"adam_step", res.last.adam.step}};
  if (!res.log.empty()) summary["final"] = to_json(res.log.back());
  out << summary.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- solve

struct SolveOpts {
  std::string config, data, out, checkpoint, mode = "analytic-fixed", split = "all", estimates;
  double gd_step = 0.0;
  int max_samples = 0;
  bool no_calibrate = false;
  SolverOpts solver;
};

void add_solve(CLI::App& app, SolveOpts& o, bool for_eval) {
  app.add_option("--config", o.config, "JSON file with option values; flags win");
  app.add_option("--data", o.data, "Dataset directory (required)");
  app.add_option("--out", o.out, for_eval ? "Directory for metrics.json and metrics.csv" : "Output directory (required)");
  if (for_eval)
    app.add_option("--estimates", o.estimates, "Directory written by solve, or a dataset directory; skips solving");
  app.add_option("--checkpoint", o.checkpoint, "Model checkpoint (required for the learned mode)");
  app.add_option("--mode", o.mode, "Majorant mode")->check(CLI::IsMember({"learned", "analytic-fixed", "spectral-fixed", "gd"}));
  app.add_option("--gd-step", o.gd_step, "Fixed step for gd (0 = analytic bound at the initial iterate)");
  app.add_option("--split", o.split, "Samples to process")->check(CLI::IsMember({"all", "train", "val"}));
  app.add_option("--max-samples", o.max_samples, "Cap on processed samples (0 = all)");
  app.add_flag("--no-calibrate", o.no_calibrate, "Skip least-squares amplitude calibration of the estimate");
  add_solver(app, o.solver);
}

std::vector<int> select_indices(const Dataset& d, const SolveOpts& o) {
  std::vector<int> idx;
  if (o.split == "train") {
    idx = d.train;
  } else if (o.split == "val") {
    idx = d.val;
  } else {
    for (int i = 0; i < d.count(); ++i) idx.push_back(i);
  }
  if (o.max_samples > 0 && o.max_samples < static_cast<int>(idx.size())) idx.resize(static_cast<std::size_t>(o.max_samples));
  return idx;
}

struct Estimates {
  std::vector<int> indices;
  std::vector<Matrix> X;
};

Estimates solve_dataset(const Dataset& d, const SolveOpts& o, json* traces) {
  SolverConfig cfg = solver_from(o.solver);
  cfg.mode = parse_mode(o.mode);
  cfg.gd_step = o.gd_step;
  const ObjectiveSpec spec = objective_from(o.solver);
  PhiParameters phi = identity_phi(d.config.s);
  PredictorParameters pred;
  const bool have_model = !o.checkpoint.empty();
  if (cfg.mode == MajorantMode::learned && !have_model) throw ConfigError("--mode learned requires --checkpoint");
  if (have_model) {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    if (ck.params.phi.input_dim() != d.config.s)
      throw ShapeError("checkpoint expects s=" + std::to_string(ck.params.phi.input_dim()) + " but dataset has s=" +
                       std::to_string(d.config.s));
    phi = ck.params.phi;
    pred = ck.params.predictor;
  }
  std::unique_ptr<ObjectiveHessian> hessian;
  const bool spectral = cfg.mode == MajorantMode::spectral_fixed ||
                        (cfg.mode == MajorantMode::learned && cfg.learned_box == CurvatureMethod::spectral);
  if (spectral) hessian = std::make_unique<ObjectiveHessian>(d.config.n, d.config.s, d.config.t, phi, spec);

  Estimates est;
  for (int i : select_indices(d, o)) {
    const InverseProblemInstance inst = d.instance(i);
    SolverConfig c = cfg;
    c.seed = solve_seed(o.solver.seed, i);
    SolverTrace tr;
    try {
      tr = solve_lower(inst, phi, cfg.mode == MajorantMode::learned ? &pred : nullptr, c, spec, hessian.get());
    } catch (const Error& e) {
      throw NumericError("sample " + std::to_string(i) + ": " + e.what());
    }
    Matrix X = tr.final_state();
    if (!o.no_calibrate) X = calibrate_amplitude(X, inst.L, inst.Y);
    est.indices.push_back(i);
    est.X.push_back(std::move(X));
    if (traces) {
      json j = trace_to_json(tr, spec.lambda);
      j["sample"] = i;
      traces->push_back(std::move(j));
    }
  }
  return est;
}

void write_estimates(const fs::path& dir, const Dataset& d, const Estimates& e, const SolveOpts& o) {
  ensure_dir(dir);
  write_json(dir / "estimates.json", {{"mode", o.mode},
                                      {"s", d.config.s},
                                      {"t", d.config.t},
                                      {"count", e.indices.size()},
                                      {"indices", e.indices},
                                      {"calibrated", !o.no_calibrate},
                                      {"dtype", "f64le"},
                                      {"layout", "sample-major, row-major s x t"}});
  std::ofstream os(dir / "X.bin", std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "X.bin").string());
  for (const auto& X : e.X) binio::put_f64(os, X.data(), static_cast<std::size_t>(X.size()));
  if (!os) throw IoError("write failed: " + (dir / "X.bin").string());
}

Estimates read_estimates(const fs::path& dir, const Dataset& d) {
  if (!fs::exists(dir / "estimates.json")) {
    if (!fs::exists(dir / "manifest.json")) throw IoError("no estimates.json or manifest.json in " + dir.string());
    const Dataset other = read_dataset(dir);
    if (other.config.s != d.config.s || other.config.t != d.config.t || other.count() != d.count())
      throw ShapeError("estimate dataset " + dir.string() + " does not match the evaluation dataset");
    Estimates e;
    for (int i = 0; i < other.count(); ++i) e.indices.push_back(i);
    e.X = other.X;
    return e;
  }
  std::ifstream is(dir / "estimates.json");
  json meta;
  try {
    meta = json::parse(is);
  } catch (const json::parse_error& err) {
    throw FormatError(std::string("estimates.json: ") + err.what(), static_cast<std::int64_t>(err.byte));
  }
  Estimates e;
  int s = 0, t = 0;
  try {
    e.indices = meta.at("indices").get<std::vector<int>>();
    s = meta.at("s").get<int>();
    t = meta.at("t").get<int>();
  } catch (const json::exception& err) {
    throw FormatError(std::string("estimates.json: ") + err.what());
  }
  if (s != d.config.s || t != d.config.t) throw ShapeError("estimates shape does not match the dataset");
  std::ifstream bin(dir / "X.bin", std::ios::binary);
  if (!bin) throw IoError("cannot read " + (dir / "X.bin").string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(bin)), {});
  const std::size_t per = static_cast<std::size_t>(s) * static_cast<std::size_t>(t) * sizeof(double);
  if (buf.size() != per * e.indices.size())
    throw FormatError("X.bin in " + dir.string() + " has " + std::to_string(buf.size()) + " bytes, expected " +
                          std::to_string(per * e.indices.size()),
                      static_cast<std::int64_t>(std::min(buf.size(), per * e.indices.size())));
  for (std::size_t k = 0; k < e.indices.size(); ++k) {
    if (e.indices[k] < 0 || e.indices[k] >= d.count()) throw FormatError("estimates.json: sample index out of range");
    Matrix X(s, t);
    binio::get_f64(buf, k * per, X.data(), static_cast<std::size_t>(X.size()));
    e.X.push_back(std::move(X));
  }
  return e;
}

int cmd_solve(SolveOpts& o, std::ostream& out) {
  require(o.data, "--data");
  require(o.out, "--out");
  const Dataset d = read_dataset(o.data);
  json traces = json::array();
  const Estimates e = solve_dataset(d, o, &traces);
  write_estimates(o.out, d, e, o);
  write_json(fs::path(o.out) / "traces.json", traces);
  out << json{{"out", o.out}, {"mode", o.mode}, {"count", e.indices.size()}}.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(SolveOpts& o, std::ostream& out) {
  require(o.data, "--data");
  const Dataset d = read_dataset(o.data);
  const Estimates e = o.estimates.empty() ? solve_dataset(d, o, nullptr) : read_estimates(o.estimates, d);
  const Geometry geom = d.config.make_geometry();
  std::vector<SampleMetrics> rows;
  for (std::size_t k = 0; k < e.indices.size(); ++k)
    rows.push_back(evaluate_sample(d.X[static_cast<std::size_t>(e.indices[k])], e.X[k], geom, e.indices[k]));
  const MetricsReport r = make_report(std::move(rows));
  json j = to_json(r);
  j["dataset"] = o.data;
  j["source"] = o.estimates.empty() ? json(o.mode) : json(o.estimates);
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_json(fs::path(o.out) / "metrics.json", j);
    std::ofstream csv(fs::path(o.out) / "metrics.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write metrics.csv in " + o.out);
    csv << to_csv(r);
  }
  out << json{{"count", r.per_sample.size()}, {"mean", j["mean"]}}.dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- curvature audit

struct AuditOpts {
  std::string config, out;
  int samples = 50, n = 8, s = 16, t = 4, draws = 20, bins = 10;
  double phi_scale = 0.5;
  SolverOpts solver;
};

void add_audit(CLI::App& app, AuditOpts& o) {
  app.add_option("--config", o.config, "JSON file with option values; flags win");
  app.add_option("--out", o.out, "Report file (JSON); stdout always gets a summary");
  app.add_option("--samples", o.samples, "Number of seeded problems");
  app.add_option("--n", o.n, "Sensors per problem");
  app.add_option("--s", o.s, "Sources per problem");
  app.add_option("--t", o.t, "Time samples per problem");
  app.add_option("--draws", o.draws, "Majorization test points per problem");
  app.add_option("--bins", o.bins, "Histogram bins for the tightness ratio");
  app.add_option("--phi-scale", o.phi_scale, "Weight scale of the random regularizer network");
  add_solver(app, o.solver);
}

int cmd_audit(AuditOpts& o, std::ostream& out) {
  if (o.samples < 1 || o.draws < 1 || o.bins < 1) throw ConfigError("--samples, --draws and --bins must be >= 1");
  const ObjectiveSpec spec = objective_from(o.solver);
  const SolverConfig sc = solver_from(o.solver);
  GeneratorConfig gc;
  gc.n = o.n;
  gc.s = o.s;
  gc.t = o.t;
  gc.patch_extent = std::min(gc.patch_extent, o.s);
  gc.count = 1;
  gc.validate();

  int analytic_le_spectral = 0, fallbacks = 0;
  long maj_pass_a = 0, maj_pass_s = 0, maj_total = 0;
  std::vector<double> ratios;
  json per = json::array();
  for (int k = 0; k < o.samples; ++k) {
    const std::uint64_t base = sample_seed(o.solver.seed, static_cast<std::uint64_t>(k));
    const Matrix L = make_leadfield(o.n, o.s, gc.condition_target, sample_seed(base, 1));
    const InverseProblemInstance inst = simulate_sample(gc, L, sample_seed(base, 2));
    const PhiParameters phi = random_phi(o.s, o.s, sample_seed(base, 3), o.phi_scale);
    const Matrix Xb = initial_iterate(o.s, o.t, 1.0, sample_seed(base, 4));

    const AnalyticCurvature ac(inst.L, phi, spec, sc.curvature);
    const CurvatureBounds b = ac.bounds(Xb);
    const double nu_a = ac.nu_hi(Xb);
    ObjectiveHessian oh(o.n, o.s, o.t, phi, spec);
    oh.set_problem(inst.Y, inst.L);
    oh.set_phi(phi);
    const SpectralEstimate est = oh.estimate_top(Xb, sc.curvature, sample_seed(base, 5));
    const CurvatureInterval iv = spectral_interval(est, Xb, &ac, sc.nu_lo, sc.curvature);
    fallbacks += iv.fell_back;
    const double nu_s = iv.nu_hi;
    analytic_le_spectral += nu_a <= nu_s;
    const double ratio = est.lambda_hat / (b.mu1 + spec.lambda * b.mu2);
    ratios.push_back(ratio);

    const double ub = lower_objective(Xb, inst, phi, spec);
    const Matrix gb = lower_gradient(Xb, inst, phi, spec);
    std::mt19937_64 rng(sample_seed(base, 6));
    std::normal_distribution<double> nd;
    int pa = 0, ps = 0, tested = 0;
    for (int d = 0; d < o.draws; ++d) {
      const double radius = std::pow(10.0, -3.0 + 3.0 * d / std::max(1, o.draws - 1)) * Xb.norm();
      Matrix dir(o.s, o.t);
      for (Eigen::Index i = 0; i < dir.size(); ++i) dir.data()[i] = nd(rng);
      const Matrix X = Xb + radius * dir / dir.norm();
      double u;
      try {
        u = lower_objective(X, inst, phi, spec);
      } catch (const DomainError&) {
        continue;
      }
      ++tested;
      const double tol = 1e-9 * (1.0 + std::abs(u));
      pa += quadratic_majorant(ub, gb, X, Xb, Matrix::Constant(o.s, o.t, nu_a)) >= u - tol;
      ps += quadratic_majorant(ub, gb, X, Xb, Matrix::Constant(o.s, o.t, nu_s)) >= u - tol;
    }
    maj_pass_a += pa;
    maj_pass_s += ps;
    maj_total += tested;
    per.push_back({{"sample", k},
                   {"nu_analytic", nu_a},
                   {"nu_spectral", nu_s},
                   {"lambda_hat", est.lambda_hat},
                   {"mu1", b.mu1},
                   {"mu2", b.mu2},
                   {"tightness", ratio},
                   {"spectral_fell_back", iv.fell_back},
                   {"majorization_tested", tested},
                   {"majorization_pass_analytic", pa},
                   {"majorization_pass_spectral", ps}});
  }
  const double rmax = std::max(1.0, *std::max_element(ratios.begin(), ratios.end()));
  const double rmin = std::min(0.0, *std::min_element(ratios.begin(), ratios.end()));
  std::vector<int> counts(static_cast<std::size_t>(o.bins), 0);
  std::vector<double> edges;
  for (int i = 0; i <= o.bins; ++i) edges.push_back(rmin + (rmax - rmin) * i / o.bins);
  for (double r : ratios) {
    int bin = static_cast<int>((r - rmin) / (rmax - rmin) * o.bins);
    counts[static_cast<std::size_t>(std::clamp(bin, 0, o.bins - 1))]++;
  }
  const double rate_a = maj_total ? static_cast<double>(maj_pass_a) / static_cast<double>(maj_total) : 1.0;
  const double rate_s = maj_total ? static_cast<double>(maj_pass_s) / static_cast<double>(maj_total) : 1.0;
  const json summary{{"samples", o.samples},
                     {"analytic_le_spectral_rate", static_cast<double>(analytic_le_spectral) / o.samples},
                     {"majorization_pass_rate_analytic", rate_a},
                     {"majorization_pass_rate_spectral", rate_s},
                     {"spectral_fallbacks", fallbacks},
                     {"analytic_pass", maj_pass_a == maj_total}};
  json report = summary;
  report["tightness_histogram"] = {{"edges", edges}, {"counts", counts}};
  report["per_sample"] = per;
  if (!o.out.empty()) write_json(o.out, report);
  out << summary.dump() << "\n";
  return maj_pass_a == maj_total ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------- dispatch

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidInput*>(&e)) return kExitUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitIo;
  return kExitNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned majorization-minimization solver for linear inverse problems", "mmnet"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  DatagenOpts dg;
  TrainOpts tr;
  SolveOpts sv, ev;
  AuditOpts au;
  CLI::App* c_dg = app.add_subcommand("datagen", "Generate a synthetic dataset");
  CLI::App* c_tr = app.add_subcommand("train", "Train the regularizer and curvature predictor");
  CLI::App* c_sv = app.add_subcommand("solve", "Run the lower-level solver and write estimates and traces");
  CLI::App* c_ev = app.add_subcommand("eval", "Compute reconstruction metrics");
  CLI::App* c_au = app.add_subcommand("curvature-audit", "Compare analytic and spectral curvature bounds");
  add_datagen(*c_dg, dg);
  add_train(*c_tr, tr);
  add_solve(*c_sv, sv, false);
  add_solve(*c_ev, ev, true);
  add_audit(*c_au, au);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (c_dg->parsed()) {
      apply_config(*c_dg, dg.config);
      return cmd_datagen(*c_dg, dg, out);
    }
    if (c_tr->parsed()) {
      apply_config(*c_tr, tr.config);
      return cmd_train(tr, out);
    }
    if (c_sv->parsed()) {
      apply_config(*c_sv, sv.config);
      return cmd_solve(sv, out);
    }
    if (c_ev->parsed()) {
      apply_config(*c_ev, ev.config);
      return cmd_eval(ev, out);
    }
    if (c_au->parsed()) {
      apply_config(*c_au, au.config);
      return cmd_audit(au, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitUsage;
}

int main_entry(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mmnet::cli
