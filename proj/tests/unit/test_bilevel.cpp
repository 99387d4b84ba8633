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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mmnet/bilevel.hpp"
#include "mmnet/errors.hpp"
#include "oracles.hpp"

using namespace mmnet;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(int count = 6) {
  GeneratorConfig c;
  c.n = 4;
  c.s = 6;
  c.t = 2;
  c.patch_extent = 1;
  c.count = count;
  c.seed = 17;
  return generate_dataset(c);
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 2;
  t.learning_rate = 1e-3;
  t.hidden_dim = 3;
  t.solver.mode = MajorantMode::learned;
  t.solver.inner_iters = 3;
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("adaptive moment step matches a scalar reference") {
  Matrix w = (Matrix(1, 2) << 0.5, -1.0).finished();
  TensorList params{{"w", w.data(), 1, 2}};
  AdamState st = AdamState::zeros(params);
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  double ref[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int k = 1; k <= 5; ++k) {
    const Vector g = (Vector(2) << ref[0] * 2, std::sin(ref[1])).finished();
    adaptive_moment_step(params, {g}, st, cfg);
    for (int j = 0; j < 2; ++j) {
      m[j] = 0.9 * m[j] + 0.1 * g(j);
      v[j] = 0.999 * v[j] + 0.001 * g(j) * g(j);
      const double mh = m[j] / (1 - std::pow(0.9, k)), vh = v[j] / (1 - std::pow(0.999, k));
      ref[j] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(w(0, j) == doctest::Approx(ref[j]).epsilon(1e-14));
    }
  }
  CHECK(st.step == 5);
  const Vector bad = (Vector(2) << std::nan(""), 0).finished();
  CHECK_THROWS_AS(adaptive_moment_step(params, {bad}, st, cfg), NumericError);
  const Matrix before = w;
  adaptive_moment_step(params, {Vector::Ones(2)}, st, AdamConfig{0.0});
  CHECK(w == before);
}

TEST_CASE("unrolled program reproduces the learned solver") {
  const Dataset d = tiny_dataset();
  const TrainConfig tc = tiny_train();
  const ModelParameters mp = initial_model(6, tc);
  UnrolledProgram prog(4, 6, 2, mp, tc.solver, tc.objective);
  for (int i = 0; i < 3; ++i) {
    const InverseProblemInstance inst = d.instance(i);
    const std::uint64_t seed = solve_seed(tc.seed, i);
    const Matrix X0 = initial_iterate(6, 2, tc.solver.init_scale, seed);
    const UnrollResult r = prog.run(inst, X0, mp, seed);
    SolverConfig sc = tc.solver;
    sc.seed = seed;
    const SolverTrace tr = solve_lower(inst, mp.phi, &mp.predictor, sc, tc.objective, X0);
    CHECK((r.X_final - tr.final_state()).norm() <= 1e-12 * tr.final_state().norm());
    CHECK(r.loss == doctest::Approx(upper_loss(inst.X_true, tr.final_state(), mp.phi)).epsilon(1e-12));
    CHECK(r.descent_violations == 0);
    CHECK(r.p_violations == 0);
  }
}

TEST_CASE("hypergradient matches finite differences through the unroll") {
  const Dataset d = tiny_dataset();
  TrainConfig tc = tiny_train();
  ModelParameters mp = initial_model(6, tc);
  mp.phi = random_phi(6, 6, 4, 0.8);
  UnrolledProgram prog(4, 6, 2, mp, tc.solver, tc.objective);
  const InverseProblemInstance inst = d.instance(0);
  const Matrix X0 = initial_iterate(6, 2, 0.3, 1);
  const UnrollResult base = prog.run(inst, X0, mp, 1);
  TensorList tl = mp.tensors();
  REQUIRE(tl.size() == base.grads.size());
  for (std::size_t k = 0; k < tl.size(); ++k) {
    CAPTURE(tl[k].name);
    Vector fd(tl[k].size());
    for (Eigen::Index i = 0; i < tl[k].size(); ++i) {
      const double orig = tl[k].data[i], h = 1e-4 * std::max(1.0, std::abs(orig));
      tl[k].data[i] = orig + h;
      const double up = prog.run(inst, X0, mp, 1, false, &base.nu_hi, &base.radial).loss;
      tl[k].data[i] = orig - h;
      const double dn = prog.run(inst, X0, mp, 1, false, &base.nu_hi, &base.radial).loss;
      tl[k].data[i] = orig;
      fd(i) = (up - dn) / (2 * h);
    }
    CHECK(oracle::rel_err(Matrix(base.grads[k]), Matrix(fd), 1e-6) < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  const fs::path dir = fs::temp_directory_path() / "mmnet_test_ck";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Checkpoint ck;
  ck.params = initial_model(6, tiny_train());
  ck.params.phi = random_phi(6, 6, 2, 0.5);
  ck.adam = AdamState::zeros(ck.params.tensors());
  ck.adam.step = 7;
  ck.adam.m[0](0) = 1.0 / 3.0;
  ck.epoch = 4;
  ck.history.push_back({1, 0.5, 0.6, 0.7, 0, 0, 0});
  save_checkpoint(ck, dir / "a.mmck");
  const Checkpoint back = load_checkpoint(dir / "a.mmck");
  save_checkpoint(back, dir / "b.mmck");
  CHECK(slurp(dir / "a.mmck") == slurp(dir / "b.mmck"));
  CHECK(back.params.phi.W1 == ck.params.phi.W1);
  CHECK(back.adam.m[0](0) == 1.0 / 3.0);
  CHECK(back.epoch == 4);
  CHECK(back.history.size() == 1);

  const std::string bytes = slurp(dir / "a.mmck");
  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
      std::ofstream(dir / "t.mmck", std::ios::binary) << bytes.substr(0, cut);
      CHECK_THROWS_AS(load_checkpoint(dir / "t.mmck"), FormatError);
    }
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    std::ofstream(dir / "m.mmck", std::ios::binary) << b;
    CHECK_THROWS_AS(load_checkpoint(dir / "m.mmck"), FormatError);
  }
  SUBCASE("future version") {
    std::string b = bytes;
    b[4] = 9;
    std::ofstream(dir / "v.mmck", std::ios::binary) << b;
    CHECK_THROWS_AS(load_checkpoint(dir / "v.mmck"), UnsupportedVersion);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.mmck"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("training is deterministic and resumable") {
  const Dataset d = tiny_dataset();
  TrainConfig tc = tiny_train();
  const TrainResult a = train(d, tc), b = train(d, tc);
  REQUIRE(a.log.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(a.log[e].train_loss == b.log[e].train_loss);
    CHECK(a.log[e].val_loss == b.log[e].val_loss);
  }
  CHECK(a.last.params.predictor.head1_w == b.last.params.predictor.head1_w);

  TrainConfig one = tc;
  one.epochs = 1;
  const TrainResult first = train(d, one);
  const TrainResult rest = train(d, tc, &first.last);
  REQUIRE(rest.log.size() == 2);
  CHECK(rest.log[1].train_loss == a.log[1].train_loss);
  CHECK(rest.last.params.phi.W2 == a.last.params.phi.W2);

  TrainConfig zero = tc;
  zero.learning_rate = 0.0;
  const TrainResult z = train(d, zero);
  const ModelParameters init = initial_model(6, zero);
  CHECK(z.last.params.phi.W1 == init.phi.W1);
  CHECK(z.last.params.predictor.cell2.candidate.wx == init.predictor.cell2.candidate.wx);

  TrainConfig none = tc;
  none.epochs = 0;
  CHECK(train(d, none).log.empty());
}

TEST_CASE("train rejects non-learned modes") {
  TrainConfig tc = tiny_train();
  tc.solver.mode = MajorantMode::analytic_fixed;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
