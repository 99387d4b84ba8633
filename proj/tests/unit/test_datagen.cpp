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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmnet/datagen.hpp"
#include "mmnet/errors.hpp"
#include "oracles.hpp"

using namespace mmnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("mmnet_test_" + tag);
  fs::remove_all(p);
  return p;
}

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.n = 6;
  c.s = 20;
  c.t = 5;
  c.count = 10;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("leadfield has the requested conditioning and unit norm") {
  for (double cond : {10.0, 100.0, 1000.0}) {
    const Matrix L = make_leadfield(8, 30, cond, 5);
    const std::vector<double> sv = oracle::jacobi_singular_values(L);
    CHECK(sv.front() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(sv.front() / sv[7] - cond) / cond < 0.01);
  }
  CHECK(make_leadfield(4, 9, 10, 1) == make_leadfield(4, 9, 10, 1));
}

TEST_CASE("ring geometry matches an independent BFS") {
  Geometry g;
  g.s = 17;
  for (int src : {0, 5, 16}) {
    const std::vector<int> got = g.distances_from(src), want = oracle::ring_bfs(17, src);
    CHECK(got == want);
  }
  CHECK(g.diameter() == 8);
  Geometry grid{GeometryKind::grid, 12, 4};
  const std::vector<int> d = grid.distances_from(0);
  CHECK(d[11] == 5);
  CHECK(grid.diameter() == 5);
}

TEST_CASE("source patch has extent + 1 support with exponential decay") {
  Geometry g;
  g.s = 30;
  for (int extent : {0, 3, 6}) {
    const Vector p = make_source_patch(g, extent, 10, 2.0);
    CHECK((p.array() != 0.0).count() == extent + 1);
    const std::vector<int> dist = g.distances_from(10);
    for (int i = 0; i < 30; ++i)
      if (p(i) != 0.0) CHECK(p(i) == doctest::Approx(std::exp(-dist[static_cast<std::size_t>(i)] / 2.0)));
    CHECK(p(10) == 1.0);
  }
}

TEST_CASE("gaussian waveform peaks at its centre") {
  const Vector w = gaussian_waveform(20, 7.0, 2.0, 0.8);
  Eigen::Index k;
  w.maxCoeff(&k);
  CHECK(k == 7);
  CHECK(w(7) == doctest::Approx(0.8));
  CHECK(w(9) == doctest::Approx(0.8 * std::exp(-0.5)));
}

TEST_CASE("uncoupled undamped oscillator follows the sinusoid recurrence") {
  const double f = 0.07, om = 2 * M_PI * f;
  const Vector w = oscillatory_waveform(40, f, 0.0, 0.0, 11, 64);
  for (int k = 1; k + 1 < 40; ++k) CHECK(std::abs(w(k + 1) + w(k - 1) - 2 * std::cos(om) * w(k)) < 1e-6);
  CHECK(w.cwiseAbs().maxCoeff() > 0.1);
  const Vector wd = oscillatory_waveform(200, f, 0.05, 0.3, 11, 64);
  CHECK(wd.tail(20).cwiseAbs().maxCoeff() < wd.head(20).cwiseAbs().maxCoeff());
}

TEST_CASE("simulate_sample hits the requested SNR") {
  GeneratorConfig c = tiny_config();
  const Matrix L = make_leadfield(c.n, c.s, 100, 1);
  for (double snr : {0.0, 10.0, 30.0}) {
    c.snr_db = snr;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const InverseProblemInstance inst = simulate_sample(c, L, s);
      const Matrix clean = L * inst.X_true;
      const double got = 20 * std::log10(clean.norm() / (inst.Y - clean).norm());
      CHECK(std::abs(got - snr) < 0.01);
    }
  }
  c.snr_db = std::numeric_limits<double>::infinity();
  const InverseProblemInstance clean = simulate_sample(c, L, 1);
  CHECK(clean.Y == L * clean.X_true);
}

TEST_CASE("dataset generation is deterministic and splits 80/20") {
  const GeneratorConfig c = tiny_config();
  const Dataset a = generate_dataset(c), b = generate_dataset(c);
  CHECK(a.L == b.L);
  for (int i = 0; i < a.count(); ++i) {
    CHECK(a.X[static_cast<std::size_t>(i)] == b.X[static_cast<std::size_t>(i)]);
    CHECK(a.Y[static_cast<std::size_t>(i)] == b.Y[static_cast<std::size_t>(i)]);
  }
  CHECK(a.train.size() == 8);
  CHECK(a.val.size() == 2);
  std::vector<int> all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  GeneratorConfig c2 = c;
  c2.seed = 4;
  CHECK(generate_dataset(c2).X[0] != a.X[0]);
}

TEST_CASE("dataset files round-trip bit-exactly") {
  const fs::path dir = temp_dir("dataset_rt");
  GeneratorConfig c = tiny_config();
  c.waveform = Waveform::oscillatory;
  const Dataset a = generate_dataset(c);
  write_dataset(dir, a);
  CHECK(fs::file_size(dir / "X.bin") == static_cast<std::uintmax_t>(10 * 20 * 5 * 8));
  const Dataset b = read_dataset(dir);
  CHECK(b.L == a.L);
  CHECK(b.train == a.train);
  CHECK(b.seeds == a.seeds);
  for (int i = 0; i < a.count(); ++i) CHECK(b.X[static_cast<std::size_t>(i)] == a.X[static_cast<std::size_t>(i)]);
  CHECK(to_json(b.config) == to_json(a.config));
  fs::remove_all(dir);
}

TEST_CASE("corrupt dataset files raise format errors") {
  const fs::path dir = temp_dir("dataset_bad");
  write_dataset(dir, generate_dataset(tiny_config()));
  SUBCASE("truncated tensor file") {
    fs::resize_file(dir / "Y.bin", fs::file_size(dir / "Y.bin") - 8);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("inflated count") {
    std::ifstream is(dir / "manifest.json");
    nlohmann::json m = nlohmann::json::parse(is);
    is.close();
    m["count"] = 11;
    m["generator"]["count"] = 11;
    std::ofstream(dir / "manifest.json") << m.dump();
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }
  SUBCASE("missing directory") { CHECK_THROWS_AS(read_dataset(dir / "nope"), IoError); }
  fs::remove_all(dir);
}

TEST_CASE("generator config validation") {
  GeneratorConfig c = tiny_config();
  c.patch_extent = c.s;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.count = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  CHECK(to_json(generator_config_from_json(to_json(c))) == to_json(c));
  CHECK(parse_waveform("oscillatory") == Waveform::oscillatory);
}
