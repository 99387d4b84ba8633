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
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmnet/linalg.hpp"
#include "mmnet/problem.hpp"

namespace mmnet {

enum class Waveform { gaussian, oscillatory };
enum class GeometryKind { ring, grid };

// Neighbourhood graph over source indices: a ring (i ± 1 mod s) or a
// row-major grid with 4-neighbours.
struct Geometry {
  GeometryKind kind = GeometryKind::ring;
  int s = 0;
  int grid_cols = 0;

  void validate() const;
  std::vector<int> neighbors(int i) const;
  // Breadth-first hop distances from i to every index.
  std::vector<int> distances_from(int i) const;
  // Indices in breadth-first discovery order from i.
  std::vector<int> bfs_order(int i) const;
  int diameter() const;
};

struct GeneratorConfig {
  std::string name = "surrogate";
  int n = 16;
  int s = 64;
  int t = 8;
  int patch_extent = 4;
  double patch_tau = 2.0;
  Waveform waveform = Waveform::gaussian;
  // Gaussian waveform ranges; centre and width are fractions of t.
  double center_lo = 0.25, center_hi = 0.75;
  double width_lo = 0.05, width_hi = 0.2;
  double amp_lo = 0.5, amp_hi = 1.0;
  // Oscillatory waveform ranges; cycles over the window of t samples.
  double cycles_lo = 2.0, cycles_hi = 6.0;
  double damping_lo = 0.0, damping_hi = 0.1;
  double coupling_lo = 0.0, coupling_hi = 0.5;
  int rk4_substeps = 64;
  double snr_db = 10.0;  // +inf for noiseless data
  int count = 500;
  double condition_target = 100.0;
  std::uint64_t seed = 0;
  std::uint64_t leadfield_seed = 12345;
  GeometryKind geometry = GeometryKind::ring;
  int grid_cols = 0;
  double val_fraction = 0.2;

  void validate() const;
  Geometry make_geometry() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
const char* waveform_name(Waveform w);
Waveform parse_waveform(const std::string& s);

// Gaussian n x s matrix with its singular values replaced by a log-spaced
// sequence from 1 down to 1 / condition_target, so ‖L‖ = 1.
Matrix make_leadfield(int n, int s, double condition_target, std::uint64_t seed);

// exp(-d / tau) over the patch_extent + 1 nearest indices of `center`.
Vector make_source_patch(const Geometry& geom, int patch_extent, int center, double tau = 2.0);
// Centre drawn uniformly from `seed` on a ring of s indices.
Vector make_source_patch(int s, int patch_extent, std::uint64_t seed, double tau = 2.0);

Vector gaussian_waveform(int t, double center, double width, double amplitude);
// u'' = -ω² [(1-κ) u + κ tanh(u)] - 2 ζ ω u' with ω = 2π freq (per sample),
// integrated by RK4 from a random phase; sampled at k = 0..t-1.
Vector oscillatory_waveform(int t, double freq, double damping, double coupling, std::uint64_t seed,
                            int substeps = 64);

// One sample with noise scaled to the exact requested SNR.
InverseProblemInstance simulate_sample(const GeneratorConfig& cfg, const Matrix& L, std::uint64_t sample_seed);

std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index);

struct Dataset {
  GeneratorConfig config;
  Matrix L;
  std::vector<Matrix> X, Y;
  std::vector<std::uint64_t> seeds;
  std::vector<double> snr_db;
  std::vector<int> train, val;

  int count() const { return static_cast<int>(X.size()); }
  InverseProblemInstance instance(int i) const;
};

// Deterministic 80/20 style split by seed.
void split_indices(int count, double val_fraction, std::uint64_t seed, std::vector<int>& train,
                   std::vector<int>& val);

Dataset generate_dataset(const GeneratorConfig& cfg);

// manifest.json, X.bin, Y.bin, L.bin (row-major little-endian f64), plus
// train.json and val.json index lists.
void write_dataset(const std::filesystem::path& dir, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace mmnet
