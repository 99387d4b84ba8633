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

#include "mmnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <random>

#include "mmnet/binio.hpp"
#include "mmnet/errors.hpp"

namespace mmnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- geometry

void Geometry::validate() const {
  if (s < 1) throw ConfigError("geometry: s must be positive");
  if (kind == GeometryKind::grid && (grid_cols < 1 || s % grid_cols != 0))
    throw ConfigError("geometry: grid_cols must divide s");
}

std::vector<int> Geometry::neighbors(int i) const {
  if (i < 0 || i >= s) throw InvalidInput("geometry: index out of range");
  if (kind == GeometryKind::ring) {
    if (s == 1) return {};
    if (s == 2) return {1 - i};
    return {(i + 1) % s, (i - 1 + s) % s};
  }
  const int r = i / grid_cols, c = i % grid_cols, rows = s / grid_cols;
  std::vector<int> out;
  if (c + 1 < grid_cols) out.push_back(i + 1);
  if (c > 0) out.push_back(i - 1);
  if (r + 1 < rows) out.push_back(i + grid_cols);
  if (r > 0) out.push_back(i - grid_cols);
  return out;
}

std::vector<int> Geometry::bfs_order(int i) const {
  std::vector<int> dist(static_cast<std::size_t>(s), -1), order;
  std::queue<int> q;
  dist[static_cast<std::size_t>(i)] = 0;
  q.push(i);
  while (!q.empty()) {
    const int cur = q.front();
    q.pop();
    order.push_back(cur);
    for (int nb : neighbors(cur))
      if (dist[static_cast<std::size_t>(nb)] < 0) {
        dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(cur)] + 1;
        q.push(nb);
      }
  }
  return order;
}

std::vector<int> Geometry::distances_from(int i) const {
  std::vector<int> dist(static_cast<std::size_t>(s), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(i)] = 0;
  q.push(i);
  while (!q.empty()) {
    const int cur = q.front();
    q.pop();
    for (int nb : neighbors(cur))
      if (dist[static_cast<std::size_t>(nb)] < 0) {
        dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(cur)] + 1;
        q.push(nb);
      }
  }
  return dist;
}

int Geometry::diameter() const {
  if (kind == GeometryKind::ring) return s / 2;
  return (s / grid_cols - 1) + (grid_cols - 1);
}

// ---------------------------------------------------------------- config

void GeneratorConfig::validate() const {
  if (!(s > n && n >= 2)) throw ConfigError("generator: need s > n >= 2");
  if (t < 2) throw ConfigError("generator: t must be >= 2");
  if (count < 1) throw ConfigError("generator: count must be >= 1");
  if (patch_extent < 0 || patch_extent >= s) throw ConfigError("generator: patch_extent must be in [0, s)");
  if (!(patch_tau > 0)) throw ConfigError("generator: patch_tau must be positive");
  if (!(condition_target >= 1)) throw ConfigError("generator: condition_target must be >= 1");
  if (!(center_lo <= center_hi && width_lo > 0 && width_lo <= width_hi && amp_lo <= amp_hi && amp_lo > 0))
    throw ConfigError("generator: inconsistent gaussian waveform ranges");
  if (!(cycles_lo > 0 && cycles_lo <= cycles_hi && damping_lo >= 0 && damping_lo <= damping_hi &&
        coupling_lo >= 0 && coupling_lo <= coupling_hi && coupling_hi <= 1))
    throw ConfigError("generator: inconsistent oscillatory waveform ranges");
  if (rk4_substeps < 1) throw ConfigError("generator: rk4_substeps must be >= 1");
  if (std::isnan(snr_db)) throw ConfigError("generator: snr_db is NaN");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("generator: val_fraction must be in [0, 1)");
  make_geometry().validate();
}

Geometry GeneratorConfig::make_geometry() const { return Geometry{geometry, s, grid_cols}; }

const char* waveform_name(Waveform w) { return w == Waveform::gaussian ? "gaussian" : "oscillatory"; }

Waveform parse_waveform(const std::string& s) {
  if (s == "gaussian") return Waveform::gaussian;
  if (s == "oscillatory") return Waveform::oscillatory;
  throw ConfigError("unknown waveform '" + s + "'");
}

nlohmann::json to_json(const GeneratorConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["n"] = c.n;
  j["s"] = c.s;
  j["t"] = c.t;
  j["patch_extent"] = c.patch_extent;
  j["patch_tau"] = c.patch_tau;
  j["waveform"] = waveform_name(c.waveform);
  j["center_range"] = {c.center_lo, c.center_hi};
  j["width_range"] = {c.width_lo, c.width_hi};
  j["amplitude_range"] = {c.amp_lo, c.amp_hi};
  j["cycles_range"] = {c.cycles_lo, c.cycles_hi};
  j["damping_range"] = {c.damping_lo, c.damping_hi};
  j["coupling_range"] = {c.coupling_lo, c.coupling_hi};
  j["rk4_substeps"] = c.rk4_substeps;
  if (std::isinf(c.snr_db))
    j["snr_db"] = "inf";
  else
    j["snr_db"] = c.snr_db;
  j["count"] = c.count;
  j["condition_target"] = c.condition_target;
  j["seed"] = c.seed;
  j["leadfield_seed"] = c.leadfield_seed;
  j["geometry"] = c.geometry == GeometryKind::ring ? "ring" : "grid";
  j["grid_cols"] = c.grid_cols;
  j["val_fraction"] = c.val_fraction;
  return j;
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  try {
    GeneratorConfig c;
    c.name = j.at("name").get<std::string>();
    c.n = j.at("n").get<int>();
    c.s = j.at("s").get<int>();
    c.t = j.at("t").get<int>();
    c.patch_extent = j.at("patch_extent").get<int>();
    c.patch_tau = j.at("patch_tau").get<double>();
    c.waveform = parse_waveform(j.at("waveform").get<std::string>());
    auto range = [&](const char* key, double& lo, double& hi) {
      lo = j.at(key).at(0).get<double>();
      hi = j.at(key).at(1).get<double>();
    };
    range("center_range", c.center_lo, c.center_hi);
    range("width_range", c.width_lo, c.width_hi);
    range("amplitude_range", c.amp_lo, c.amp_hi);
    range("cycles_range", c.cycles_lo, c.cycles_hi);
    range("damping_range", c.damping_lo, c.damping_hi);
    range("coupling_range", c.coupling_lo, c.coupling_hi);
    c.rk4_substeps = j.at("rk4_substeps").get<int>();
    const auto& snr = j.at("snr_db");
    c.snr_db = snr.is_string() && snr.get<std::string>() == "inf" ? INFINITY : snr.get<double>();
    c.count = j.at("count").get<int>();
    c.condition_target = j.at("condition_target").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.leadfield_seed = j.at("leadfield_seed").get<std::uint64_t>();
    const std::string geom = j.at("geometry").get<std::string>();
    if (geom != "ring" && geom != "grid") throw ConfigError("unknown geometry '" + geom + "'");
    c.geometry = geom == "ring" ? GeometryKind::ring : GeometryKind::grid;
    c.grid_cols = j.at("grid_cols").get<int>();
    c.val_fraction = j.at("val_fraction").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generator config: ") + e.what());
  }
}

// ---------------------------------------------------------------- signals

Matrix make_leadfield(int n, int s, double condition_target, std::uint64_t seed) {
  if (!(condition_target >= 1)) throw ConfigError("make_leadfield: condition_target must be >= 1");
  if (!(s > n && n >= 1)) throw ConfigError("make_leadfield: need s > n >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd A(n, s);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < s; ++j) A(i, j) = normal(rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector sv(n);
  for (int k = 0; k < n; ++k)
    sv(k) = n == 1 ? 1.0 : std::pow(condition_target, -static_cast<double>(k) / (n - 1));
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

Vector make_source_patch(const Geometry& geom, int patch_extent, int center, double tau) {
  geom.validate();
  if (patch_extent < 0 || patch_extent >= geom.s) throw InvalidInput("make_source_patch: patch_extent must be in [0, s)");
  const std::vector<int> order = geom.bfs_order(center);
  const std::vector<int> dist = geom.distances_from(center);
  Vector profile = Vector::Zero(geom.s);
  for (int k = 0; k <= patch_extent && k < static_cast<int>(order.size()); ++k) {
    const int idx = order[static_cast<std::size_t>(k)];
    profile(idx) = std::exp(-dist[static_cast<std::size_t>(idx)] / tau);
  }
  return profile;
}

Vector make_source_patch(int s, int patch_extent, std::uint64_t seed, double tau) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, s - 1);
  return make_source_patch(Geometry{GeometryKind::ring, s, 0}, patch_extent, pick(rng), tau);
}

Vector gaussian_waveform(int t, double center, double width, double amplitude) {
  if (!(width > 0)) throw InvalidInput("gaussian_waveform: width must be positive");
  if (t < 2) throw InvalidInput("gaussian_waveform: t must be >= 2");
  Vector w(t);
  for (int k = 0; k < t; ++k) {
    const double d = k - center;
    w(k) = amplitude * std::exp(-d * d / (2.0 * width * width));
  }
  return w;
}

Vector oscillatory_waveform(int t, double freq, double damping, double coupling, std::uint64_t seed, int substeps) {
  if (t < 2) throw InvalidInput("oscillatory_waveform: t must be >= 2");
  if (substeps < 1) throw InvalidInput("oscillatory_waveform: substeps must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double phase = phase_dist(rng);
  const double omega = 2.0 * std::numbers::pi * freq;
  auto rhs = [&](double u, double v, double& du, double& dv) {
    du = v;
    dv = -omega * omega * ((1.0 - coupling) * u + coupling * std::tanh(u)) - 2.0 * damping * omega * v;
  };
  double u = std::cos(phase), v = -omega * std::sin(phase);
  const double h = 1.0 / substeps;
  Vector w(t);
  for (int k = 0; k < t; ++k) {
    w(k) = u;
    for (int j = 0; j < substeps; ++j) {
      double k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v;
      rhs(u, v, k1u, k1v);
      rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v, k2u, k2v);
      rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v, k3u, k3v);
      rhs(u + h * k3u, v + h * k3v, k4u, k4v);
      u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
      v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
  }
  return w;
}

std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

InverseProblemInstance simulate_sample(const GeneratorConfig& cfg, const Matrix& L, std::uint64_t seed) {
  cfg.validate();
  if (L.rows() != cfg.n || L.cols() != cfg.s) throw ShapeError("simulate_sample: leadfield shape");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::uniform_int_distribution<int> pick(0, cfg.s - 1);
  const int center = pick(rng);
  const Vector profile = make_source_patch(cfg.make_geometry(), cfg.patch_extent, center, cfg.patch_tau);

  Vector wave;
  const double amp = uniform(cfg.amp_lo, cfg.amp_hi);
  if (cfg.waveform == Waveform::gaussian) {
    const double c = cfg.t * uniform(cfg.center_lo, cfg.center_hi);
    const double w = cfg.t * uniform(cfg.width_lo, cfg.width_hi);
    wave = gaussian_waveform(cfg.t, c, w, amp);
  } else {
    const double f = uniform(cfg.cycles_lo, cfg.cycles_hi) / cfg.t;
    const double z = uniform(cfg.damping_lo, cfg.damping_hi);
    const double k = uniform(cfg.coupling_lo, cfg.coupling_hi);
    wave = amp * oscillatory_waveform(cfg.t, f, z, k, rng(), cfg.rk4_substeps);
  }

  InverseProblemInstance inst;
  inst.X_true = profile * wave.transpose();
  inst.L = L;
  inst.Y = L * inst.X_true;
  inst.snr_db = cfg.snr_db;
  inst.seed = seed;
  if (std::isfinite(cfg.snr_db)) {
    std::normal_distribution<double> normal;
    Matrix noise(cfg.n, cfg.t);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    noise *= inst.Y.norm() / noise.norm() * std::pow(10.0, -cfg.snr_db / 20.0);
    inst.Y += noise;
  }
  if (!inst.Y.allFinite()) throw NumericError("simulate_sample: non-finite measurements");
  return inst;
}

InverseProblemInstance Dataset::instance(int i) const {
  if (i < 0 || i >= count()) throw InvalidInput("dataset: sample index out of range");
  InverseProblemInstance inst;
  inst.X_true = X[static_cast<std::size_t>(i)];
  inst.Y = Y[static_cast<std::size_t>(i)];
  inst.L = L;
  inst.snr_db = snr_db.empty() ? config.snr_db : snr_db[static_cast<std::size_t>(i)];
  inst.seed = seeds.empty() ? 0 : seeds[static_cast<std::size_t>(i)];
  return inst;
}

void split_indices(int count, double val_fraction, std::uint64_t seed, std::vector<int>& train, std::vector<int>& val) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(sample_seed(seed, 0xC0FFEE));
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_val = static_cast<int>(std::floor(val_fraction * count + 0.5));
  val.assign(idx.begin(), idx.begin() + n_val);
  train.assign(idx.begin() + n_val, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

Dataset generate_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.config = cfg;
  d.L = make_leadfield(cfg.n, cfg.s, cfg.condition_target, cfg.leadfield_seed);
  for (int i = 0; i < cfg.count; ++i) {
    const std::uint64_t seed = sample_seed(cfg.seed, static_cast<std::uint64_t>(i));
    InverseProblemInstance inst = simulate_sample(cfg, d.L, seed);
    d.X.push_back(std::move(inst.X_true));
    d.Y.push_back(std::move(inst.Y));
    d.seeds.push_back(seed);
    d.snr_db.push_back(cfg.snr_db);
  }
  split_indices(cfg.count, cfg.val_fraction, cfg.seed, d.train, d.val);
  return d;
}

// ---------------------------------------------------------------- files

namespace {

void write_tensor_file(const fs::path& path, const std::vector<const Matrix*>& blocks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  for (const Matrix* m : blocks) binio::put_f64(os, m->data(), static_cast<std::size_t>(m->size()));
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  const std::vector<char> buf = read_file(path);
  try {
    return nlohmann::json::parse(buf.begin(), buf.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.filename().string() + ": " + e.what(), static_cast<std::int64_t>(e.byte));
  }
}

std::vector<Matrix> read_tensor_file(const fs::path& path, int count, int rows, int cols) {
  const std::vector<char> buf = read_file(path);
  const std::size_t per = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  const std::size_t expected = per * static_cast<std::size_t>(count) * sizeof(double);
  if (buf.size() != expected)
    throw FormatError(path.filename().string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(buf.size()),
                      static_cast<std::int64_t>(std::min(buf.size(), expected)));
  std::vector<Matrix> out;
  for (int k = 0; k < count; ++k) {
    Matrix m(rows, cols);
    binio::get_f64(buf, static_cast<std::size_t>(k) * per * sizeof(double), m.data(), per);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& d) {
  d.config.validate();
  if (d.count() != d.config.count || static_cast<int>(d.Y.size()) != d.count())
    throw InvalidInput("write_dataset: sample count does not match config");
  for (int i = 0; i < d.count(); ++i)
    if (d.X[static_cast<std::size_t>(i)].rows() != d.config.s || d.X[static_cast<std::size_t>(i)].cols() != d.config.t ||
        d.Y[static_cast<std::size_t>(i)].rows() != d.config.n || d.Y[static_cast<std::size_t>(i)].cols() != d.config.t)
      throw ShapeError("write_dataset: sample " + std::to_string(i) + " has inconsistent shape");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json m;
  m["name"] = d.config.name;
  m["n"] = d.config.n;
  m["s"] = d.config.s;
  m["t"] = d.config.t;
  m["count"] = d.count();
  m["dtype"] = "f64le";
  m["layout"] = "row-major";
  m["generator"] = to_json(d.config);
  m["seeds"] = d.seeds;
  m["leadfield"] = "shared";
  m["geometry"] = {{"kind", d.config.geometry == GeometryKind::ring ? "ring" : "grid"}, {"grid_cols", d.config.grid_cols}};
  m["split"] = {{"train", "train.json"}, {"val", "val.json"}, {"val_fraction", d.config.val_fraction}};
  write_json(dir / "manifest.json", m);
  write_json(dir / "train.json", {{"indices", d.train}});
  write_json(dir / "val.json", {{"indices", d.val}});

  std::vector<const Matrix*> xs, ys;
  for (const auto& x : d.X) xs.push_back(&x);
  for (const auto& y : d.Y) ys.push_back(&y);
  write_tensor_file(dir / "X.bin", xs);
  write_tensor_file(dir / "Y.bin", ys);
  write_tensor_file(dir / "L.bin", {&d.L});
}

Dataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const nlohmann::json m = read_json(dir / "manifest.json");
  Dataset d;
  try {
    if (m.at("dtype").get<std::string>() != "f64le") throw FormatError("manifest.json: unsupported dtype");
    d.config = generator_config_from_json(m.at("generator"));
    const int n = m.at("n").get<int>(), s = m.at("s").get<int>(), t = m.at("t").get<int>();
    const int count = m.at("count").get<int>();
    if (n != d.config.n || s != d.config.s || t != d.config.t || count != d.config.count)
      throw FormatError("manifest.json: shape fields disagree with generator config");
    if (count < 1) throw FormatError("manifest.json: count must be positive");
    d.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    if (static_cast<int>(d.seeds.size()) != count) throw FormatError("manifest.json: seed list length differs from count");
    d.X = read_tensor_file(dir / "X.bin", count, s, t);
    d.Y = read_tensor_file(dir / "Y.bin", count, n, t);
    d.L = read_tensor_file(dir / "L.bin", 1, n, s)[0];
    d.snr_db.assign(static_cast<std::size_t>(count), d.config.snr_db);
    d.train = read_json(dir / "train.json").at("indices").get<std::vector<int>>();
    d.val = read_json(dir / "val.json").at("indices").get<std::vector<int>>();
    for (const auto* list : {&d.train, &d.val})
      for (int i : *list)
        if (i < 0 || i >= count) throw FormatError("split index out of range");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return d;
}

}  // namespace mmnet
