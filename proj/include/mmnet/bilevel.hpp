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
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "mmnet/autodiff.hpp"
#include "mmnet/curvature.hpp"
#include "mmnet/datagen.hpp"
#include "mmnet/losses.hpp"
#include "mmnet/mm_solver.hpp"
#include "mmnet/phi_net.hpp"
#include "mmnet/predictor.hpp"

namespace mmnet {

// Everything the outer loop trains.
struct ModelParameters {
  PhiParameters phi;
  PredictorParameters predictor;

  // Φ tensors followed by the predictor tensors.
  TensorList tensors();
  ModelParameters zeros_like() const;
};

struct AdamState {
  std::vector<Vector> m, v;
  std::int64_t step = 0;

  // Zero moments shaped like `params`.
  static AdamState zeros(const TensorList& params);
};

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected adaptive-moment update in place. grads[k] matches params[k].
void adaptive_moment_step(const TensorList& params, const std::vector<Vector>& grads, AdamState& state,
                          const AdamConfig& cfg);

struct UnrollResult {
  double loss = 0.0;
  Matrix X_final;
  std::vector<Vector> grads;     // one per ModelParameters tensor
  std::vector<double> nu_hi;     // interval used at each iteration
  std::vector<double> radial;    // projection factor at each iteration
  std::vector<double> objectives;
  int descent_violations = 0;
  int p_violations = 0;          // entries of p outside their interval
};

// The I-step learned solver written out as one differentiable program. The
// curvature interval and the radial projection factor are evaluated
// numerically at each iterate and enter the program as constants, so the
// hypergradient does not flow through them.
class UnrolledProgram {
 public:
  UnrolledProgram(int n, int s, int t, const ModelParameters& shape_of, const SolverConfig& solver,
                  const ObjectiveSpec& spec);

  // Forward and backward through the unroll from X0. `fixed_nu` and
  // `fixed_radial`, when given, replace the numerically evaluated constants.
  // \`seed\` drives the power iteration of the spectral box.
  UnrollResult run(const InverseProblemInstance& inst, const Matrix& X0, const ModelParameters& params,
                   std::uint64_t seed, bool with_gradient = true, const std::vector<double>* fixed_nu = nullptr,
                   const std::vector<double>* fixed_radial = nullptr);

  int node_count() const { return graph_->size(); }

 private:
  int n_, s_, t_;
  SolverConfig solver_;
  ObjectiveSpec spec_;
  std::unique_ptr<ad::Graph> graph_;
  std::unique_ptr<ad::Tape> tape_;
  std::unique_ptr<ObjectiveHessian> hessian_;
  ad::Expr X0_, Y_, L_, Xtrue_;
  PhiExprs phi_;
  PredictorExprs pred_;
  std::vector<ad::Expr> nu_, radial_, states_, pre_, p_, u_;
  ad::Expr loss_;
  std::vector<ad::Expr> grads_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lower_objective = 0.0;  // mean final lower objective over training samples
  int descent_violations = 0;
  int p_violations = 0;
  int skipped = 0;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 5e-5;
  int batch_size = 1;
  int hidden_dim = 32;
  double phi_jitter = 0.01;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;
  int max_train = 0;  // use at most this many training samples (0 = all)
  int max_val = 0;
  ObjectiveSpec objective;
  SolverConfig solver;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);

struct Checkpoint {
  ModelParameters params;
  AdamState adam;
  int epoch = 0;
  std::vector<EpochRecord> history;
  nlohmann::json config;  // training configuration, informational
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Solver seed of dataset sample `index` under base seed `seed`.
std::uint64_t solve_seed(std::uint64_t seed, int index);

ModelParameters initial_model(int s, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&, const Checkpoint& last, bool improved)>;

// Algorithm outer loop: per batch, unroll the learned solver on every sample,
// average the hypergradients and take one Adam step. `resume` continues a
// previous run from its epoch counter and optimizer state.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const Checkpoint* resume = nullptr,
                  const EpochCallback& on_epoch = {});

// Mean upper loss of the learned solver over the given samples.
double validation_loss(const Dataset& data, const std::vector<int>& indices, const ModelParameters& params,
                       const TrainConfig& cfg);

}  // namespace mmnet
