// Copyright 2026 The HALO Lab Authors.
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

#ifndef HALO_TRAINER_HPP_
#define HALO_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "halo/data.hpp"
#include "halo/klref.hpp"
#include "halo/losses.hpp"
#include "halo/policy.hpp"

namespace halo {

enum class OptimizerKind { sgd, sgd_momentum, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct TrainConfig {
  double lr = 5e-3;
  long steps = 50'000;
  // Microbatch size m. KTO shares one z0 per microbatch, so m >= 2 there.
  int batch_size = 32;
  // Every step sees the whole dataset, split into consecutive microbatches.
  // Otherwise one microbatch per step from a seeded shuffle.
  bool full_batch = true;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  long log_every = 100;
  // Converged once the gradient norm drops to this.
  double grad_tol = 1e-8;
  // Step size of the PPO value-table regression.
  double value_lr = 0.1;
  Z0Pairing z0_pairing = Z0Pairing::partial;

  // Verification only: swap analytic gradients for central differences of
  // the same step objective.
  bool finite_difference_gradients = false;
  double finite_difference_step = 1e-6;

  void validate(const LossSpec& loss) const;
};

struct TrainRow {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double reward_desirable = 0.0;    // mean implied reward, desirable / y_w
  double reward_undesirable = 0.0;  // mean implied reward, undesirable / y_l
  double z0 = 0.0;                  // mean microbatch reference point
  double kl_to_ref = 0.0;           // exact, averaged over contexts
};

struct TrainReport {
  std::vector<TrainRow> rows;
  long steps_run = 0;
  bool converged = false;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
};

struct TrainResult {
  Policy policy;
  TrainReport report;
};

// Deterministic gradient descent on one loss. Pair losses (dpo, slic) read
// data.pairs; the rest read data.feedback, falling back to
// preferences_to_binary(data.pairs) when there is no feedback. sft_ce
// trains on desirable examples only. csft expects `initial` and `ref` over
// the control-token space (V + 2, L + 1). kto_ref_free ignores `ref` except
// for reporting. Throws IncompatibleData or NumericalError.
TrainResult train(Policy initial, const Policy& ref, const Dataset& data,
                  const LossSpec& loss, const TrainConfig& cfg);

struct RewardTrainResult {
  RewardTable reward;
  TrainReport report;
};

// Bradley-Terry reward fitting on preference pairs.
RewardTrainResult train_reward_model(RewardTable initial,
                                     std::span<const PreferencePair> pairs,
                                     const TrainConfig& cfg);

// Parameter update rule; holds momentum / moment state.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t num_params);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

using ScalarObjective = std::function<double(std::span<const double>)>;

// Central differences, one coordinate at a time. h must lie in
// [1e-7, 1e-3].
std::vector<double> finite_diff_grad(const ScalarObjective& f,
                                     std::span<const double> params,
                                     double h);

struct GridSpec {
  std::vector<double> lrs;
  std::vector<double> betas;
  std::vector<double> lambda_Ds;
};

struct GridResult {
  double lr = 0.0;
  double beta = 0.0;
  double lambda_D = 0.0;
  double final_loss = 0.0;
  TrainReport report;
};

// Trains every grid point and ranks by final loss, ties broken by
// (lr, beta, lambda_D) in ascending order.
std::vector<GridResult> grid_search(const Policy& initial, const Policy& ref,
                                    const Dataset& data, const LossSpec& base,
                                    const TrainConfig& cfg,
                                    const GridSpec& grid);

}  // namespace halo

#endif  // HALO_TRAINER_HPP_
