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

#include "halo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>

#include "halo/error.hpp"
#include "halo/numeric.hpp"

namespace halo {
namespace {

struct Prepared {
  bool pairwise = false;
  std::vector<PreferencePair> pairs;
  std::vector<FeedbackExample> feedback;
  std::vector<FeedbackExample> sft_targets;  // SLiC regularizer

  std::size_t size() const { return pairwise ? pairs.size() : feedback.size(); }
};

Prepared prepare(const Dataset& data, const LossSpec& loss) {
  Prepared p;
  p.pairwise = uses_pairs(loss.kind);
  if (p.pairwise) {
    if (data.pairs.empty()) {
      throw IncompatibleData(std::string(to_string(loss.kind)) +
                             " needs preference pairs");
    }
    p.pairs = data.pairs;
    if (loss.kind == LossKind::slic) {
      for (const auto& f : data.feedback) {
        if (f.label == Label::desirable) p.sft_targets.push_back(f);
      }
      if (p.sft_targets.empty()) {
        for (const auto& pair : data.pairs) {
          p.sft_targets.push_back({pair.x, pair.chosen, Label::desirable});
        }
      }
    }
    return p;
  }
  p.feedback = data.feedback.empty() ? preferences_to_binary(data.pairs)
                                     : data.feedback;
  if (loss.kind == LossKind::sft_ce) {
    std::erase_if(p.feedback, [](const FeedbackExample& f) {
      return f.label != Label::desirable;
    });
  }
  if (loss.kind == LossKind::csft) {
    p.feedback = csft_transform(p.feedback, data.meta.vocab, data.meta.max_len);
  }
  if (p.feedback.empty()) {
    throw IncompatibleData(std::string(to_string(loss.kind)) +
                           " needs feedback examples");
  }
  return p;
}

using Microbatches = std::vector<std::vector<std::size_t>>;

// Which examples each step sees, grouped into microbatches.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, const TrainConfig& cfg)
      : n_(n),
        m_(static_cast<std::size_t>(cfg.batch_size)),
        full_(cfg.full_batch),
        rng_(make_rng(cfg.seed, "trainer/shuffle")) {
    if (full_) {
      for (std::size_t lo = 0; lo < n_; lo += m_) {
        std::vector<std::size_t> mb;
        for (std::size_t i = lo; i < std::min(n_, lo + m_); ++i) {
          mb.push_back(i);
        }
        fixed_.push_back(std::move(mb));
      }
      // A trailing singleton cannot form mismatched pairs; fold it into
      // the previous microbatch.
      if (fixed_.size() > 1 && fixed_.back().size() == 1) {
        fixed_[fixed_.size() - 2].push_back(fixed_.back().front());
        fixed_.pop_back();
      }
    }
  }

  Microbatches next() {
    if (full_) return fixed_;
    const std::size_t take = std::min(m_, n_);
    if (order_.size() - cursor_ < take) reshuffle();
    std::vector<std::size_t> mb(order_.begin() + static_cast<long>(cursor_),
                                order_.begin() + static_cast<long>(cursor_ + take));
    cursor_ += take;
    return {std::move(mb)};
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    for (std::size_t i = n_; i > 1; --i) {
      std::swap(order_[i - 1], order_[uniform_index(rng_, i)]);
    }
    cursor_ = 0;
  }

  std::size_t n_;
  std::size_t m_;
  bool full_;
  Rng rng_;
  Microbatches fixed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Loss at an arbitrary policy, with every detached quantity (z0, entropy,
// value table) frozen at the values computed for the current step.
using StepObjective = std::function<LossResult(const Policy&)>;

struct StepSetup {
  StepObjective objective;
  double z0_mean = 0.0;
};

template <class T>
std::vector<T> gather(const std::vector<T>& src, const Microbatches& mbs) {
  std::vector<T> out;
  for (const auto& mb : mbs) {
    for (std::size_t i : mb) out.push_back(src[i]);
  }
  return out;
}

StepSetup build_step(const Policy& current, const Policy& ref,
                     const Prepared& prep, const Microbatches& mbs,
                     const LossSpec& loss, const TrainConfig& cfg,
                     std::optional<ValueTable>& values) {
  StepSetup setup;
  switch (loss.kind) {
    case LossKind::dpo: {
      auto batch = gather(prep.pairs, mbs);
      const double beta = loss.beta;
      setup.objective = [batch = std::move(batch), &ref,
                         beta](const Policy& p) {
        return dpo_loss(batch, p, ref, beta);
      };
      break;
    }
    case LossKind::slic: {
      auto batch = gather(prep.pairs, mbs);
      setup.objective = [batch = std::move(batch), &prep,
                         loss](const Policy& p) {
        return slic_loss(batch, prep.sft_targets, p, loss.delta,
                         loss.lambda_reg);
      };
      break;
    }
    case LossKind::kto: {
      std::vector<FeedbackExample> batch;
      std::vector<double> z0;
      double z0_sum = 0.0;
      for (const auto& mb : mbs) {
        std::vector<FeedbackExample> micro;
        for (std::size_t i : mb) micro.push_back(prep.feedback[i]);
        double shared = 0.0;
        if (loss.use_z0) {
          shared = estimate_z0(current, ref, micro, cfg.z0_pairing).value;
        }
        z0_sum += shared;
        for (auto& ex : micro) {
          batch.push_back(std::move(ex));
          z0.push_back(shared);
        }
      }
      setup.z0_mean = z0_sum / static_cast<double>(mbs.size());
      setup.objective = [batch = std::move(batch), z0 = std::move(z0), &ref,
                         loss](const Policy& p) {
        return kto_loss(batch, p, ref, loss, z0);
      };
      break;
    }
    case LossKind::kto_ref_free: {
      auto batch = gather(prep.feedback, mbs);
      std::vector<double> entropy(static_cast<std::size_t>(current.contexts()));
      for (Context x = 0; x < current.contexts(); ++x) {
        entropy[static_cast<std::size_t>(x)] = current.entropy(x);
      }
      setup.objective = [batch = std::move(batch),
                         entropy = std::move(entropy), loss](const Policy& p) {
        return kto_ref_free_loss(batch, p, loss, entropy);
      };
      break;
    }
    case LossKind::csft:
    case LossKind::sft_ce: {
      auto batch = gather(prep.feedback, mbs);
      setup.objective = [batch = std::move(batch)](const Policy& p) {
        return sft_ce_loss(batch, p);
      };
      break;
    }
    case LossKind::ppo_offline: {
      auto batch = gather(prep.feedback, mbs);
      values->fit_step(batch, current.markov(), cfg.value_lr);
      setup.objective = [batch = std::move(batch), table = *values, &ref,
                         loss](const Policy& p) {
        return ppo_offline_loss(batch, p, ref, table, loss);
      };
      break;
    }
    case LossKind::bt_reward:
      throw IncompatibleData("bt_reward trains a reward table; use "
                             "train_reward_model");
  }
  return setup;
}

struct StepValue {
  LossResult result;
  double z0 = 0.0;
};

// Shared descent loop. Evaluates at steps 0..cfg.steps and updates after
// every evaluation except the last, so the final row describes the
// returned parameters.
template <class EvalFn, class RowFn>
TrainReport descend(std::span<double> params, const TrainConfig& cfg,
                    EvalFn&& evaluate, RowFn&& fill_row) {
  TrainReport report;
  Optimizer opt(cfg, params.size());
  for (long step = 0; step <= cfg.steps; ++step) {
    StepValue v = evaluate(step);
    if (!std::isfinite(v.result.loss) || !all_finite(v.result.grad)) {
      throw NumericalError(
          "non-finite loss or gradient at step " + std::to_string(step), step);
    }
    const double gn = l2_norm(v.result.grad);
    const bool converged = gn <= cfg.grad_tol;
    const bool last = converged || step == cfg.steps;
    if (step % cfg.log_every == 0 || last) {
      TrainRow row;
      row.step = step;
      row.loss = v.result.loss;
      row.grad_norm = gn;
      row.z0 = v.z0;
      fill_row(row);
      report.rows.push_back(row);
    }
    report.final_loss = v.result.loss;
    report.final_grad_norm = gn;
    report.converged = converged;
    report.steps_run = step;
    if (last) break;
    opt.step(params, v.result.grad);
  }
  return report;
}

void fill_policy_row(TrainRow& row, const Policy& policy, const Policy& ref,
                     const Prepared& prep) {
  const bool comparable = policy.same_structure(ref);
  double sum_d = 0.0, sum_u = 0.0;
  long n_d = 0, n_u = 0;
  auto r = [&](Context x, const Output& y) {
    return comparable ? policy.log_prob(x, y) - ref.log_prob(x, y) : 0.0;
  };
  if (prep.pairwise) {
    for (const auto& p : prep.pairs) {
      sum_d += r(p.x, p.chosen);
      sum_u += r(p.x, p.rejected);
    }
    n_d = n_u = static_cast<long>(prep.pairs.size());
  } else {
    for (const auto& f : prep.feedback) {
      if (f.label == Label::desirable) {
        sum_d += r(f.x, f.y);
        ++n_d;
      } else {
        sum_u += r(f.x, f.y);
        ++n_u;
      }
    }
  }
  row.reward_desirable = n_d > 0 ? sum_d / static_cast<double>(n_d) : 0.0;
  row.reward_undesirable = n_u > 0 ? sum_u / static_cast<double>(n_u) : 0.0;
  if (comparable || policy.space() == ref.space()) {
    double kl = 0.0;
    for (Context x = 0; x < policy.contexts(); ++x) {
      kl += exact_kl(policy, ref, x);
    }
    row.kl_to_ref = kl / static_cast<double>(policy.contexts());
  }
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd:
      return "sgd";
    case OptimizerKind::sgd_momentum:
      return "sgd_momentum";
    case OptimizerKind::adam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  for (OptimizerKind k : {OptimizerKind::sgd, OptimizerKind::sgd_momentum,
                          OptimizerKind::adam}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate(const LossSpec& loss) const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw InvalidArgument("learning rate must be positive");
  }
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (loss.kind == LossKind::kto && loss.use_z0 && batch_size < 2) {
    throw BatchTooSmall("KTO with z0 needs batch_size >= 2");
  }
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("momentum must lie in [0, 1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw InvalidArgument("invalid Adam constants");
  }
  if (!(grad_tol >= 0.0)) throw InvalidArgument("grad_tol must be >= 0");
  if (!(value_lr > 0.0)) throw InvalidArgument("value_lr must be positive");
}

Optimizer::Optimizer(const TrainConfig& cfg, std::size_t num_params)
    : kind_(cfg.optimizer),
      lr_(cfg.lr),
      momentum_(cfg.momentum),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      m_(num_params, 0.0),
      v_(num_params, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  switch (kind_) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
      break;
    case OptimizerKind::sgd_momentum:
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = momentum_ * m_[i] + grad[i];
        params[i] -= lr_ * m_[i];
      }
      break;
    case OptimizerKind::adam: {
      const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
      }
      break;
    }
  }
}

std::vector<double> finite_diff_grad(const ScalarObjective& f,
                                     std::span<const double> params,
                                     double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw InvalidArgument("finite-difference step must lie in [1e-7, 1e-3]");
  }
  std::vector<double> work(params.begin(), params.end());
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double up = f(work);
    work[i] = orig - h;
    const double down = f(work);
    work[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

TrainResult train(Policy initial, const Policy& ref, const Dataset& data,
                  const LossSpec& loss, const TrainConfig& cfg) {
  loss.validate();
  cfg.validate(loss);
  data.validate();
  if (loss.kind == LossKind::bt_reward) {
    throw IncompatibleData("bt_reward trains a reward table; use "
                           "train_reward_model");
  }
  const OutputSpace expected =
      loss.kind == LossKind::csft
          ? OutputSpace(data.meta.vocab + 2, data.meta.max_len + 1)
          : data.space();
  if (!(initial.space() == expected) || initial.contexts() < data.meta.contexts) {
    throw IncompatibleData("policy shape does not match the dataset");
  }
  if (loss.kind != LossKind::kto_ref_free && !initial.same_structure(ref)) {
    throw IncompatibleData("policy and reference differ in structure");
  }
  if (loss.kind == LossKind::ppo_offline && !initial.is_markov()) {
    throw IncompatibleData("offline PPO needs a Markov policy");
  }

  const Prepared prep = prepare(data, loss);
  if (loss.kind == LossKind::kto && loss.use_z0 && prep.size() < 2) {
    throw BatchTooSmall("KTO with z0 needs at least two examples");
  }
  BatchSchedule schedule(prep.size(), cfg);
  std::optional<ValueTable> values;
  if (loss.kind == LossKind::ppo_offline) values.emplace(initial.markov());

  Policy policy = std::move(initial);
  auto evaluate = [&](long) {
    const StepSetup setup =
        build_step(policy, ref, prep, schedule.next(), loss, cfg, values);
    StepValue v;
    v.z0 = setup.z0_mean;
    v.result = setup.objective(policy);
    if (cfg.finite_difference_gradients) {
      Policy probe = policy;
      v.result.grad = finite_diff_grad(
          [&](std::span<const double> p) {
            std::copy(p.begin(), p.end(), probe.params().begin());
            return setup.objective(probe).loss;
          },
          policy.params(), cfg.finite_difference_step);
    }
    return v;
  };
  auto fill = [&](TrainRow& row) { fill_policy_row(row, policy, ref, prep); };
  TrainReport report = descend(policy.params(), cfg, evaluate, fill);
  return {std::move(policy), std::move(report)};
}

RewardTrainResult train_reward_model(RewardTable initial,
                                     std::span<const PreferencePair> pairs,
                                     const TrainConfig& cfg) {
  cfg.validate(LossSpec::defaults_for(LossKind::bt_reward));
  if (pairs.empty()) throw IncompatibleData("bt_reward needs preference pairs");
  const std::vector<PreferencePair> all(pairs.begin(), pairs.end());
  BatchSchedule schedule(all.size(), cfg);
  RewardTable reward = std::move(initial);
  auto evaluate = [&](long) {
    const auto batch = gather(all, schedule.next());
    StepValue v;
    v.result = bt_reward_loss(batch, reward);
    if (cfg.finite_difference_gradients) {
      RewardTable probe = reward;
      v.result.grad = finite_diff_grad(
          [&](std::span<const double> p) {
            std::copy(p.begin(), p.end(), probe.params().begin());
            return bt_reward_loss(batch, probe).loss;
          },
          reward.params(), cfg.finite_difference_step);
    }
    return v;
  };
  auto fill = [&](TrainRow& row) {
    double d = 0.0, u = 0.0;
    for (const auto& p : all) {
      d += reward(p.x, p.chosen);
      u += reward(p.x, p.rejected);
    }
    row.reward_desirable = d / static_cast<double>(all.size());
    row.reward_undesirable = u / static_cast<double>(all.size());
  };
  TrainReport report = descend(reward.params(), cfg, evaluate, fill);
  return {std::move(reward), std::move(report)};
}

std::vector<GridResult> grid_search(const Policy& initial, const Policy& ref,
                                    const Dataset& data, const LossSpec& base,
                                    const TrainConfig& cfg,
                                    const GridSpec& grid) {
  if (grid.lrs.empty() || grid.betas.empty() || grid.lambda_Ds.empty()) {
    throw InvalidArgument("every grid axis needs at least one value");
  }
  std::vector<GridResult> out;
  for (double lr : grid.lrs) {
    for (double beta : grid.betas) {
      for (double lambda_D : grid.lambda_Ds) {
        LossSpec spec = base;
        spec.beta = beta;
        spec.lambda_D = lambda_D;
        TrainConfig c = cfg;
        c.lr = lr;
        GridResult r;
        r.lr = lr;
        r.beta = beta;
        r.lambda_D = lambda_D;
        r.report = train(initial, ref, data, spec, c).report;
        r.final_loss = r.report.final_loss;
        out.push_back(std::move(r));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const GridResult& a, const GridResult& b) {
    return std::tie(a.final_loss, a.lr, a.beta, a.lambda_D) <
           std::tie(b.final_loss, b.lr, b.beta, b.lambda_D);
  });
  return out;
}

}  // namespace halo
