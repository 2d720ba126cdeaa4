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

#include "halo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "halo/error.hpp"
#include "halo/numeric.hpp"

namespace halo {
namespace {

constexpr LossKind kAllKinds[] = {
    LossKind::dpo,  LossKind::kto,         LossKind::kto_ref_free,
    LossKind::slic, LossKind::csft,        LossKind::ppo_offline,
    LossKind::bt_reward, LossKind::sft_ce,
};

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw EmptyBatch(std::string(what) + ": empty batch");
}

LossResult zero_result(std::size_t n_params) {
  return {0.0, std::vector<double>(n_params, 0.0)};
}

}  // namespace

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::dpo:
      return "dpo";
    case LossKind::kto:
      return "kto";
    case LossKind::kto_ref_free:
      return "kto_ref_free";
    case LossKind::slic:
      return "slic";
    case LossKind::csft:
      return "csft";
    case LossKind::ppo_offline:
      return "ppo_offline";
    case LossKind::bt_reward:
      return "bt_reward";
    case LossKind::sft_ce:
      return "sft_ce";
  }
  return "unknown";
}

LossKind loss_kind_from_string(std::string_view name) {
  for (LossKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown loss kind '" + std::string(name) + "'");
}

bool uses_pairs(LossKind kind) {
  return kind == LossKind::dpo || kind == LossKind::slic ||
         kind == LossKind::bt_reward;
}

LossSpec LossSpec::defaults_for(LossKind kind) {
  LossSpec spec;
  spec.kind = kind;
  if (kind == LossKind::kto_ref_free) spec.lambda_D = 1.75;
  return spec;
}

void LossSpec::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("beta must be positive");
  }
  if (!(lambda_D > 0.0) || !(lambda_U > 0.0)) {
    throw InvalidArgument("lambda_D and lambda_U must be positive");
  }
  if (!(delta >= 0.0)) throw InvalidArgument("delta must be >= 0");
  if (!(lambda_reg >= 0.0)) throw InvalidArgument("lambda_reg must be >= 0");
  if (!(clip_lo < 1.0 && 1.0 < clip_hi) || !(clip_lo > 0.0)) {
    throw InvalidArgument("clip interval must satisfy 0 < clip_lo < 1 < clip_hi");
  }
  if (!(kl_coeff >= 0.0)) throw InvalidArgument("kl_coeff must be >= 0");
  if ((kind == LossKind::kto || kind == LossKind::kto_ref_free) &&
      value_kind == ValueKind::kt_power) {
    throw InvalidArgument(
        "kt_power is an analysis-only value function, not a trainable loss");
  }
}

// ---------------------------------------------------------------------------

LossResult dpo_loss(std::span<const PreferencePair> batch, const Policy& policy,
                    const Policy& ref, double beta) {
  require_nonempty(batch.size(), "dpo_loss");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  LossResult out = zero_result(policy.num_params());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PreferencePair& pair : batch) {
    const double delta =
        (policy.log_prob(pair.x, pair.chosen) - ref.log_prob(pair.x, pair.chosen)) -
        (policy.log_prob(pair.x, pair.rejected) -
         ref.log_prob(pair.x, pair.rejected));
    out.loss -= inv_n * log_sigmoid(beta * delta);
    // d/d delta of -log sigma(beta delta) = -beta sigma(-beta delta)
    const double slope = -beta * sigmoid(-beta * delta) * inv_n;
    policy.add_grad_log_prob(pair.x, pair.chosen, slope, out.grad);
    policy.add_grad_log_prob(pair.x, pair.rejected, -slope, out.grad);
  }
  return out;
}

KtoTerm kto_term(double r, double z0, Label label, const LossSpec& spec) {
  const bool desirable = label == Label::desirable;
  const double lambda = desirable ? spec.lambda_D : spec.lambda_U;
  const double sign = desirable ? 1.0 : -1.0;
  const double z = spec.beta * (r - z0);
  switch (spec.value_kind) {
    case ValueKind::logistic_kto: {
      // d(y) lambda_y beta sigma(z)(1 - sigma(z)), d(y) = -1 for desirable.
      const double v = sigmoid(sign * z);
      return {lambda - lambda * v, -sign * lambda * spec.beta * sigmoid_slope(z)};
    }
    case ValueKind::concave_logsigmoid:
      return {-lambda * log_sigmoid(sign * z),
              -sign * lambda * spec.beta * sigmoid(-sign * z)};
    case ValueKind::risk_neutral_identity:
      return {-lambda * sign * z, -sign * lambda * spec.beta};
    case ValueKind::kt_power:
      break;
  }
  throw InvalidArgument("kt_power is not a trainable value function");
}

LossResult kto_loss(std::span<const FeedbackExample> batch,
                    const Policy& policy, const Policy& ref,
                    const LossSpec& spec, double z0) {
  std::vector<double> z(batch.size(), z0);
  return kto_loss(batch, policy, ref, spec, z);
}

LossResult kto_loss(std::span<const FeedbackExample> batch,
                    const Policy& policy, const Policy& ref,
                    const LossSpec& spec, std::span<const double> z0) {
  require_nonempty(batch.size(), "kto_loss");
  if (z0.size() != batch.size()) {
    throw InvalidArgument("kto_loss: one reference point per example");
  }
  LossResult out = zero_result(policy.num_params());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const FeedbackExample& ex = batch[i];
    const double r = policy.log_prob(ex.x, ex.y) - ref.log_prob(ex.x, ex.y);
    const KtoTerm term = kto_term(r, z0[i], ex.label, spec);
    out.loss += inv_n * term.loss;
    policy.add_grad_log_prob(ex.x, ex.y, inv_n * term.slope, out.grad);
  }
  return out;
}

LossResult kto_ref_free_loss(std::span<const FeedbackExample> batch,
                             const Policy& policy, const LossSpec& spec) {
  std::vector<double> entropy(static_cast<std::size_t>(policy.contexts()));
  for (Context x = 0; x < policy.contexts(); ++x) {
    entropy[static_cast<std::size_t>(x)] = policy.entropy(x);
  }
  return kto_ref_free_loss(batch, policy, spec, entropy);
}

LossResult kto_ref_free_loss(std::span<const FeedbackExample> batch,
                             const Policy& policy, const LossSpec& spec,
                             std::span<const double> entropy) {
  require_nonempty(batch.size(), "kto_ref_free_loss");
  if (entropy.size() != static_cast<std::size_t>(policy.contexts())) {
    throw InvalidArgument("kto_ref_free_loss: one entropy per context");
  }
  LossResult out = zero_result(policy.num_params());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const FeedbackExample& ex : batch) {
    const double log_p = policy.log_prob(ex.x, ex.y);
    const KtoTerm term = kto_term(
        log_p, entropy[static_cast<std::size_t>(ex.x)], ex.label, spec);
    out.loss += inv_n * term.loss;
    policy.add_grad_log_prob(ex.x, ex.y, inv_n * term.slope, out.grad);
  }
  return out;
}

LossResult slic_loss(std::span<const PreferencePair> batch,
                     std::span<const FeedbackExample> sft_targets,
                     const Policy& policy, double delta, double lambda_reg) {
  require_nonempty(batch.size(), "slic_loss");
  if (!(delta >= 0.0)) throw InvalidArgument("delta must be >= 0");
  LossResult out = zero_result(policy.num_params());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PreferencePair& pair : batch) {
    const double margin = delta - (policy.log_prob(pair.x, pair.chosen) -
                                   policy.log_prob(pair.x, pair.rejected));
    if (margin > 0.0) {
      out.loss += inv_n * margin;
      policy.add_grad_log_prob(pair.x, pair.chosen, -inv_n, out.grad);
      policy.add_grad_log_prob(pair.x, pair.rejected, inv_n, out.grad);
    }
  }
  if (lambda_reg > 0.0 && !sft_targets.empty()) {
    const double w = lambda_reg / static_cast<double>(sft_targets.size());
    for (const FeedbackExample& ex : sft_targets) {
      out.loss -= w * policy.log_prob(ex.x, ex.y);
      policy.add_grad_log_prob(ex.x, ex.y, -w, out.grad);
    }
  }
  return out;
}

LossResult sft_ce_loss(std::span<const FeedbackExample> batch,
                       const Policy& policy) {
  require_nonempty(batch.size(), "sft_ce_loss");
  LossResult out = zero_result(policy.num_params());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const FeedbackExample& ex : batch) {
    out.loss -= inv_n * policy.log_prob(ex.x, ex.y);
    policy.add_grad_log_prob(ex.x, ex.y, -inv_n, out.grad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSFT

std::vector<FeedbackExample> csft_transform(
    std::span<const FeedbackExample> data, int vocab, int max_len) {
  const CsftTokens tokens = csft_tokens(vocab);
  std::vector<FeedbackExample> out;
  out.reserve(data.size());
  for (const FeedbackExample& ex : data) {
    if (ex.y.empty() || ex.y.size() > static_cast<std::size_t>(max_len)) {
      throw InvalidArgument("csft_transform: output would exceed L + 1 tokens");
    }
    for (Token t : ex.y) {
      if (t < 0 || t >= vocab) {
        throw InvalidArgument("csft_transform: token outside vocabulary");
      }
    }
    FeedbackExample aug = ex;
    aug.y.insert(aug.y.begin(),
                 ex.label == Label::desirable ? tokens.good : tokens.bad);
    out.push_back(std::move(aug));
  }
  return out;
}

std::vector<double> csft_conditional_distribution(const Policy& augmented,
                                                  Context x, int vocab,
                                                  int max_len) {
  const OutputSpace original(vocab, max_len);
  if (augmented.space().vocab() != vocab + 2 ||
      augmented.space().max_len() != max_len + 1) {
    throw InvalidArgument("policy is not over the control-token space");
  }
  const Token good = csft_tokens(vocab).good;
  std::vector<double> logp(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    Output y = original.at(i);
    y.insert(y.begin(), good);
    logp[i] = augmented.log_prob(x, y);
  }
  return softmax(logp);
}

// ---------------------------------------------------------------------------
// Offline PPO

ValueTable::ValueTable(const MarkovPolicy& shape)
    : ValueTable(shape.contexts(), shape.num_states(),
                 std::vector<double>(static_cast<std::size_t>(shape.contexts()) *
                                         static_cast<std::size_t>(
                                             shape.num_states()),
                                     0.0)) {}

ValueTable::ValueTable(int contexts, int num_states, std::vector<double> values)
    : contexts_(contexts), num_states_(num_states), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(contexts) *
                            static_cast<std::size_t>(num_states)) {
    throw InvalidArgument("value table has the wrong size");
  }
}

double ValueTable::operator()(Context x, int state) const {
  return values_[static_cast<std::size_t>(x) *
                     static_cast<std::size_t>(num_states_) +
                 static_cast<std::size_t>(state)];
}

void ValueTable::set(Context x, int state, double v) {
  values_[static_cast<std::size_t>(x) * static_cast<std::size_t>(num_states_) +
          static_cast<std::size_t>(state)] = v;
}

double ValueTable::fit_step(std::span<const FeedbackExample> batch,
                            const MarkovPolicy& structure, double lr) {
  require_nonempty(batch.size(), "ValueTable::fit_step");
  std::vector<double> grad(values_.size(), 0.0);
  double sse = 0.0;
  std::size_t tokens = 0;
  for (const FeedbackExample& ex : batch) {
    const double ret = dummy_return(ex.label);
    for (const MarkovStep& s : markov_trajectory(structure, ex.y)) {
      const double err = (*this)(ex.x, s.state) - ret;
      sse += err * err;
      grad[static_cast<std::size_t>(ex.x) *
               static_cast<std::size_t>(num_states_) +
           static_cast<std::size_t>(s.state)] += 2.0 * err;
      ++tokens;
    }
  }
  const double inv_t = 1.0 / static_cast<double>(tokens);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] -= lr * grad[i] * inv_t;
  }
  return sse * inv_t;
}

double ppo_clip_term(double q, double advantage, double clip_lo,
                     double clip_hi) {
  return std::min(q * advantage, std::clamp(q, clip_lo, clip_hi) * advantage);
}

LossResult ppo_offline_loss(std::span<const FeedbackExample> batch,
                            const MarkovPolicy& policy,
                            const MarkovPolicy& ref, const ValueTable& values,
                            const LossSpec& spec) {
  require_nonempty(batch.size(), "ppo_offline_loss");
  if (policy.contexts() != ref.contexts() || !(policy.space() == ref.space()) ||
      policy.order() != ref.order()) {
    throw IncompatibleData("policy and reference differ in structure");
  }
  if (values.contexts() != policy.contexts() ||
      values.num_states() != policy.num_states()) {
    throw IncompatibleData("value table does not match the policy");
  }
  struct TokenTerm {
    Context x;
    MarkovStep step;
    double log_ratio;
    double advantage;
  };
  std::vector<TokenTerm> terms;
  for (const FeedbackExample& ex : batch) {
    const double ret = dummy_return(ex.label);
    for (const MarkovStep& s : markov_trajectory(policy, ex.y)) {
      const double lr = policy.log_prob_action(ex.x, s.state, s.action, s.t) -
                        ref.log_prob_action(ex.x, s.state, s.action, s.t);
      terms.push_back({ex.x, s, lr, ret - values(ex.x, s.state)});
    }
  }
  LossResult out{0.0, std::vector<double>(policy.params().size(), 0.0)};
  const double inv_t = 1.0 / static_cast<double>(terms.size());
  for (const TokenTerm& term : terms) {
    const double q = std::exp(term.log_ratio);
    const double a = term.advantage;
    out.loss -= inv_t * ppo_clip_term(q, a, spec.clip_lo, spec.clip_hi);
    out.loss += inv_t * spec.kl_coeff * term.log_ratio;
    // The unclipped branch carries gradient when it is strictly inside the
    // interval or strictly smaller; kinks take the zero branch.
    const bool inside = q > spec.clip_lo && q < spec.clip_hi;
    const bool unclipped_min =
        q * a < std::clamp(q, spec.clip_lo, spec.clip_hi) * a;
    double coeff = spec.kl_coeff;
    if (inside || unclipped_min) coeff -= q * a;
    policy.add_grad_log_prob_action(term.x, term.step.state, term.step.action,
                                    term.step.t, inv_t * coeff, out.grad);
  }
  return out;
}

LossResult ppo_offline_loss(std::span<const FeedbackExample> batch,
                            const Policy& policy, const Policy& ref,
                            const ValueTable& values, const LossSpec& spec) {
  if (!policy.is_markov() || !ref.is_markov()) {
    throw IncompatibleData("offline PPO needs Markov policies");
  }
  return ppo_offline_loss(batch, policy.markov(), ref.markov(), values, spec);
}

// ---------------------------------------------------------------------------
// Bradley-Terry

double bt_preference(const RewardTable& r, Context x, std::span<const Token> a,
                     std::span<const Token> b) {
  return sigmoid(r(x, a) - r(x, b));
}

LossResult bt_reward_loss(std::span<const PreferencePair> batch,
                          const RewardTable& r) {
  require_nonempty(batch.size(), "bt_reward_loss");
  LossResult out = zero_result(r.params().size());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PreferencePair& pair : batch) {
    const std::size_t w = r.flat_index(pair.x, pair.chosen);
    const std::size_t l = r.flat_index(pair.x, pair.rejected);
    const double gap = r.params()[w] - r.params()[l];
    out.loss -= inv_n * log_sigmoid(gap);
    const double g = sigmoid(-gap) * inv_n;
    out.grad[w] -= g;
    out.grad[l] += g;
  }
  return out;
}

}  // namespace halo
