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

#ifndef HALO_LOSSES_HPP_
#define HALO_LOSSES_HPP_

#include <span>
#include <string_view>
#include <vector>

#include "halo/policy.hpp"
#include "halo/value.hpp"

namespace halo {

struct PreferencePair {
  Context x = 0;
  Output chosen;    // y_w
  Output rejected;  // y_l

  friend bool operator==(const PreferencePair&,
                         const PreferencePair&) = default;
};

struct FeedbackExample {
  Context x = 0;
  Output y;
  Label label = Label::desirable;

  friend bool operator==(const FeedbackExample&,
                         const FeedbackExample&) = default;
};

enum class LossKind {
  dpo,
  kto,
  kto_ref_free,
  slic,
  csft,
  ppo_offline,
  bt_reward,
  sft_ce,
};

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);
// True for losses trained on (x, y_w, y_l) pairs rather than labeled outputs.
bool uses_pairs(LossKind kind);

// One loss and its hyperparameters. Fields not used by a kind are ignored.
struct LossSpec {
  LossKind kind = LossKind::kto;
  double beta = 0.1;
  double lambda_D = 1.0;
  double lambda_U = 1.0;
  double delta = 1.0;       // SLiC margin
  double lambda_reg = 1.0;  // SLiC cross-entropy weight
  double clip_lo = 0.25;    // PPO ratio interval
  double clip_hi = 4.0;
  double kl_coeff = 0.1;    // PPO label-token KL penalty
  ValueKind value_kind = ValueKind::logistic_kto;
  bool use_z0 = true;

  // Per-kind defaults; the reference-free KTO variant uses lambda_D = 1.75.
  static LossSpec defaults_for(LossKind kind);
  void validate() const;
  LogisticValueParams value_params() const {
    return {beta, lambda_D, lambda_U};
  }
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as the parameters
};

// mean -log sigma(beta * (log-ratio(y_w) - log-ratio(y_l))).
LossResult dpo_loss(std::span<const PreferencePair> batch, const Policy& policy,
                    const Policy& ref, double beta);

// Per-example KTO term for implied reward r against reference point z0, and
// its derivative with respect to r. Honors spec.value_kind:
//   logistic_kto           lambda_y - lambda_y sigma(+-beta (r - z0))
//   concave_logsigmoid     -lambda_y log sigma(+-beta (r - z0))
//   risk_neutral_identity  -lambda_y (+-beta (r - z0))
struct KtoTerm {
  double loss;
  double slope;
};
KtoTerm kto_term(double r, double z0, Label label, const LossSpec& spec);

// z0 is a constant: no gradient flows through it.
LossResult kto_loss(std::span<const FeedbackExample> batch,
                    const Policy& policy, const Policy& ref,
                    const LossSpec& spec, double z0);
// One reference point per example (microbatch-shared values repeated).
LossResult kto_loss(std::span<const FeedbackExample> batch,
                    const Policy& policy, const Policy& ref,
                    const LossSpec& spec, std::span<const double> z0);

// KTO with a uniform reference: r - z0 becomes log pi(y|x) - H(pi(.|x)).
// The entropy plays the role of z0 and is not differentiated.
LossResult kto_ref_free_loss(std::span<const FeedbackExample> batch,
                             const Policy& policy, const LossSpec& spec);
// Same, with the per-context entropies supplied (held fixed).
LossResult kto_ref_free_loss(std::span<const FeedbackExample> batch,
                             const Policy& policy, const LossSpec& spec,
                             std::span<const double> entropy);

// Hinge calibration on log pi(y_w)/pi(y_l) plus lambda_reg times
// cross-entropy on sft_targets. The hinge subgradient at the kink is 0.
LossResult slic_loss(std::span<const PreferencePair> batch,
                     std::span<const FeedbackExample> sft_targets,
                     const Policy& policy, double delta, double lambda_reg);

// mean -log pi(y|x).
LossResult sft_ce_loss(std::span<const FeedbackExample> batch,
                       const Policy& policy);

// Control tokens appended to a vocabulary of size `vocab`.
struct CsftTokens {
  Token good;
  Token bad;
};
inline CsftTokens csft_tokens(int vocab) { return {vocab, vocab + 1}; }

// Prepends GOOD to desirable and BAD to undesirable outputs. The result
// lives in the (vocab + 2, max_len + 1) space.
std::vector<FeedbackExample> csft_transform(
    std::span<const FeedbackExample> data, int vocab, int max_len);

// Inference-time CSFT: the distribution over the original (vocab, max_len)
// outputs after conditioning the first emitted token on GOOD.
std::vector<double> csft_conditional_distribution(const Policy& augmented,
                                                  Context x, int vocab,
                                                  int max_len);

// Dummy terminal reward: +1 desirable, -1 undesirable.
inline double dummy_return(Label label) {
  return label == Label::desirable ? 1.0 : -1.0;
}

// Tabular state-value estimates for offline PPO. Fitted in its own pass and
// never fed back into the policy gradient.
class ValueTable {
 public:
  explicit ValueTable(const MarkovPolicy& shape);
  ValueTable(int contexts, int num_states, std::vector<double> values);

  double operator()(Context x, int state) const;
  void set(Context x, int state, double v);
  int contexts() const { return contexts_; }
  int num_states() const { return num_states_; }

  // One gradient step on the mean squared error between V(state) and the
  // per-token return; returns the error before the step.
  double fit_step(std::span<const FeedbackExample> batch,
                  const MarkovPolicy& structure, double lr);

  std::span<double> params() { return values_; }
  std::span<const double> params() const { return values_; }

 private:
  int contexts_;
  int num_states_;
  std::vector<double> values_;
};

// min(q A, clip(q, lo, hi) A).
double ppo_clip_term(double q, double advantage, double clip_lo,
                     double clip_hi);

// Token-level offline PPO-Clip against a frozen reference, with advantages
// A = G - V(state) from dummy +-1 returns and a label-token KL penalty.
LossResult ppo_offline_loss(std::span<const FeedbackExample> batch,
                            const MarkovPolicy& policy,
                            const MarkovPolicy& ref, const ValueTable& values,
                            const LossSpec& spec);
// Throws IncompatibleData unless both policies are Markov with one shape.
LossResult ppo_offline_loss(std::span<const FeedbackExample> batch,
                            const Policy& policy, const Policy& ref,
                            const ValueTable& values, const LossSpec& spec);

// Bradley-Terry P(a preferred to b | x) = sigma(r(x, a) - r(x, b)).
double bt_preference(const RewardTable& r, Context x, std::span<const Token> a,
                     std::span<const Token> b);

// Negative log-likelihood of the pairs under Bradley-Terry; gradient is
// with respect to the reward table.
LossResult bt_reward_loss(std::span<const PreferencePair> batch,
                          const RewardTable& r);

}  // namespace halo

#endif  // HALO_LOSSES_HPP_
