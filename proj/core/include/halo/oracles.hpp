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

#ifndef HALO_ORACLES_HPP_
#define HALO_ORACLES_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "halo/losses.hpp"
#include "halo/policy.hpp"
#include "halo/value.hpp"

namespace halo {

// Input-only reward shift h(x), one entry per context.
struct EquivalenceShift {
  std::vector<double> h;
};

enum class Relation { within, at_most, at_least, less, greater };

std::string_view to_string(Relation relation);

struct TheoremVerdict {
  std::string name;
  bool passed = false;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  // within: |observed - expected| <= tolerance; otherwise observed compared
  // against expected.
  Relation relation = Relation::within;

  static TheoremVerdict check(std::string name, double observed,
                              double expected, double tolerance);
  static TheoremVerdict compare(std::string name, double observed,
                                Relation relation, double bound);
};

// pi*(y|x) proportional to ref(y|x) exp(r(x, y) / beta).
TabularPolicy rlhf_optimal_policy(const TabularPolicy& ref,
                                  const RewardTable& r, double beta);

// sum_x E_pi[r] - beta KL(pi || ref), over explicit probability rows.
double rlhf_objective(const std::vector<std::vector<double>>& probs,
                      const TabularPolicy& ref, const RewardTable& r,
                      double beta);
double rlhf_objective(const TabularPolicy& policy, const TabularPolicy& ref,
                      const RewardTable& r, double beta);
// Gradient of rlhf_objective with respect to the policy logits.
std::vector<double> rlhf_objective_grad(const TabularPolicy& policy,
                                        const TabularPolicy& ref,
                                        const RewardTable& r, double beta);

struct AscentResult {
  TabularPolicy policy;
  long steps = 0;
  double grad_norm = 0.0;
};

// Plain gradient ascent from the reference logits.
AscentResult maximize_rlhf_objective(const TabularPolicy& ref,
                                     const RewardTable& r, double beta,
                                     double lr, long max_steps,
                                     double grad_tol);

// Largest total variation between the per-context distributions.
double max_total_variation(const Policy& a, const Policy& b);

// Implied reward (scale beta) minus r must be constant within each context.
TheoremVerdict verify_opt_reward_shift(const TabularPolicy& optimal,
                                       const TabularPolicy& ref,
                                       const RewardTable& r, double beta);

// Fraction of `samples` random simplex perturbations of the optimum whose
// objective is not strictly lower.
TheoremVerdict verify_rlhf_local_optimality(const TabularPolicy& ref,
                                            const RewardTable& r, double beta,
                                            int samples, std::uint64_t seed);

// DPO optimum on contradictory pairs: u* = logit(p) and
// pi(y_a)/pi(y_b) = (p / (1 - p))^(1/beta) ref_a / ref_b. Returns +inf when
// the ratio overflows.
double dpo_optimal_margin(double p);
double dpo_optimal_ratio(double p, double beta, double ref_a, double ref_b);

// p^(1/beta) ref_a < (1 - p)^(1/beta) ref_b, compared in log space.
bool check_theorem3_condition(double p, double beta, double ref_a,
                              double ref_b);

// With lambda_D = lambda_U and p > 0.5 the KTO optimum puts its mass on the
// majority output y_a = (0).
Output kto_optimal_policy_contradictory(double p, double lambda_D,
                                        double lambda_U);

struct ContradictoryOutcome {
  double pi_a = 0.0;
  double pi_b = 0.0;
  double margin = 0.0;  // beta * (r_a - r_b) under the trained policy
  long steps = 0;
  bool converged = false;
};

// Trains `kind` (dpo or kto) from the reference on gen_contradictory(p, n)
// with a two-output reference (ref_a, ref_b).
ContradictoryOutcome train_contradictory(LossKind kind, double p, double beta,
                                         double ref_a, double ref_b,
                                         int n = 100);

// Legs: BT preferences equal, RLHF optima equal, logistic values differ.
std::vector<TheoremVerdict> verify_theorem2(const RewardTable& r,
                                            const EquivalenceShift& shift,
                                            const TabularPolicy& ref,
                                            double beta,
                                            const LogisticValueParams& value);

// Scans beta (r - z0) over [lo, hi] for single desirable and undesirable
// examples; passes when the gradient norm peaks at 0, decreases on each
// side beyond |beta z| = 5 and the endpoints are <= 1e-6 of the peak.
TheoremVerdict verify_prop1_saturation(const LossSpec& spec, double lo = -20.0,
                                       double hi = 20.0, int points = 401);

using ClipObjective =
    std::function<double(double q, double advantage, double lo, double hi)>;

// Exact equality of min(qA, A(1 + sign(qA) eps)) and the clip objective
// (ppo_clip_term unless another implementation is injected).
TheoremVerdict verify_halo_form_ppo(int samples, std::uint64_t seed,
                                    const ClipObjective& clip = ppo_clip_term);

// Suites: all, theorem1, theorem2, theorem3, prop1, rlhf. Verdicts sorted by
// name.
std::vector<TheoremVerdict> run_suite(std::string_view suite,
                                      std::uint64_t seed);

}  // namespace halo

#endif  // HALO_ORACLES_HPP_
