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

#include "halo/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "halo/data.hpp"
#include "halo/error.hpp"
#include "halo/numeric.hpp"
#include "halo/rng.hpp"
#include "halo/trainer.hpp"

namespace halo {
namespace {

std::vector<std::vector<double>> probability_rows(const TabularPolicy& p) {
  std::vector<std::vector<double>> rows;
  for (Context x = 0; x < p.contexts(); ++x) rows.push_back(p.distribution(x));
  return rows;
}

void require_same_shape(const TabularPolicy& ref, const RewardTable& r) {
  if (ref.contexts() != r.contexts() || !(ref.space() == r.space())) {
    throw IncompatibleData("reference and reward table shapes differ");
  }
}

RewardTable random_reward(Rng& rng, int contexts, const OutputSpace& space) {
  RewardTable r(contexts, space);
  for (double& v : r.params()) v = gaussian(rng);
  return r;
}

TabularPolicy random_tabular(Rng& rng, int contexts, const OutputSpace& space) {
  TabularPolicy p(contexts, space);
  for (double& v : p.params()) v = gaussian(rng);
  return p;
}

void sort_by_name(std::vector<TheoremVerdict>& verdicts) {
  std::stable_sort(verdicts.begin(), verdicts.end(),
                   [](const TheoremVerdict& a, const TheoremVerdict& b) {
                     return a.name < b.name;
                   });
}

std::vector<TheoremVerdict> theorem1_suite(std::uint64_t seed) {
  return {verify_halo_form_ppo(1000, seed)};
}

std::vector<TheoremVerdict> theorem2_suite(std::uint64_t seed) {
  Rng rng = make_rng(seed, "oracles/theorem2");
  const OutputSpace space(3, 2);
  constexpr int kContexts = 3;
  const TabularPolicy ref = random_tabular(rng, kContexts, space);
  const RewardTable r = random_reward(rng, kContexts, space);
  const double beta = 0.5;
  const LogisticValueParams value{0.1, 1.0, 1.0};

  // Worst case over 10 shifts, each with every entry bounded away from 0.
  std::vector<TheoremVerdict> worst;
  for (int trial = 0; trial < 10; ++trial) {
    EquivalenceShift shift;
    for (int x = 0; x < kContexts; ++x) {
      const double magnitude = uniform(rng, 0.1, 3.0);
      shift.h.push_back(uniform01(rng) < 0.5 ? -magnitude : magnitude);
    }
    auto legs = verify_theorem2(r, shift, ref, beta, value);
    if (worst.empty()) {
      worst = std::move(legs);
      continue;
    }
    for (std::size_t i = 0; i < legs.size(); ++i) {
      const bool smaller_is_worse = legs[i].relation == Relation::greater;
      const bool worse = smaller_is_worse
                             ? legs[i].observed < worst[i].observed
                             : legs[i].observed > worst[i].observed;
      if (worse || !legs[i].passed) worst[i] = legs[i];
    }
  }
  return worst;
}

std::vector<TheoremVerdict> theorem3_suite() {
  std::vector<TheoremVerdict> out;
  {
    const double p = 0.75;
    const double beta = 1.0;
    const ContradictoryOutcome dpo =
        train_contradictory(LossKind::dpo, p, beta, 0.5, 0.5);
    out.push_back(TheoremVerdict::check("theorem3_dpo_sigma",
                                        sigmoid(dpo.margin), p, 1e-3));
    const double ratio = dpo_optimal_ratio(p, beta, 0.5, 0.5);
    out.push_back(TheoremVerdict::check("theorem3_dpo_ratio",
                                        dpo.pi_a / dpo.pi_b, ratio,
                                        0.01 * ratio));
    const ContradictoryOutcome kto =
        train_contradictory(LossKind::kto, p, beta, 0.5, 0.5);
    out.push_back(TheoremVerdict::compare("theorem3_kto_majority", kto.pi_a,
                                          Relation::at_least, 0.99));
  }
  {
    const double p = 0.6;
    const double beta = 0.5;
    const double ref_a = 0.1;
    const double ref_b = 0.9;
    out.push_back(TheoremVerdict::compare(
        "theorem3_minority_condition", std::pow(p, 1.0 / beta) * ref_a,
        Relation::less, std::pow(1.0 - p, 1.0 / beta) * ref_b));
    const ContradictoryOutcome dpo =
        train_contradictory(LossKind::dpo, p, beta, ref_a, ref_b);
    out.push_back(TheoremVerdict::compare("theorem3_minority_dpo_prefers_b",
                                          dpo.pi_b - dpo.pi_a,
                                          Relation::greater, 0.0));
    const double ratio = dpo_optimal_ratio(p, beta, ref_a, ref_b);
    out.push_back(TheoremVerdict::check("theorem3_minority_dpo_ratio",
                                        dpo.pi_a / dpo.pi_b, ratio,
                                        0.01 * ratio));
    const ContradictoryOutcome kto =
        train_contradictory(LossKind::kto, p, beta, ref_a, ref_b);
    out.push_back(TheoremVerdict::compare("theorem3_minority_kto_majority",
                                          kto.pi_a, Relation::at_least, 0.99));
  }
  return out;
}

std::vector<TheoremVerdict> prop1_suite() {
  LossSpec spec = LossSpec::defaults_for(LossKind::kto);
  spec.beta = 1.0;
  return {verify_prop1_saturation(spec)};
}

std::vector<TheoremVerdict> rlhf_suite(std::uint64_t seed) {
  std::vector<TheoremVerdict> out;
  {
    const TabularPolicy ref = TabularPolicy::uniform(1, 2, 1);
    const RewardTable r(1, ref.space(), {1.0, 0.0});
    const TabularPolicy opt = rlhf_optimal_policy(ref, r, 1.0);
    const double e = std::exp(1.0);
    out.push_back(TheoremVerdict::check("rlhf_two_output_closed_form",
                                        opt.distribution(0)[0], e / (e + 1.0),
                                        1e-12));
  }
  Rng rng = make_rng(seed, "oracles/rlhf");
  const OutputSpace space(3, 2);
  const TabularPolicy ref = random_tabular(rng, 3, space);
  const RewardTable r = random_reward(rng, 3, space);
  const double beta = 1.0;
  const TabularPolicy opt = rlhf_optimal_policy(ref, r, beta);
  const AscentResult ascent =
      maximize_rlhf_objective(ref, r, beta, 1.0, 200'000, 1e-10);
  out.push_back(TheoremVerdict::compare(
      "rlhf_ascent_matches_closed_form",
      max_total_variation(ascent.policy, opt), Relation::at_most, 1e-3));
  TheoremVerdict shift = verify_opt_reward_shift(opt, ref, r, beta);
  shift.name = "rlhf_reward_shift_constant";
  out.push_back(shift);
  out.push_back(verify_rlhf_local_optimality(ref, r, beta, 100, seed));
  return out;
}

}  // namespace

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::within:
      return "within";
    case Relation::at_most:
      return "at_most";
    case Relation::at_least:
      return "at_least";
    case Relation::less:
      return "less";
    case Relation::greater:
      return "greater";
  }
  return "within";
}

TheoremVerdict TheoremVerdict::check(std::string name, double observed,
                                     double expected, double tolerance) {
  TheoremVerdict v;
  v.name = std::move(name);
  v.observed = observed;
  v.expected = expected;
  v.tolerance = tolerance;
  v.relation = Relation::within;
  v.passed = std::fabs(observed - expected) <= tolerance;
  return v;
}

TheoremVerdict TheoremVerdict::compare(std::string name, double observed,
                                       Relation relation, double bound) {
  TheoremVerdict v;
  v.name = std::move(name);
  v.observed = observed;
  v.expected = bound;
  v.relation = relation;
  switch (relation) {
    case Relation::within:
      v.passed = observed == bound;
      break;
    case Relation::at_most:
      v.passed = observed <= bound;
      break;
    case Relation::at_least:
      v.passed = observed >= bound;
      break;
    case Relation::less:
      v.passed = observed < bound;
      break;
    case Relation::greater:
      v.passed = observed > bound;
      break;
  }
  return v;
}

TabularPolicy rlhf_optimal_policy(const TabularPolicy& ref,
                                  const RewardTable& r, double beta) {
  if (!(beta > 0.0)) throw InvalidArgument("beta must be > 0");
  require_same_shape(ref, r);
  std::vector<double> logits(ref.params().size());
  std::size_t k = 0;
  for (Context x = 0; x < ref.contexts(); ++x) {
    for (std::size_t i = 0; i < ref.space().size(); ++i, ++k) {
      logits[k] = ref.log_prob_index(x, i) + r.at(x, i) / beta;
    }
  }
  return TabularPolicy(ref.contexts(), ref.space(), std::move(logits));
}

double rlhf_objective(const std::vector<std::vector<double>>& probs,
                      const TabularPolicy& ref, const RewardTable& r,
                      double beta) {
  require_same_shape(ref, r);
  if (probs.size() != static_cast<std::size_t>(ref.contexts())) {
    throw InvalidArgument("one probability row per context required");
  }
  double total = 0.0;
  for (Context x = 0; x < ref.contexts(); ++x) {
    const auto& row = probs[static_cast<std::size_t>(x)];
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] <= 0.0) continue;
      total += row[i] * (r.at(x, i) -
                         beta * (std::log(row[i]) - ref.log_prob_index(x, i)));
    }
  }
  return total;
}

double rlhf_objective(const TabularPolicy& policy, const TabularPolicy& ref,
                      const RewardTable& r, double beta) {
  return rlhf_objective(probability_rows(policy), ref, r, beta);
}

std::vector<double> rlhf_objective_grad(const TabularPolicy& policy,
                                        const TabularPolicy& ref,
                                        const RewardTable& r, double beta) {
  require_same_shape(ref, r);
  const std::size_t n = policy.space().size();
  std::vector<double> grad(policy.params().size(), 0.0);
  std::vector<double> g(n);
  for (Context x = 0; x < policy.contexts(); ++x) {
    const auto pi = policy.distribution(x);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = r.at(x, i) -
             beta * (policy.log_prob_index(x, i) - ref.log_prob_index(x, i));
      mean += pi[i] * g[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      grad[static_cast<std::size_t>(x) * n + i] = pi[i] * (g[i] - mean);
    }
  }
  return grad;
}

AscentResult maximize_rlhf_objective(const TabularPolicy& ref,
                                     const RewardTable& r, double beta,
                                     double lr, long max_steps,
                                     double grad_tol) {
  AscentResult out{ref, 0, 0.0};
  for (out.steps = 0; out.steps < max_steps; ++out.steps) {
    const auto grad = rlhf_objective_grad(out.policy, ref, r, beta);
    out.grad_norm = l2_norm(grad);
    if (out.grad_norm <= grad_tol) break;
    auto params = out.policy.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr * grad[i];
  }
  return out;
}

double max_total_variation(const Policy& a, const Policy& b) {
  if (!a.same_structure(b) && !(a.contexts() == b.contexts() &&
                                a.space() == b.space())) {
    throw IncompatibleData("policies over different spaces");
  }
  double worst = 0.0;
  for (Context x = 0; x < a.contexts(); ++x) {
    const auto pa = a.distribution(x);
    const auto pb = b.distribution(x);
    double tv = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) tv += std::fabs(pa[i] - pb[i]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

TheoremVerdict verify_opt_reward_shift(const TabularPolicy& optimal,
                                       const TabularPolicy& ref,
                                       const RewardTable& r, double beta) {
  require_same_shape(ref, r);
  double spread = 0.0;
  for (Context x = 0; x < ref.contexts(); ++x) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < ref.space().size(); ++i) {
      const double d =
          beta * (optimal.log_prob_index(x, i) - ref.log_prob_index(x, i)) -
          r.at(x, i);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    spread = std::max(spread, hi - lo);
  }
  return TheoremVerdict::check("opt_reward_shift_constant", spread, 0.0, 1e-9);
}

TheoremVerdict verify_rlhf_local_optimality(const TabularPolicy& ref,
                                            const RewardTable& r, double beta,
                                            int samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidArgument("samples must be >= 1");
  const TabularPolicy opt = rlhf_optimal_policy(ref, r, beta);
  const auto best_rows = probability_rows(opt);
  const double best = rlhf_objective(best_rows, ref, r, beta);
  Rng rng = make_rng(seed, "oracles/rlhf_perturb");
  int not_lower = 0;
  for (int s = 0; s < samples; ++s) {
    const double t = uniform(rng, 1e-3, 0.1);
    auto rows = best_rows;
    for (auto& row : rows) {
      // Mix toward a uniformly random simplex point.
      std::vector<double> q(row.size());
      double total = 0.0;
      for (double& v : q) {
        v = -std::log(1.0 - uniform01(rng));
        total += v;
      }
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = (1.0 - t) * row[i] + t * q[i] / total;
      }
    }
    if (!(rlhf_objective(rows, ref, r, beta) < best)) ++not_lower;
  }
  return TheoremVerdict::compare("rlhf_local_optimality", not_lower,
                                 Relation::at_most, 0.0);
}

double dpo_optimal_margin(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("p must lie in (0, 1)");
  return logit(p);
}

double dpo_optimal_ratio(double p, double beta, double ref_a, double ref_b) {
  if (!(p > 0.5 && p < 1.0)) throw InvalidArgument("p must lie in (0.5, 1)");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be > 0");
  if (!(ref_a > 0.0 && ref_b > 0.0)) {
    throw InvalidArgument("reference probabilities must be > 0");
  }
  const double log_ratio = logit(p) / beta + std::log(ref_a) - std::log(ref_b);
  return std::exp(log_ratio);  // +inf on overflow
}

bool check_theorem3_condition(double p, double beta, double ref_a,
                              double ref_b) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("p must lie in (0, 1)");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be > 0");
  if (!(ref_a > 0.0 && ref_b > 0.0)) {
    throw InvalidArgument("reference probabilities must be > 0");
  }
  return std::log(p) / beta + std::log(ref_a) <
         std::log1p(-p) / beta + std::log(ref_b);
}

Output kto_optimal_policy_contradictory(double p, double lambda_D,
                                        double lambda_U) {
  if (lambda_D != lambda_U) {
    throw InvalidArgument("requires lambda_D == lambda_U");
  }
  if (!(p > 0.5 && p <= 1.0)) throw InvalidArgument("p must lie in (0.5, 1]");
  return Output{0};
}

ContradictoryOutcome train_contradictory(LossKind kind, double p, double beta,
                                         double ref_a, double ref_b, int n) {
  if (kind != LossKind::dpo && kind != LossKind::kto) {
    throw InvalidArgument("train_contradictory supports dpo and kto");
  }
  const Dataset data = gen_contradictory(p, n);
  const TabularPolicy ref =
      TabularPolicy::from_probabilities(data.space(), {{ref_a, ref_b}});
  LossSpec spec = LossSpec::defaults_for(kind);
  spec.beta = beta;
  TrainConfig cfg;
  cfg.lr = 2.0;
  cfg.steps = 50'000;
  cfg.batch_size = std::max(2, static_cast<int>(data.pairs.size() * 2));
  cfg.log_every = cfg.steps;
  cfg.grad_tol = 1e-12;
  const TrainResult result = train(Policy(ref), Policy(ref), data, spec, cfg);
  const auto pi = result.policy.distribution(0);
  ContradictoryOutcome out;
  out.pi_a = pi[0];
  out.pi_b = pi[1];
  out.margin = beta * (implied_reward(result.policy, Policy(ref), 0,
                                      Output{0}) -
                       implied_reward(result.policy, Policy(ref), 0,
                                      Output{1}));
  out.steps = result.report.steps_run;
  out.converged = result.report.converged;
  return out;
}

std::vector<TheoremVerdict> verify_theorem2(const RewardTable& r,
                                            const EquivalenceShift& shift,
                                            const TabularPolicy& ref,
                                            double beta,
                                            const LogisticValueParams& value) {
  require_same_shape(ref, r);
  if (shift.h.size() != static_cast<std::size_t>(r.contexts())) {
    throw InvalidArgument("shift needs one entry per context");
  }
  for (double h : shift.h) {
    if (!std::isfinite(h)) throw InvalidArgument("shift must be finite");
  }
  const std::size_t n = r.space().size();
  RewardTable shifted = r;
  for (Context x = 0; x < r.contexts(); ++x) {
    for (std::size_t i = 0; i < n; ++i) {
      shifted.set(x, i, r.at(x, i) + shift.h[static_cast<std::size_t>(x)]);
    }
  }

  double bt_gap = 0.0;
  for (Context x = 0; x < r.contexts(); ++x) {
    for (std::size_t a = 0; a < n; ++a) {
      const Output ya = r.space().at(a);
      for (std::size_t b = 0; b < n; ++b) {
        const Output yb = r.space().at(b);
        bt_gap = std::max(bt_gap, std::fabs(bt_preference(r, x, ya, yb) -
                                            bt_preference(shifted, x, ya, yb)));
      }
    }
  }

  const TabularPolicy opt_a = rlhf_optimal_policy(ref, r, beta);
  const TabularPolicy opt_b = rlhf_optimal_policy(ref, shifted, beta);
  const double tv = max_total_variation(opt_a, opt_b);

  // Same policy, so the KL reference point is shared; only h moves values.
  double value_gap = 0.0;
  for (Context x = 0; x < r.contexts(); ++x) {
    const double z0 = exact_kl(opt_a, ref, x);
    for (std::size_t i = 0; i < n; ++i) {
      for (Label label : {Label::desirable, Label::undesirable}) {
        value_gap = std::max(
            value_gap, std::fabs(kto_value(r.at(x, i), z0, label, value) -
                                 kto_value(shifted.at(x, i), z0, label, value)));
      }
    }
  }

  const bool nonzero = std::any_of(shift.h.begin(), shift.h.end(),
                                   [](double h) { return h != 0.0; });
  return {
      TheoremVerdict::check("theorem2_bt_invariant", bt_gap, 0.0, 1e-12),
      TheoremVerdict::compare("theorem2_same_optimal_policy", tv,
                              Relation::at_most, 1e-12),
      nonzero ? TheoremVerdict::compare("theorem2_values_differ", value_gap,
                                        Relation::greater, 1e-6)
              : TheoremVerdict::check("theorem2_values_differ", value_gap,
                                      0.0, 0.0),
  };
}

TheoremVerdict verify_prop1_saturation(const LossSpec& spec, double lo,
                                       double hi, int points) {
  if (!(lo < 0.0 && hi > 0.0) || points < 3) {
    throw InvalidArgument("scan must straddle 0 with at least 3 points");
  }
  if (spec.kind != LossKind::kto || spec.value_kind != ValueKind::logistic_kto) {
    throw InvalidArgument("saturation check needs the logistic KTO loss");
  }
  const OutputSpace space(2, 1);
  const Policy ref = TabularPolicy::uniform(1, 2, 1);
  const Policy policy = TabularPolicy(1, space, {0.3, -0.2});
  const Output y{0};
  const double r = implied_reward(policy, ref, 0, y);

  bool shape_ok = true;
  double worst_ratio = 0.0;
  for (Label label : {Label::desirable, Label::undesirable}) {
    const FeedbackExample ex{0, y, label};
    std::vector<double> s(static_cast<std::size_t>(points));
    std::vector<double> norm(s.size());
    std::size_t zero = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = lo + (hi - lo) * static_cast<double>(i) /
                      static_cast<double>(points - 1);
      if (std::fabs(s[i]) < std::fabs(s[zero])) zero = i;
      const double z0 = r - s[i] / spec.beta;
      norm[i] = l2_norm(kto_loss(std::span(&ex, 1), policy, ref, spec, z0).grad);
    }
    const double peak = norm[zero];
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (norm[i] > peak * (1.0 + 1e-12)) shape_ok = false;
      if (i > 0 && s[i - 1] >= 5.0 && norm[i] > norm[i - 1]) shape_ok = false;
      if (i > 0 && s[i] <= -5.0 && norm[i] < norm[i - 1]) shape_ok = false;
    }
    worst_ratio = std::max({worst_ratio, norm.front() / peak,
                            norm.back() / peak});
  }
  TheoremVerdict v = TheoremVerdict::compare(
      "prop1_kto_saturation", worst_ratio, Relation::at_most, 1e-6);
  v.passed = v.passed && shape_ok;
  return v;
}

TheoremVerdict verify_halo_form_ppo(int samples, std::uint64_t seed,
                                    const ClipObjective& clip_objective) {
  if (samples < 1) throw InvalidArgument("samples must be >= 1");
  Rng rng = make_rng(seed, "oracles/theorem1");
  auto halo_form = [](double q, double a, double eps) {
    const double qa = q * a;
    const double sign = qa > 0.0 ? 1.0 : (qa < 0.0 ? -1.0 : 0.0);
    return std::min(qa, a * (1.0 + sign * eps));
  };
  double worst = 0.0;
  auto probe = [&](double q, double a, double eps) {
    const double clip = clip_objective(q, a, 1.0 - eps, 1.0 + eps);
    const double d = halo_form(q, a, eps) - clip;
    // NaN must fail as well.
    worst = std::isnan(d) ? std::numeric_limits<double>::infinity()
                          : std::max(worst, std::fabs(d));
  };
  probe(0.7, 0.0, 0.2);
  probe(1.0, 1.3, 0.2);
  probe(1.0, -1.3, 0.2);
  for (int i = 0; i < samples; ++i) {
    const double eps = uniform(rng, 1e-3, 1.0 - 1e-3);
    const double q = std::exp(uniform(rng, -2.0, 2.0));
    const double a = 2.0 * gaussian(rng);
    probe(q, a, eps);
  }
  return TheoremVerdict::check("theorem1_ppo_halo_form", worst, 0.0, 0.0);
}

std::vector<TheoremVerdict> run_suite(std::string_view suite,
                                      std::uint64_t seed) {
  std::vector<TheoremVerdict> out;
  auto append = [&out](std::vector<TheoremVerdict> more) {
    for (auto& v : more) out.push_back(std::move(v));
  };
  const bool all = suite == "all";
  if (!all && suite != "theorem1" && suite != "theorem2" &&
      suite != "theorem3" && suite != "prop1" && suite != "rlhf") {
    throw InvalidArgument("unknown suite: " + std::string(suite));
  }
  if (all || suite == "theorem1") append(theorem1_suite(seed));
  if (all || suite == "theorem2") append(theorem2_suite(seed));
  if (all || suite == "theorem3") append(theorem3_suite());
  if (all || suite == "prop1") append(prop1_suite());
  if (all || suite == "rlhf") append(rlhf_suite(seed));
  sort_by_name(out);
  return out;
}

}  // namespace halo
