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

#include "halo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "halo/error.hpp"
#include "halo/numeric.hpp"
#include "halo/rng.hpp"
#include "halo/trainer.hpp"

namespace halo {
namespace {

struct Instance {
  std::vector<double> params;
  // Loss and analytic gradient at a parameter vector.
  std::function<LossResult(std::span<const double>)> eval;
};

int draw_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(
                  rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * gaussian(rng);
  return v;
}

Policy random_policy(Rng& rng, int contexts, const OutputSpace& space,
                     bool markov, int order, double scale) {
  if (markov) {
    MarkovPolicy shape(contexts, space, order);
    return MarkovPolicy(contexts, space, order,
                        gaussian_vector(rng, shape.params().size(), scale));
  }
  return TabularPolicy(contexts, space,
                       gaussian_vector(rng, static_cast<std::size_t>(contexts) *
                                                space.size(),
                                       scale));
}

Output random_output(Rng& rng, const OutputSpace& space) {
  return space.at(uniform_index(rng, space.size()));
}

std::vector<PreferencePair> random_pairs(Rng& rng, int contexts,
                                         const OutputSpace& space, int n) {
  std::vector<PreferencePair> out;
  for (int i = 0; i < n; ++i) {
    const Context x = draw_int(rng, 0, contexts - 1);
    const std::size_t a = uniform_index(rng, space.size());
    std::size_t b = uniform_index(rng, space.size() - 1);
    if (b >= a) ++b;
    out.push_back({x, space.at(a), space.at(b)});
  }
  return out;
}

std::vector<FeedbackExample> random_feedback(Rng& rng, int contexts,
                                             const OutputSpace& space, int n) {
  std::vector<FeedbackExample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({draw_int(rng, 0, contexts - 1), random_output(rng, space),
                   uniform01(rng) < 0.5 ? Label::desirable
                                        : Label::undesirable});
  }
  return out;
}

ValueKind random_value_kind(Rng& rng) {
  constexpr ValueKind kinds[] = {ValueKind::logistic_kto,
                                 ValueKind::concave_logsigmoid,
                                 ValueKind::risk_neutral_identity};
  return kinds[uniform_index(rng, 3)];
}

// Wraps a policy loss as a function of raw parameters.
template <class F>
std::function<LossResult(std::span<const double>)> over_params(Policy shape,
                                                              F loss) {
  return [shape = std::move(shape), loss](std::span<const double> p) mutable {
    std::copy(p.begin(), p.end(), shape.params().begin());
    return loss(shape);
  };
}

// Draws one instance; returns nullopt when it lies within the kink margin.
std::optional<Instance> draw_instance(LossKind kind, Rng& rng) {
  const int contexts = draw_int(rng, 1, 3);
  const int vocab = draw_int(rng, 2, 3);
  const int max_len = draw_int(rng, 1, 2);
  const OutputSpace space(vocab, max_len);
  const bool markov = kind == LossKind::ppo_offline || uniform01(rng) < 0.5;
  const int order = draw_int(rng, 0, max_len - 1);
  const int n = draw_int(rng, 1, 4);

  LossSpec spec = LossSpec::defaults_for(kind);
  spec.beta = uniform(rng, 0.1, 2.0);
  spec.lambda_D = uniform(rng, 0.5, 2.0);
  spec.lambda_U = uniform(rng, 0.5, 2.0);
  spec.value_kind = random_value_kind(rng);

  Policy policy = random_policy(rng, contexts, space, markov, order, 1.0);
  Instance inst;
  inst.params.assign(policy.params().begin(), policy.params().end());

  switch (kind) {
    case LossKind::dpo: {
      const Policy ref = random_policy(rng, contexts, space, markov, order, 1.0);
      auto pairs = random_pairs(rng, contexts, space, n);
      inst.eval = over_params(policy, [=](const Policy& p) {
        return dpo_loss(pairs, p, ref, spec.beta);
      });
      return inst;
    }
    case LossKind::kto: {
      const Policy ref = random_policy(rng, contexts, space, markov, order, 1.0);
      auto batch = random_feedback(rng, contexts, space, n);
      const double z0 = uniform(rng, 0.0, 0.5);
      inst.eval = over_params(policy, [=](const Policy& p) {
        return kto_loss(batch, p, ref, spec, z0);
      });
      return inst;
    }
    case LossKind::kto_ref_free: {
      auto batch = random_feedback(rng, contexts, space, n);
      std::vector<double> entropy;
      for (Context x = 0; x < contexts; ++x) entropy.push_back(policy.entropy(x));
      inst.eval = over_params(policy, [=](const Policy& p) {
        return kto_ref_free_loss(batch, p, spec, entropy);
      });
      return inst;
    }
    case LossKind::slic: {
      auto pairs = random_pairs(rng, contexts, space, n);
      auto targets = random_feedback(rng, contexts, space, draw_int(rng, 1, 3));
      spec.delta = uniform(rng, 0.0, 2.0);
      spec.lambda_reg = uniform(rng, 0.0, 2.0);
      for (const auto& pr : pairs) {
        const double lr = policy.log_prob(pr.x, pr.chosen) -
                          policy.log_prob(pr.x, pr.rejected);
        if (std::fabs(spec.delta - lr) < kKinkMargin) return std::nullopt;
      }
      inst.eval = over_params(policy, [=](const Policy& p) {
        return slic_loss(pairs, targets, p, spec.delta, spec.lambda_reg);
      });
      return inst;
    }
    case LossKind::csft: {
      const OutputSpace aug(vocab + 2, max_len + 1);
      Policy aug_policy =
          random_policy(rng, contexts, aug, markov, std::min(order, max_len), 1.0);
      inst.params.assign(aug_policy.params().begin(), aug_policy.params().end());
      auto batch = csft_transform(random_feedback(rng, contexts, space, n),
                                  vocab, max_len);
      inst.eval = over_params(aug_policy, [=](const Policy& p) {
        return sft_ce_loss(batch, p);
      });
      return inst;
    }
    case LossKind::sft_ce: {
      auto batch = random_feedback(rng, contexts, space, n);
      inst.eval = over_params(policy, [=](const Policy& p) {
        return sft_ce_loss(batch, p);
      });
      return inst;
    }
    case LossKind::ppo_offline: {
      // Reference drawn farther away so that some ratios land outside the
      // clip interval.
      const Policy ref = random_policy(rng, contexts, space, true, order, 1.5);
      auto batch = random_feedback(rng, contexts, space, n);
      const MarkovPolicy& mp = policy.markov();
      ValueTable table(mp);
      for (double& v : table.params()) v = 0.5 * gaussian(rng);
      spec.kl_coeff = uniform(rng, 0.0, 0.5);
      if (uniform01(rng) < 0.5) {
        const double eps = uniform(rng, 0.05, 0.5);
        spec.clip_lo = 1.0 - eps;
        spec.clip_hi = 1.0 + eps;
      }
      for (const auto& ex : batch) {
        for (const MarkovStep& s : markov_trajectory(mp, ex.y)) {
          const double q =
              std::exp(mp.log_prob_action(ex.x, s.state, s.action, s.t) -
                       ref.markov().log_prob_action(ex.x, s.state, s.action,
                                                    s.t));
          if (std::fabs(q - spec.clip_lo) < kKinkMargin ||
              std::fabs(q - spec.clip_hi) < kKinkMargin) {
            return std::nullopt;
          }
        }
      }
      inst.eval = over_params(policy, [=](const Policy& p) {
        return ppo_offline_loss(batch, p, ref, table, spec);
      });
      return inst;
    }
    case LossKind::bt_reward: {
      RewardTable r(contexts, space,
                    gaussian_vector(rng, static_cast<std::size_t>(contexts) *
                                             space.size(),
                                    1.0));
      inst.params.assign(r.params().begin(), r.params().end());
      auto pairs = random_pairs(rng, contexts, space, n);
      inst.eval = [r, pairs](std::span<const double> p) mutable {
        std::copy(p.begin(), p.end(), r.params().begin());
        return bt_reward_loss(pairs, r);
      };
      return inst;
    }
  }
  throw InvalidArgument("unhandled loss kind");
}

}  // namespace

double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw InvalidArgument("gradient sizes differ");
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
  }
  diff = std::sqrt(diff);
  const double scale = std::max(l2_norm(analytic), l2_norm(numeric));
  return scale < 1e-12 ? diff : diff / scale;
}

GradcheckResult run_gradcheck(LossKind kind, int trials, std::uint64_t seed,
                              double h, double tolerance) {
  if (trials < 1) throw InvalidArgument("trials must be >= 1");
  GradcheckResult result;
  result.kind = kind;
  result.tolerance = tolerance;
  Rng rng = make_rng(seed, "gradcheck/" + std::string(to_string(kind)));
  while (result.trials < trials) {
    std::optional<Instance> inst = draw_instance(kind, rng);
    if (!inst) {
      ++result.excluded;
      if (result.excluded > 100 * trials) {
        throw InvalidArgument("too many kink-adjacent instances");
      }
      continue;
    }
    const LossResult analytic = inst->eval(inst->params);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> p) { return inst->eval(p).loss; },
        inst->params, h);
    result.max_rel_error =
        std::max(result.max_rel_error, relative_error(analytic.grad, numeric));
    ++result.trials;
  }
  return result;
}

}  // namespace halo
