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

#include "halo/policy.hpp"

#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "halo/error.hpp"
#include "halo/rng.hpp"

namespace halo {
namespace {

TabularPolicy random_tabular(int contexts, const OutputSpace& space,
                             std::uint64_t seed) {
  Rng rng = make_rng(seed, "test/policy");
  TabularPolicy p(contexts, space);
  for (double& v : p.params()) v = gaussian(rng);
  return p;
}

MarkovPolicy random_markov(int contexts, const OutputSpace& space, int order,
                           std::uint64_t seed) {
  Rng rng = make_rng(seed, "test/markov");
  MarkovPolicy p(contexts, space, order);
  for (double& v : p.params()) v = gaussian(rng);
  return p;
}

TEST(OutputSpaceTest, Counts) {
  EXPECT_EQ(enumerate_outputs(2, 1), (std::vector<Output>{{0}, {1}}));
  EXPECT_EQ(enumerate_outputs(2, 2).size(), 6u);
  // 3 + 9 + 27, against explicit generation below.
  EXPECT_EQ(enumerate_outputs(3, 3).size(), 39u);
}

TEST(OutputSpaceTest, LexicographicAndIndexRoundTrip) {
  const OutputSpace space(3, 3);
  const auto all = space.enumerate();
  std::vector<Output> brute;
  for (int len = 1; len <= 3; ++len) {
    Output y(static_cast<std::size_t>(len), 0);
    while (true) {
      brute.push_back(y);
      int t = len - 1;
      while (t >= 0 && ++y[static_cast<std::size_t>(t)] == 3) {
        y[static_cast<std::size_t>(t--)] = 0;
      }
      if (t < 0) break;
    }
  }
  std::sort(brute.begin(), brute.end());
  EXPECT_EQ(all, brute);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(space.index_of(all[i]), i);
    EXPECT_EQ(space.at(i), all[i]);
  }
}

TEST(OutputSpaceTest, RejectsBadShapes) {
  EXPECT_THROW(OutputSpace(1, 2), InvalidArgument);
  EXPECT_THROW(OutputSpace(2, 0), InvalidArgument);
  EXPECT_THROW(OutputSpace(10, 7), EnumerationTooLarge);
  const OutputSpace space(2, 2);
  EXPECT_FALSE(space.contains(Output{}));
  EXPECT_FALSE(space.contains(Output{0, 2}));
  EXPECT_FALSE(space.contains(Output{0, 0, 0}));
  EXPECT_THROW(space.index_of(Output{2}), InvalidArgument);
}

TEST(TabularPolicyTest, UniformLogProb) {
  const TabularPolicy p = TabularPolicy::uniform(1, 2, 1);
  const TabularPolicy q(1, OutputSpace(2, 2));  // 6 outputs
  EXPECT_NEAR(TabularPolicy(1, OutputSpace(4, 1)).log_prob(0, Output{2}),
              -1.3862943611198906, 1e-12);
  EXPECT_NEAR(p.log_prob(0, Output{1}), std::log(0.5), 1e-15);
  EXPECT_NEAR(q.log_prob(0, Output{1, 0}), -std::log(6.0), 1e-15);
}

TEST(TabularPolicyTest, OneHotLogProb) {
  const TabularPolicy p(1, OutputSpace(4, 1), {20.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(p.log_prob(0, Output{0}), -std::log1p(3.0 * std::exp(-20.0)),
              1e-15);
}

TEST(TabularPolicyTest, StableAtHugeLogits) {
  const TabularPolicy p(1, OutputSpace(2, 1), {700.0, -700.0});
  EXPECT_NEAR(p.log_prob(0, Output{0}), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(p.log_prob(0, Output{1})));
  EXPECT_NEAR(p.log_prob(0, Output{1}), -1400.0, 1e-9);
}

TEST(TabularPolicyTest, DistributionMatchesLogProb) {
  const OutputSpace space(3, 2);
  const TabularPolicy p = random_tabular(3, space, 1);
  for (Context x = 0; x < 3; ++x) {
    const auto d = p.distribution(x);
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      total += d[i];
      EXPECT_NEAR(std::exp(p.log_prob(x, space.at(i))), d[i], 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(TabularPolicyTest, SampleDeterministicAndCalibrated) {
  const OutputSpace space(2, 2);
  const TabularPolicy p = TabularPolicy::uniform(1, 2, 2);
  Rng a = make_rng(7, "sample");
  Rng b = make_rng(7, "sample");
  for (int i = 0; i < 50; ++i) EXPECT_EQ(p.sample(0, a), p.sample(0, b));

  const TabularPolicy q = random_tabular(1, space, 3);
  const auto d = q.distribution(0);
  constexpr int kDraws = 100'000;
  std::vector<int> counts(space.size(), 0);
  Rng rng = make_rng(11, "freq");
  for (int i = 0; i < kDraws; ++i) ++counts[space.index_of(q.sample(0, rng))];
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double sigma = std::sqrt(d[i] * (1.0 - d[i]) / kDraws);
    EXPECT_NEAR(counts[i] / static_cast<double>(kDraws), d[i],
                3.0 * sigma + 1e-12);
  }
}

TEST(TabularPolicyTest, FromProbabilities) {
  const OutputSpace space(2, 1);
  const auto p = TabularPolicy::from_probabilities(space, {{0.1, 0.9}});
  EXPECT_NEAR(p.distribution(0)[0], 0.1, 1e-15);
  EXPECT_THROW(TabularPolicy::from_probabilities(space, {{0.0, 1.0}}),
               InvalidArgument);
  EXPECT_THROW(TabularPolicy::from_probabilities(space, {{0.5, 0.6}}),
               InvalidArgument);
}

TEST(TabularPolicyTest, GradLogProbIsSoftmaxJacobianRow) {
  const OutputSpace space(2, 2);
  const TabularPolicy p = random_tabular(2, space, 5);
  std::vector<double> grad(p.params().size(), 0.0);
  p.add_grad_log_prob(1, Output{1, 0}, 2.0, grad);
  const auto d = p.distribution(1);
  const std::size_t k = space.index_of(Output{1, 0});
  for (std::size_t i = 0; i < space.size(); ++i) {
    EXPECT_EQ(grad[i], 0.0);
    EXPECT_NEAR(grad[space.size() + i], 2.0 * ((i == k ? 1.0 : 0.0) - d[i]),
                1e-15);
  }
}

TEST(MarkovPolicyTest, UniformPerTokenLogProb) {
  // k = 0 over {0, 1, STOP}; STOP is masked at t = 0, so the first token is
  // uniform over two choices, then 1/3 for the next token and for STOP.
  const MarkovPolicy p(1, OutputSpace(2, 3), 0);
  EXPECT_NEAR(p.log_prob(0, Output{0, 1}),
              std::log(0.5) + 2.0 * std::log(1.0 / 3.0), 1e-12);
  // At t = L there is no STOP factor.
  const MarkovPolicy q(1, OutputSpace(2, 2), 0);
  EXPECT_NEAR(q.log_prob(0, Output{0, 1}), std::log(0.5) + std::log(1.0 / 3.0),
              1e-12);
}

TEST(MarkovPolicyTest, StopUnreachableAtStart) {
  const MarkovPolicy p = random_markov(1, OutputSpace(3, 2), 1, 4);
  EXPECT_EQ(p.log_prob_action(0, 0, p.stop_action(), 0),
            -std::numeric_limits<double>::infinity());
}

TEST(MarkovPolicyTest, DistributionSumsToOne) {
  for (int order = 0; order <= 2; ++order) {
    const OutputSpace space(3, 3);
    const MarkovPolicy p = random_markov(2, space, order, 9 + order);
    for (Context x = 0; x < 2; ++x) {
      const auto d = p.distribution(x);
      double total = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        total += d[i];
        EXPECT_NEAR(std::exp(p.log_prob(x, space.at(i))), d[i], 1e-12);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(MarkovPolicyTest, RejectsBadOrder) {
  EXPECT_THROW(MarkovPolicy(1, OutputSpace(2, 2), 2), InvalidArgument);
  EXPECT_THROW(MarkovPolicy(1, OutputSpace(2, 2), -1), InvalidArgument);
}

TEST(MarkovPolicyTest, TrajectoryIncludesStopBeforeMaxLen) {
  const MarkovPolicy p(1, OutputSpace(2, 3), 1);
  EXPECT_EQ(markov_trajectory(p, Output{0, 1}).size(), 3u);
  EXPECT_EQ(markov_trajectory(p, Output{0, 1}).back().action, p.stop_action());
  EXPECT_EQ(markov_trajectory(p, Output{0, 1, 1}).size(), 3u);
}

TEST(ConversionTest, TabularToMarkovRoundTrip) {
  const OutputSpace space(3, 2);
  const TabularPolicy t = random_tabular(2, space, 21);
  const MarkovPolicy m = to_markov(t);
  EXPECT_EQ(m.order(), 1);
  const TabularPolicy back = to_tabular(m);
  for (Context x = 0; x < 2; ++x) {
    const auto a = t.distribution(x);
    const auto b = m.distribution(x);
    const auto c = back.distribution(x);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-10);
      EXPECT_NEAR(a[i], c[i], 1e-10);
    }
  }
}

TEST(KlTest, Examples) {
  const OutputSpace space(2, 1);
  const Policy p = TabularPolicy::from_probabilities(space, {{0.5, 0.5}});
  const Policy q = TabularPolicy::from_probabilities(space, {{0.9, 0.1}});
  EXPECT_EQ(exact_kl(p, p, 0), 0.0);
  EXPECT_NEAR(exact_kl(p, q, 0),
              0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-12);
  EXPECT_NEAR(exact_kl(p, q, 0), 0.510826, 1e-6);
  const Policy u6 = TabularPolicy(1, OutputSpace(2, 2));
  EXPECT_EQ(exact_kl(u6, TabularPolicy(1, OutputSpace(2, 2)), 0), 0.0);
}

TEST(KlTest, NonNegativeOnRandomPairsAcrossBackends) {
  const OutputSpace space(2, 3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Policy a = random_markov(1, space, 1, s);
    const Policy b = random_tabular(1, space, s + 100);
    EXPECT_GE(exact_kl(a, b, 0), 0.0);
    EXPECT_GE(exact_kl(b, a, 0), 0.0);
    EXPECT_EQ(exact_kl(a, a, 0), 0.0);
  }
}

TEST(ImpliedRewardTest, Examples) {
  const OutputSpace space(2, 1);
  const Policy ref = TabularPolicy(1, space);
  EXPECT_EQ(implied_reward(ref, ref, 0, Output{1}, 0.1), 0.0);
  // Log ratio 2 at scale 0.1.
  const Policy p = TabularPolicy(1, space, {2.0 + std::log(0.5), 0.0});
  const double ratio = p.log_prob(0, Output{0}) - ref.log_prob(0, Output{0});
  EXPECT_NEAR(implied_reward(p, ref, 0, Output{0}, 0.1), 0.1 * ratio, 1e-15);
  EXPECT_THROW(implied_reward(p, ref, 0, Output{0}, 0.0), InvalidArgument);
}

TEST(ImpliedRewardTest, ScalesTheLogRatio) {
  const OutputSpace space(3, 1);
  const Policy ref =
      TabularPolicy::from_probabilities(space, {{0.05, 0.45, 0.5}});
  // Log ratio of output 0 is exactly 2.
  const double p0 = 0.05 * std::exp(2.0);
  const double rest = (1.0 - p0) / 0.95;
  const Policy pol =
      TabularPolicy::from_probabilities(space, {{p0, 0.45 * rest, 0.5 * rest}});
  EXPECT_NEAR(implied_reward(pol, ref, 0, Output{0}, 0.1), 0.2, 1e-12);
}

TEST(PolicyTest, VariantForwardsAndComparesStructure) {
  const OutputSpace space(2, 2);
  const Policy t = TabularPolicy(2, space);
  const Policy m = MarkovPolicy(2, space, 1);
  EXPECT_TRUE(t.is_tabular());
  EXPECT_TRUE(m.is_markov());
  EXPECT_FALSE(t.same_structure(m));
  EXPECT_TRUE(m.same_structure(MarkovPolicy(2, space, 1)));
  EXPECT_FALSE(m.same_structure(MarkovPolicy(2, space, 0)));
  EXPECT_EQ(t.num_params(), 12u);
}

TEST(RewardTableTest, AccessAndValidation) {
  const OutputSpace space(2, 1);
  RewardTable r(2, space, {1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(r(1, Output{0}), 3.0);
  r.set(1, 0, -1.0);
  EXPECT_EQ(r.at(1, 0), -1.0);
  EXPECT_THROW(RewardTable(1, space, {1.0, std::nan("")}), InvalidArgument);
  EXPECT_THROW(RewardTable(1, space, {1.0}), InvalidArgument);
}

}  // namespace
}  // namespace halo
