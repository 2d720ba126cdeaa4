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

#include "halo/klref.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "halo/error.hpp"
#include "halo/rng.hpp"

namespace halo {
namespace {

TabularPolicy random_tabular(int contexts, const OutputSpace& space,
                             std::uint64_t seed, double scale = 1.0) {
  Rng rng = make_rng(seed, "test/klref");
  TabularPolicy p(contexts, space);
  for (double& v : p.params()) v = scale * gaussian(rng);
  return p;
}

// Independent recomputation of the mismatched-pair mean.
double mismatched_mean(const Policy& p, const Policy& ref,
                       const std::vector<FeedbackExample>& b, bool full) {
  const std::size_t m = b.size();
  double sum = 0.0;
  const std::size_t first = full ? 0 : 1;
  for (std::size_t i = first; i < m; ++i) {
    const auto& y = b[(i + 1) % m].y;
    sum += p.log_prob(b[i].x, y) - ref.log_prob(b[i].x, y);
  }
  return sum / static_cast<double>(m);
}

TEST(EstimateZ0Test, ZeroAtReference) {
  const OutputSpace space(3, 2);
  const Policy ref = random_tabular(2, space, 1);
  const std::vector<FeedbackExample> b{{0, {1}, Label::desirable},
                                       {1, {2, 0}, Label::undesirable},
                                       {0, {0, 0}, Label::desirable}};
  EXPECT_EQ(estimate_z0(ref, ref, b).value, 0.0);
  EXPECT_EQ(estimate_z0_unclamped(ref, ref, b), 0.0);
}

TEST(EstimateZ0Test, ClampAndPairing) {
  const OutputSpace space(2, 1);
  const Policy ref = TabularPolicy(1, space);
  // Log ratios: output 0 -> log(0.9/0.5), output 1 -> log(0.1/0.5).
  const Policy p = TabularPolicy::from_probabilities(space, {{0.9, 0.1}});
  const std::vector<FeedbackExample> ones{{0, {1}, Label::desirable},
                                          {0, {1}, Label::desirable}};
  EXPECT_NEAR(estimate_z0_unclamped(p, ref, ones), std::log(0.2) / 2.0, 1e-15);
  EXPECT_EQ(estimate_z0(p, ref, ones).value, 0.0);
  const std::vector<FeedbackExample> zeros{{0, {0}, Label::desirable},
                                           {0, {0}, Label::undesirable},
                                           {0, {0}, Label::desirable}};
  // Partial pairing: m - 1 = 2 terms over m = 3.
  EXPECT_NEAR(estimate_z0(p, ref, zeros).value, 2.0 * std::log(1.8) / 3.0,
              1e-15);
  EXPECT_NEAR(estimate_z0(p, ref, zeros, Z0Pairing::full_cycle).value,
              std::log(1.8), 1e-15);
  EXPECT_EQ(estimate_z0(p, ref, zeros).m, 3);
}

TEST(EstimateZ0Test, MatchesIndependentSum) {
  const OutputSpace space(3, 2);
  const Policy ref = random_tabular(2, space, 2);
  const Policy p = random_tabular(2, space, 3);
  Rng rng = make_rng(4, "batches");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<FeedbackExample> b;
    const int m = 2 + static_cast<int>(uniform_index(rng, 6));
    for (int i = 0; i < m; ++i) {
      b.push_back({static_cast<Context>(uniform_index(rng, 2)),
                   space.at(uniform_index(rng, space.size())),
                   Label::desirable});
    }
    for (bool full : {false, true}) {
      const Z0Pairing pairing = full ? Z0Pairing::full_cycle : Z0Pairing::partial;
      const double u = estimate_z0_unclamped(p, ref, b, pairing);
      EXPECT_NEAR(u, mismatched_mean(p, ref, b, full), 1e-12);
      const double c = estimate_z0(p, ref, b, pairing).value;
      EXPECT_GE(c, 0.0);
      EXPECT_EQ(c, std::max(0.0, u));
    }
  }
}

TEST(EstimateZ0Test, RejectsTinyBatches) {
  const Policy ref = TabularPolicy(1, OutputSpace(2, 1));
  const std::vector<FeedbackExample> one{{0, {0}, Label::desirable}};
  EXPECT_THROW(estimate_z0(ref, ref, one), BatchTooSmall);
  EXPECT_THROW(estimate_z0_unclamped(ref, ref, one), BatchTooSmall);
}

TEST(BiasVarianceTest, ZeroAtReference) {
  const OutputSpace space(3, 2);
  const Policy ref = random_tabular(3, space, 5);
  std::vector<FeedbackExample> data;
  for (int i = 0; i < 30; ++i) {
    data.push_back({i % 3, space.at(static_cast<std::size_t>(i) % space.size()),
                    Label::desirable});
  }
  Rng rng = make_rng(6, "bv");
  const auto r = bias_variance_report(ref, ref, data, 4, 1000, rng);
  EXPECT_EQ(r.mean_clamped, 0.0);
  EXPECT_EQ(r.mean_unclamped, 0.0);
  EXPECT_EQ(r.var_clamped, 0.0);
  EXPECT_EQ(r.var_unclamped, 0.0);
  EXPECT_EQ(r.exact_kl_mean, 0.0);
  EXPECT_FALSE(r.unclamped_both_signs);
}

TEST(BiasVarianceTest, ClampNeverBindsWhenRatiosPositive) {
  const OutputSpace space(2, 1);
  const Policy ref = TabularPolicy::from_probabilities(space, {{0.5, 0.5}});
  const Policy p = TabularPolicy::from_probabilities(space, {{0.9, 0.1}});
  const std::vector<FeedbackExample> data{{0, {0}, Label::desirable}};
  Rng rng = make_rng(7, "bv");
  const auto r = bias_variance_report(p, ref, data, 4, 1000, rng);
  EXPECT_EQ(r.mean_clamped, r.mean_unclamped);
  EXPECT_EQ(r.var_clamped, r.var_unclamped);
}

TEST(BiasVarianceTest, InequalitiesOnRandomInstances) {
  const OutputSpace space(3, 2);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Policy ref = random_tabular(3, space, 10 + s);
    TabularPolicy p = ref.tabular();
    Rng noise = make_rng(s, "noise");
    for (double& v : p.params()) v += 0.3 * gaussian(noise);
    std::vector<FeedbackExample> data;
    Rng draw = make_rng(s, "draw");
    for (int i = 0; i < 200; ++i) {
      const auto x = static_cast<Context>(uniform_index(draw, 3));
      data.push_back({x, p.sample(x, draw), Label::desirable});
    }
    Rng rng = make_rng(s, "bv");
    const auto r = bias_variance_report(p, ref, data, 4, 10'000, rng);
    EXPECT_TRUE(r.clamped_bias_nonnegative());
    EXPECT_TRUE(r.clamped_variance_not_larger());
    EXPECT_GT(r.exact_kl_mean, 0.0);
  }
}

TEST(BiasVarianceTest, Preconditions) {
  const Policy ref = TabularPolicy(1, OutputSpace(2, 1));
  const std::vector<FeedbackExample> data{{0, {0}, Label::desirable}};
  Rng rng = make_rng(0, "bv");
  EXPECT_THROW(bias_variance_report(ref, ref, data, 4, 999, rng),
               InvalidArgument);
  EXPECT_THROW(bias_variance_report(ref, ref, {}, 4, 1000, rng),
               IncompatibleData);
  EXPECT_THROW(bias_variance_report(ref, ref, data, 1, 1000, rng),
               BatchTooSmall);
}

}  // namespace
}  // namespace halo
