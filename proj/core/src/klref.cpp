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

#include <tuple>
#include <utility>
#include <vector>

#include "halo/error.hpp"

namespace halo {

double estimate_z0_unclamped(const Policy& policy, const Policy& ref,
                             std::span<const FeedbackExample> batch,
                             Z0Pairing pairing) {
  const std::size_t m = batch.size();
  if (m < 2) throw BatchTooSmall("KTO microbatch size must be >= 2");
  double sum = 0.0;
  const std::size_t first = pairing == Z0Pairing::partial ? 1 : 0;
  for (std::size_t i = first; i < m; ++i) {
    const FeedbackExample& ctx = batch[i];
    const FeedbackExample& out = batch[(i + 1) % m];
    sum += policy.log_prob(ctx.x, out.y) - ref.log_prob(ctx.x, out.y);
  }
  return sum / static_cast<double>(m);
}

Z0Estimate estimate_z0(const Policy& policy, const Policy& ref,
                       std::span<const FeedbackExample> batch,
                       Z0Pairing pairing) {
  const double raw = estimate_z0_unclamped(policy, ref, batch, pairing);
  return {raw > 0.0 ? raw : 0.0, static_cast<int>(batch.size())};
}

BiasVarianceReport bias_variance_report(const Policy& policy, const Policy& ref,
                                        std::span<const FeedbackExample> data,
                                        int m, int trials, Rng& rng,
                                        Z0Pairing pairing) {
  if (m < 2) throw BatchTooSmall("KTO microbatch size must be >= 2");
  if (trials < 1000) throw InvalidArgument("need at least 1000 trials");
  if (data.empty()) throw IncompatibleData("no data to resample batches from");

  std::vector<double> clamped(static_cast<std::size_t>(trials));
  std::vector<double> raw(static_cast<std::size_t>(trials));
  std::vector<FeedbackExample> batch(static_cast<std::size_t>(m));
  bool seen_neg = false;
  bool seen_pos = false;
  for (int t = 0; t < trials; ++t) {
    for (auto& ex : batch) ex = data[uniform_index(rng, data.size())];
    const double u = estimate_z0_unclamped(policy, ref, batch, pairing);
    raw[static_cast<std::size_t>(t)] = u;
    clamped[static_cast<std::size_t>(t)] = u > 0.0 ? u : 0.0;
    seen_neg = seen_neg || u < 0.0;
    seen_pos = seen_pos || u > 0.0;
  }

  auto mean_var = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };

  BiasVarianceReport report;
  std::tie(report.mean_clamped, report.var_clamped) = mean_var(clamped);
  std::tie(report.mean_unclamped, report.var_unclamped) = mean_var(raw);
  std::vector<double> kl_by_context(static_cast<std::size_t>(policy.contexts()),
                                    -1.0);
  double kl = 0.0;
  for (const FeedbackExample& ex : data) {
    double& cached = kl_by_context[static_cast<std::size_t>(ex.x)];
    if (cached < 0.0) cached = exact_kl(policy, ref, ex.x);
    kl += cached;
  }
  report.exact_kl_mean = kl / static_cast<double>(data.size());
  report.m = m;
  report.trials = trials;
  report.unclamped_both_signs = seen_neg && seen_pos;
  return report;
}

}  // namespace halo
