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

#ifndef HALO_KLREF_HPP_
#define HALO_KLREF_HPP_

#include <span>

#include "halo/losses.hpp"
#include "halo/policy.hpp"
#include "halo/rng.hpp"

namespace halo {

// Which mismatched (x_i, y_j), j = (i + 1) mod m, pairs enter the estimate.
//   partial:    1 <= i < m, i.e. m - 1 pairs; the sum is divided by m.
//   full_cycle: 0 <= i < m, m pairs; the sum is divided by m.
enum class Z0Pairing { partial, full_cycle };

struct Z0Estimate {
  double value = 0.0;  // nats, >= 0
  int m = 0;
};

// Shared KTO reference point for one microbatch:
// max(0, (1/m) sum_i log pi(y_j|x_i) / pi_ref(y_j|x_i)).
// Labels are ignored. Throws BatchTooSmall for m < 2.
Z0Estimate estimate_z0(const Policy& policy, const Policy& ref,
                       std::span<const FeedbackExample> batch,
                       Z0Pairing pairing = Z0Pairing::partial);

// The same average without the clamp.
double estimate_z0_unclamped(const Policy& policy, const Policy& ref,
                             std::span<const FeedbackExample> batch,
                             Z0Pairing pairing = Z0Pairing::partial);

struct BiasVarianceReport {
  double mean_clamped = 0.0;
  double mean_unclamped = 0.0;
  double var_clamped = 0.0;
  double var_unclamped = 0.0;
  // Exact KL(pi || pi_ref), averaged over the contexts of the data.
  double exact_kl_mean = 0.0;
  int m = 0;
  int trials = 0;
  // The unclamped estimate was seen both below and above zero.
  bool unclamped_both_signs = false;

  bool clamped_bias_nonnegative() const {
    return mean_clamped >= mean_unclamped;
  }
  bool clamped_variance_not_larger() const {
    return var_clamped <= var_unclamped;
  }
};

// Draws `trials` microbatches of size m with replacement from `data` and
// compares the clamped and unclamped estimators. Sample variances use the
// trials - 1 denominator. Requires trials >= 1000 and nonempty data.
BiasVarianceReport bias_variance_report(const Policy& policy, const Policy& ref,
                                        std::span<const FeedbackExample> data,
                                        int m, int trials, Rng& rng,
                                        Z0Pairing pairing = Z0Pairing::partial);

}  // namespace halo

#endif  // HALO_KLREF_HPP_
