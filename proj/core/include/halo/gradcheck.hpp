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

#ifndef HALO_GRADCHECK_HPP_
#define HALO_GRADCHECK_HPP_

#include <cstdint>
#include <span>

#include "halo/losses.hpp"

namespace halo {

struct GradcheckResult {
  LossKind kind = LossKind::dpo;
  int trials = 0;
  // Random instances discarded for landing within kKinkMargin of a hinge or
  // clip kink.
  int excluded = 0;
  double max_rel_error = 0.0;
  double tolerance = 1e-5;

  bool passed() const { return max_rel_error <= tolerance; }
};

inline constexpr double kKinkMargin = 1e-6;

// ||a - n|| / max(||a||, ||n||); absolute when both norms are below 1e-12.
double relative_error(std::span<const double> analytic,
                      std::span<const double> numeric);

// Compares the analytic gradient of `kind` with central differences on
// `trials` random small instances (X <= 3, V <= 3, L <= 2, tabular and
// Markov backends). Detached quantities (z0, entropy, value table) are held
// fixed, as in training.
GradcheckResult run_gradcheck(LossKind kind, int trials, std::uint64_t seed,
                              double h = 1e-5, double tolerance = 1e-5);

}  // namespace halo

#endif  // HALO_GRADCHECK_HPP_
