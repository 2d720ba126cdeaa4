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

#ifndef HALO_NUMERIC_HPP_
#define HALO_NUMERIC_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace halo {

// Logistic function, branch form so that neither exp() overflows.
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(sigmoid(t)) without cancellation for large |t|.
inline double log_sigmoid(double t) {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

// sigmoid(t) * (1 - sigmoid(t)), computed from the symmetric form.
inline double sigmoid_slope(double t) {
  const double s = sigmoid(std::fabs(t));
  return s * (1.0 - s);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// log softmax(xs)[k]. Written as (x_k - m) - log1p(sum over the other
// entries) so that log-probabilities near 0 keep full relative precision.
inline double log_softmax_at(std::span<const double> xs, std::size_t k) {
  const auto top = std::max_element(xs.begin(), xs.end());
  const double m = *top;
  if (!std::isfinite(m)) return xs[k] - m;
  double rest = 0.0;
  for (auto it = xs.begin(); it != xs.end(); ++it) {
    if (it != top) rest += std::exp(*it - m);
  }
  return (xs[k] - m) - std::log1p(rest);
}

// All entries of log softmax(xs), same form as log_softmax_at.
inline std::vector<double> log_softmax(std::span<const double> xs) {
  std::vector<double> out(xs.size());
  if (xs.empty()) return out;
  const auto top = std::max_element(xs.begin(), xs.end());
  const double m = *top;
  double rest = 0.0;
  for (auto it = xs.begin(); it != xs.end(); ++it) {
    if (it != top) rest += std::exp(*it - m);
  }
  const double tail = std::isfinite(m) ? std::log1p(rest) : 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - m) - tail;
  return out;
}

// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& p : out) p /= z;
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace halo

#endif  // HALO_NUMERIC_HPP_
