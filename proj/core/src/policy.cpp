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
#include <limits>
#include <string>
#include <utility>

#include "halo/error.hpp"
#include "halo/numeric.hpp"

namespace halo {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t checked_pow_sum(int vocab, int max_len, std::size_t cap) {
  std::size_t total = 0;
  std::size_t level = 1;
  for (int l = 1; l <= max_len; ++l) {
    if (level > cap / static_cast<std::size_t>(vocab) + 1) {
      throw EnumerationTooLarge("output space exceeds enumeration cap of " +
                                std::to_string(cap));
    }
    level *= static_cast<std::size_t>(vocab);
    total += level;
    if (total > cap) {
      throw EnumerationTooLarge("output space V=" + std::to_string(vocab) +
                                " L=" + std::to_string(max_len) +
                                " exceeds enumeration cap of " +
                                std::to_string(cap));
    }
  }
  return total;
}

// Index of the sampled entry of a categorical distribution.
std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left a sliver above the last cumulative sum.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

double entropy_of(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// OutputSpace

OutputSpace::OutputSpace(int vocab, int max_len, std::size_t cap)
    : vocab_(vocab), max_len_(max_len) {
  if (vocab < 2) throw InvalidArgument("vocabulary size must be >= 2");
  if (max_len < 1) throw InvalidArgument("max length must be >= 1");
  size_ = checked_pow_sum(vocab, max_len, cap);
  subtree_.assign(static_cast<std::size_t>(max_len), 0);
  std::size_t acc = 0;
  std::size_t level = 1;
  for (int t = max_len - 1; t >= 0; --t) {
    acc += level;
    subtree_[static_cast<std::size_t>(t)] = acc;
    level *= static_cast<std::size_t>(vocab);
  }
}

bool OutputSpace::contains(std::span<const Token> y) const {
  if (y.empty() || y.size() > static_cast<std::size_t>(max_len_)) return false;
  for (Token tok : y) {
    if (tok < 0 || tok >= vocab_) return false;
  }
  return true;
}

std::size_t OutputSpace::index_of(std::span<const Token> y) const {
  if (!contains(y)) {
    throw InvalidArgument("output is not in the enumerated space");
  }
  std::size_t idx = y.size() - 1;
  for (std::size_t t = 0; t < y.size(); ++t) {
    idx += static_cast<std::size_t>(y[t]) * subtree_[t];
  }
  return idx;
}

Output OutputSpace::at(std::size_t index) const {
  if (index >= size_) throw InvalidArgument("output index out of range");
  Output y;
  std::size_t rest = index;
  for (std::size_t t = 0;; ++t) {
    const std::size_t tok = rest / subtree_[t];
    rest -= tok * subtree_[t];
    y.push_back(static_cast<Token>(tok));
    if (rest == 0) break;
    --rest;
  }
  return y;
}

std::vector<Output> OutputSpace::enumerate() const {
  std::vector<Output> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
  return out;
}

std::vector<Output> enumerate_outputs(int vocab, int max_len) {
  return OutputSpace(vocab, max_len).enumerate();
}

// ---------------------------------------------------------------------------
// TabularPolicy

TabularPolicy::TabularPolicy(int contexts, OutputSpace space)
    : TabularPolicy(contexts, space,
                    std::vector<double>(static_cast<std::size_t>(
                                            contexts > 0 ? contexts : 0) *
                                            space.size(),
                                        0.0)) {}

TabularPolicy::TabularPolicy(int contexts, OutputSpace space,
                             std::vector<double> logits)
    : contexts_(contexts), space_(space), logits_(std::move(logits)) {
  if (contexts < 1) throw InvalidArgument("need at least one context");
  if (logits_.size() != static_cast<std::size_t>(contexts) * space_.size()) {
    throw InvalidArgument("tabular logits have the wrong size");
  }
  if (!all_finite(logits_)) throw InvalidArgument("logits must be finite");
}

TabularPolicy TabularPolicy::uniform(int contexts, int vocab, int max_len) {
  return TabularPolicy(contexts, OutputSpace(vocab, max_len));
}

TabularPolicy TabularPolicy::from_probabilities(
    OutputSpace space, const std::vector<std::vector<double>>& probs) {
  std::vector<double> logits;
  logits.reserve(probs.size() * space.size());
  for (const auto& row : probs) {
    if (row.size() != space.size()) {
      throw InvalidArgument("probability row has the wrong size");
    }
    double total = 0.0;
    for (double p : row) {
      if (!(p > 0.0)) throw InvalidArgument("probabilities must be positive");
      logits.push_back(std::log(p));
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) {
      throw InvalidArgument("probability row must sum to 1");
    }
  }
  return TabularPolicy(static_cast<int>(probs.size()), space,
                       std::move(logits));
}

void TabularPolicy::check_context(Context x) const {
  if (x < 0 || x >= contexts_) throw InvalidArgument("context out of range");
}

std::size_t TabularPolicy::row_offset(Context x) const {
  return static_cast<std::size_t>(x) * space_.size();
}

std::span<const double> TabularPolicy::row(Context x) const {
  check_context(x);
  return std::span<const double>(logits_).subspan(row_offset(x),
                                                  space_.size());
}

double TabularPolicy::log_normalizer(Context x) const {
  return log_sum_exp(row(x));
}

double TabularPolicy::log_prob_index(Context x, std::size_t index) const {
  return log_softmax_at(row(x), index);
}

double TabularPolicy::log_prob(Context x, std::span<const Token> y) const {
  return log_prob_index(x, space_.index_of(y));
}

std::vector<double> TabularPolicy::distribution(Context x) const {
  return softmax(row(x));
}

double TabularPolicy::entropy(Context x) const {
  return entropy_of(distribution(x));
}

Output TabularPolicy::sample(Context x, Rng& rng) const {
  const auto probs = distribution(x);
  return space_.at(sample_index(probs, rng));
}

void TabularPolicy::add_grad_log_prob(Context x, std::span<const Token> y,
                                      double scale,
                                      std::span<double> grad) const {
  const std::size_t target = space_.index_of(y);
  const auto probs = distribution(x);
  const std::size_t off = row_offset(x);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    grad[off + j] -= scale * probs[j];
  }
  grad[off + target] += scale;
}

// ---------------------------------------------------------------------------
// MarkovPolicy

namespace {

int count_states(int vocab, int order) {
  long total = 0;
  long level = 1;
  for (int j = 0; j <= order; ++j) {
    total += level;
    level *= vocab;
    if (total > static_cast<long>(kMaxEnumeratedOutputs)) {
      throw EnumerationTooLarge("Markov state space exceeds cap");
    }
  }
  return static_cast<int>(total);
}

}  // namespace

MarkovPolicy::MarkovPolicy(int contexts, OutputSpace space, int order)
    : MarkovPolicy(contexts, space, order, {}) {}

MarkovPolicy::MarkovPolicy(int contexts, OutputSpace space, int order,
                           std::vector<double> logits)
    : contexts_(contexts), space_(space), order_(order) {
  if (contexts < 1) throw InvalidArgument("need at least one context");
  if (order < 0 || order > space.max_len() - 1) {
    throw InvalidArgument("Markov order must lie in [0, L-1]");
  }
  num_states_ = count_states(space.vocab(), order);
  const std::size_t expected = static_cast<std::size_t>(contexts) *
                               static_cast<std::size_t>(num_states_) *
                               static_cast<std::size_t>(num_actions());
  if (logits.empty()) logits.assign(expected, 0.0);
  if (logits.size() != expected) {
    throw InvalidArgument("Markov logits have the wrong size");
  }
  if (!all_finite(logits)) throw InvalidArgument("logits must be finite");
  logits_ = std::move(logits);
}

void MarkovPolicy::check_context(Context x) const {
  if (x < 0 || x >= contexts_) throw InvalidArgument("context out of range");
}

std::size_t MarkovPolicy::offset(Context x, int state) const {
  return (static_cast<std::size_t>(x) * static_cast<std::size_t>(num_states_) +
          static_cast<std::size_t>(state)) *
         static_cast<std::size_t>(num_actions());
}

int MarkovPolicy::state_index(std::span<const Token> prefix) const {
  const std::size_t len =
      std::min(prefix.size(), static_cast<std::size_t>(order_));
  int base = 0;
  int level = 1;
  for (std::size_t j = 0; j < len; ++j) {
    base += level;
    level *= space_.vocab();
  }
  int code = 0;
  for (std::size_t j = prefix.size() - len; j < prefix.size(); ++j) {
    code = code * space_.vocab() + prefix[j];
  }
  return base + code;
}

double MarkovPolicy::log_prob_action(Context x, int state, int action,
                                     int t) const {
  check_context(x);
  const int stop = stop_action();
  if (t >= space_.max_len()) return action == stop ? 0.0 : kNegInf;
  const std::span<const double> row =
      std::span<const double>(logits_).subspan(offset(x, state),
                                               static_cast<std::size_t>(
                                                   num_actions()));
  if (t == 0) {
    if (action == stop) return kNegInf;
    return log_softmax_at(row.first(static_cast<std::size_t>(stop)),
                          static_cast<std::size_t>(action));
  }
  return log_softmax_at(row, static_cast<std::size_t>(action));
}

std::vector<MarkovStep> markov_trajectory(const MarkovPolicy& policy,
                                          std::span<const Token> y) {
  if (!policy.space().contains(y)) {
    throw InvalidArgument("output is not in the policy's space");
  }
  std::vector<MarkovStep> steps;
  steps.reserve(y.size() + 1);
  for (std::size_t t = 0; t < y.size(); ++t) {
    steps.push_back({policy.state_index(y.first(t)), y[t], static_cast<int>(t)});
  }
  if (y.size() < static_cast<std::size_t>(policy.space().max_len())) {
    steps.push_back({policy.state_index(y), policy.stop_action(),
                     static_cast<int>(y.size())});
  }
  return steps;
}

double MarkovPolicy::log_prob(Context x, std::span<const Token> y) const {
  double lp = 0.0;
  for (const MarkovStep& s : markov_trajectory(*this, y)) {
    lp += log_prob_action(x, s.state, s.action, s.t);
  }
  return lp;
}

std::vector<double> MarkovPolicy::distribution(Context x) const {
  std::vector<double> out(space_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_prob(x, space_.at(i)));
  }
  return out;
}

double MarkovPolicy::entropy(Context x) const {
  return entropy_of(distribution(x));
}

Output MarkovPolicy::sample(Context x, Rng& rng) const {
  check_context(x);
  Output y;
  const int stop = stop_action();
  std::vector<double> probs(static_cast<std::size_t>(num_actions()));
  for (int t = 0; t < space_.max_len(); ++t) {
    const int state = state_index(y);
    for (int a = 0; a < num_actions(); ++a) {
      probs[static_cast<std::size_t>(a)] =
          std::exp(log_prob_action(x, state, a, t));
    }
    const int action = static_cast<int>(sample_index(probs, rng));
    if (action == stop) break;
    y.push_back(action);
  }
  return y;
}

void MarkovPolicy::add_grad_log_prob_action(Context x, int state, int action,
                                            int t, double scale,
                                            std::span<double> grad) const {
  if (t >= space_.max_len()) return;
  const std::size_t off = offset(x, state);
  for (int b = 0; b < num_actions(); ++b) {
    const double p = std::exp(log_prob_action(x, state, b, t));
    grad[off + static_cast<std::size_t>(b)] -= scale * p;
  }
  grad[off + static_cast<std::size_t>(action)] += scale;
}

void MarkovPolicy::add_grad_log_prob(Context x, std::span<const Token> y,
                                     double scale,
                                     std::span<double> grad) const {
  for (const MarkovStep& s : markov_trajectory(*this, y)) {
    add_grad_log_prob_action(x, s.state, s.action, s.t, scale, grad);
  }
}

MarkovPolicy to_markov(const TabularPolicy& policy) {
  const OutputSpace& space = policy.space();
  MarkovPolicy out(policy.contexts(), space, space.max_len() - 1);
  const std::size_t n_actions = static_cast<std::size_t>(out.num_actions());
  const std::size_t per_context =
      static_cast<std::size_t>(out.num_states()) * n_actions;
  std::vector<double> logits(static_cast<std::size_t>(policy.contexts()) *
                             per_context);
  for (Context x = 0; x < policy.contexts(); ++x) {
    const auto probs = policy.distribution(x);
    // mass[state * n_actions + a]: probability of continuing with a (or of
    // stopping) from the full prefix that the state encodes.
    std::vector<double> mass(per_context, 0.0);
    for (std::size_t i = 0; i < space.size(); ++i) {
      const Output y = space.at(i);
      for (const MarkovStep& s : markov_trajectory(out, y)) {
        mass[static_cast<std::size_t>(s.state) * n_actions +
             static_cast<std::size_t>(s.action)] += probs[i];
      }
    }
    for (std::size_t j = 0; j < per_context; ++j) {
      // Unreachable slots (STOP at the root) keep a zero logit.
      logits[static_cast<std::size_t>(x) * per_context + j] =
          mass[j] > 0.0 ? std::log(mass[j]) : 0.0;
    }
  }
  return MarkovPolicy(policy.contexts(), space, space.max_len() - 1,
                      std::move(logits));
}

TabularPolicy to_tabular(const MarkovPolicy& policy) {
  const OutputSpace& space = policy.space();
  std::vector<double> logits;
  logits.reserve(static_cast<std::size_t>(policy.contexts()) * space.size());
  for (Context x = 0; x < policy.contexts(); ++x) {
    for (std::size_t i = 0; i < space.size(); ++i) {
      logits.push_back(policy.log_prob(x, space.at(i)));
    }
  }
  return TabularPolicy(policy.contexts(), space, std::move(logits));
}

// ---------------------------------------------------------------------------
// Policy

int Policy::contexts() const {
  return std::visit([](const auto& p) { return p.contexts(); }, impl_);
}

const OutputSpace& Policy::space() const {
  return std::visit(
      [](const auto& p) -> const OutputSpace& { return p.space(); }, impl_);
}

double Policy::log_prob(Context x, std::span<const Token> y) const {
  return std::visit([&](const auto& p) { return p.log_prob(x, y); }, impl_);
}

std::vector<double> Policy::distribution(Context x) const {
  return std::visit([&](const auto& p) { return p.distribution(x); }, impl_);
}

double Policy::entropy(Context x) const {
  return std::visit([&](const auto& p) { return p.entropy(x); }, impl_);
}

Output Policy::sample(Context x, Rng& rng) const {
  return std::visit([&](const auto& p) { return p.sample(x, rng); }, impl_);
}

void Policy::add_grad_log_prob(Context x, std::span<const Token> y,
                               double scale, std::span<double> grad) const {
  std::visit([&](const auto& p) { p.add_grad_log_prob(x, y, scale, grad); },
             impl_);
}

std::span<double> Policy::params() {
  return std::visit([](auto& p) { return p.params(); }, impl_);
}

std::span<const double> Policy::params() const {
  return std::visit(
      [](const auto& p) -> std::span<const double> { return p.params(); },
      impl_);
}

bool Policy::same_structure(const Policy& other) const {
  if (impl_.index() != other.impl_.index()) return false;
  if (contexts() != other.contexts() || !(space() == other.space())) {
    return false;
  }
  if (is_markov() && markov().order() != other.markov().order()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// RewardTable

RewardTable::RewardTable(int contexts, OutputSpace space)
    : RewardTable(contexts, space,
                  std::vector<double>(
                      static_cast<std::size_t>(contexts > 0 ? contexts : 0) *
                          space.size(),
                      0.0)) {}

RewardTable::RewardTable(int contexts, OutputSpace space,
                         std::vector<double> values)
    : contexts_(contexts), space_(space), values_(std::move(values)) {
  if (contexts < 1) throw InvalidArgument("need at least one context");
  if (values_.size() != static_cast<std::size_t>(contexts) * space_.size()) {
    throw InvalidArgument("reward table has the wrong size");
  }
  if (!all_finite(values_)) throw InvalidArgument("rewards must be finite");
}

double RewardTable::at(Context x, std::size_t index) const {
  if (x < 0 || x >= contexts_) throw InvalidArgument("context out of range");
  return values_[static_cast<std::size_t>(x) * space_.size() + index];
}

double RewardTable::operator()(Context x, std::span<const Token> y) const {
  return at(x, space_.index_of(y));
}

void RewardTable::set(Context x, std::size_t index, double value) {
  if (x < 0 || x >= contexts_) throw InvalidArgument("context out of range");
  values_[static_cast<std::size_t>(x) * space_.size() + index] = value;
}

std::size_t RewardTable::flat_index(Context x,
                                    std::span<const Token> y) const {
  if (x < 0 || x >= contexts_) throw InvalidArgument("context out of range");
  return static_cast<std::size_t>(x) * space_.size() + space_.index_of(y);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> log_distribution(const Policy& p, Context x) {
  const OutputSpace& space = p.space();
  std::vector<double> out(space.size());
  if (p.is_tabular()) {
    out = log_softmax(p.tabular().row(x));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = p.log_prob(x, space.at(i));
    }
  }
  return out;
}

}  // namespace

double exact_kl(const Policy& a, const Policy& b, Context x) {
  if (!(a.space() == b.space())) {
    throw InvalidArgument("KL needs policies over the same output space");
  }
  const auto la = log_distribution(a, x);
  const auto lb = log_distribution(b, x);
  double kl = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    const double p = std::exp(la[i]);
    if (p > 0.0) kl += p * (la[i] - lb[i]);
  }
  return kl > 0.0 ? kl : 0.0;
}

double implied_reward(const Policy& policy, const Policy& ref, Context x,
                      std::span<const Token> y, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("reward scale must be positive");
  return scale * (policy.log_prob(x, y) - ref.log_prob(x, y));
}

}  // namespace halo
