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

#ifndef HALO_POLICY_HPP_
#define HALO_POLICY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "halo/rng.hpp"

namespace halo {

using Token = int;
using Context = int;
// A non-empty token sequence of length at most the space's max length.
using Output = std::vector<Token>;

inline constexpr std::size_t kMaxEnumeratedOutputs = 1'000'000;

// All token sequences of length 1..max_len over a vocabulary of size vocab,
// in lexicographic order: a sequence precedes its own extensions, and
// siblings are ordered by token id. The order is fixed and indices are
// computed arithmetically, so the space is never materialized.
class OutputSpace {
 public:
  // Throws InvalidArgument for vocab < 2 or max_len < 1 and
  // EnumerationTooLarge when the count exceeds the cap.
  OutputSpace(int vocab, int max_len,
              std::size_t cap = kMaxEnumeratedOutputs);

  int vocab() const { return vocab_; }
  int max_len() const { return max_len_; }
  std::size_t size() const { return size_; }

  bool contains(std::span<const Token> y) const;
  // Throws InvalidArgument when y is not in the space.
  std::size_t index_of(std::span<const Token> y) const;
  Output at(std::size_t index) const;
  std::vector<Output> enumerate() const;

  friend bool operator==(const OutputSpace&, const OutputSpace&) = default;

 private:
  int vocab_;
  int max_len_;
  std::size_t size_;
  // subtree_[t] = number of sequences sharing a fixed prefix of length t+1.
  std::vector<std::size_t> subtree_;
};

// Ordered list of every output; count is sum_{l=1..L} V^l.
std::vector<Output> enumerate_outputs(int vocab, int max_len);

// Softmax over the enumerated output space, one row of raw logits per
// context. Normalization happens on demand.
class TabularPolicy {
 public:
  TabularPolicy(int contexts, OutputSpace space);
  TabularPolicy(int contexts, OutputSpace space, std::vector<double> logits);

  static TabularPolicy uniform(int contexts, int vocab, int max_len);
  // Logits are log-probabilities; rows must be strictly positive.
  static TabularPolicy from_probabilities(
      OutputSpace space, const std::vector<std::vector<double>>& probs);

  int contexts() const { return contexts_; }
  const OutputSpace& space() const { return space_; }

  double logit(Context x, std::size_t index) const {
    return logits_[row_offset(x) + index];
  }
  std::span<const double> row(Context x) const;

  double log_normalizer(Context x) const;
  double log_prob_index(Context x, std::size_t index) const;
  double log_prob(Context x, std::span<const Token> y) const;
  std::vector<double> distribution(Context x) const;
  double entropy(Context x) const;
  Output sample(Context x, Rng& rng) const;

  // grad += scale * d log pi(y|x) / d logits.
  void add_grad_log_prob(Context x, std::span<const Token> y, double scale,
                         std::span<double> grad) const;

  std::span<double> params() { return logits_; }
  std::span<const double> params() const { return logits_; }

 private:
  std::size_t row_offset(Context x) const;
  void check_context(Context x) const;

  int contexts_;
  OutputSpace space_;
  std::vector<double> logits_;
};

// Autoregressive policy of order k. The state at step t is the last
// min(t, k) emitted tokens; each state has V+1 logits, the last one for
// STOP. STOP is masked at t = 0 and forced once max_len tokens are emitted.
class MarkovPolicy {
 public:
  MarkovPolicy(int contexts, OutputSpace space, int order);
  MarkovPolicy(int contexts, OutputSpace space, int order,
               std::vector<double> logits);

  int contexts() const { return contexts_; }
  const OutputSpace& space() const { return space_; }
  int order() const { return order_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return space_.vocab() + 1; }
  int stop_action() const { return space_.vocab(); }

  int state_index(std::span<const Token> prefix) const;

  // log pi(action | state) at step t; -inf for masked actions.
  double log_prob_action(Context x, int state, int action, int t) const;
  double log_prob(Context x, std::span<const Token> y) const;
  std::vector<double> distribution(Context x) const;
  double entropy(Context x) const;
  Output sample(Context x, Rng& rng) const;

  void add_grad_log_prob(Context x, std::span<const Token> y, double scale,
                         std::span<double> grad) const;
  // grad += scale * d log pi(action | state, t) / d logits.
  void add_grad_log_prob_action(Context x, int state, int action, int t,
                                double scale, std::span<double> grad) const;

  std::span<double> params() { return logits_; }
  std::span<const double> params() const { return logits_; }

 private:
  std::size_t offset(Context x, int state) const;
  void check_context(Context x) const;

  int contexts_;
  OutputSpace space_;
  int order_;
  int num_states_;
  std::vector<double> logits_;
};

// One decision made while emitting an output under a Markov policy.
struct MarkovStep {
  int state;
  int action;  // token id, or stop_action()
  int t;
};

// Decisions that carry probability mass: every token plus STOP when the
// output is shorter than max_len (the forced STOP at max_len is omitted).
std::vector<MarkovStep> markov_trajectory(const MarkovPolicy& policy,
                                          std::span<const Token> y);

// Full-prefix (order L-1) Markov policy with the same distribution.
MarkovPolicy to_markov(const TabularPolicy& policy);
TabularPolicy to_tabular(const MarkovPolicy& policy);

// Value-semantic handle over either policy backend.
class Policy {
 public:
  Policy(TabularPolicy p) : impl_(std::move(p)) {}  // NOLINT
  Policy(MarkovPolicy p) : impl_(std::move(p)) {}   // NOLINT

  bool is_tabular() const {
    return std::holds_alternative<TabularPolicy>(impl_);
  }
  bool is_markov() const { return std::holds_alternative<MarkovPolicy>(impl_); }
  const TabularPolicy& tabular() const { return std::get<TabularPolicy>(impl_); }
  const MarkovPolicy& markov() const { return std::get<MarkovPolicy>(impl_); }
  TabularPolicy& tabular() { return std::get<TabularPolicy>(impl_); }
  MarkovPolicy& markov() { return std::get<MarkovPolicy>(impl_); }

  int contexts() const;
  const OutputSpace& space() const;
  double log_prob(Context x, std::span<const Token> y) const;
  std::vector<double> distribution(Context x) const;
  double entropy(Context x) const;
  Output sample(Context x, Rng& rng) const;
  void add_grad_log_prob(Context x, std::span<const Token> y, double scale,
                         std::span<double> grad) const;
  std::span<double> params();
  std::span<const double> params() const;
  std::size_t num_params() const { return params().size(); }
  // Same backend, same shape.
  bool same_structure(const Policy& other) const;

 private:
  std::variant<TabularPolicy, MarkovPolicy> impl_;
};

// r(x, y) in nats, indexed like a tabular policy.
class RewardTable {
 public:
  RewardTable(int contexts, OutputSpace space);
  RewardTable(int contexts, OutputSpace space, std::vector<double> values);

  int contexts() const { return contexts_; }
  const OutputSpace& space() const { return space_; }
  double at(Context x, std::size_t index) const;
  double operator()(Context x, std::span<const Token> y) const;
  void set(Context x, std::size_t index, double value);
  std::size_t flat_index(Context x, std::span<const Token> y) const;

  std::span<double> params() { return values_; }
  std::span<const double> params() const { return values_; }

 private:
  int contexts_;
  OutputSpace space_;
  std::vector<double> values_;
};

// KL(a(.|x) || b(.|x)) in nats, exact over the enumerated space.
double exact_kl(const Policy& a, const Policy& b, Context x);

// scale * (log pi(y|x) - log pi_ref(y|x)).
double implied_reward(const Policy& policy, const Policy& ref, Context x,
                      std::span<const Token> y, double scale = 1.0);

}  // namespace halo

#endif  // HALO_POLICY_HPP_
