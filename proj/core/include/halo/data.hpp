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

#ifndef HALO_DATA_HPP_
#define HALO_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "halo/losses.hpp"
#include "halo/policy.hpp"
#include "halo/rng.hpp"

namespace halo {

struct DatasetMeta {
  int vocab = 2;     // V
  int max_len = 1;   // L
  int contexts = 1;  // X

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct Dataset {
  std::vector<PreferencePair> pairs;
  std::vector<FeedbackExample> feedback;
  DatasetMeta meta;

  OutputSpace space() const { return OutputSpace(meta.vocab, meta.max_len); }
  // Throws InvalidArgument if any record falls outside meta.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Each pair becomes (x, y_w, desirable) then (x, y_l, undesirable).
std::vector<FeedbackExample> preferences_to_binary(
    std::span<const PreferencePair> pairs);

// Keeps one side of every pair, chosen uniformly.
std::vector<FeedbackExample> one_y_per_x(std::span<const PreferencePair> pairs,
                                         Rng& rng);

struct ImbalanceSpec {
  double keep_desirable_fraction = 1.0;  // in (0, 1]
  std::uint64_t seed = 0;
};

// Keeps each desirable example independently with the given probability;
// undesirable examples pass through untouched. Order is preserved.
std::vector<FeedbackExample> subsample_desirable(
    std::span<const FeedbackExample> feedback, const ImbalanceSpec& spec);

struct LambdaWeights {
  double lambda_D = 1.0;
  double lambda_U = 1.0;
};

// lambda_D n_D / (lambda_U n_U)
double effective_ratio(const LambdaWeights& w, long n_D, long n_U);

// Weights that put the effective desirable:undesirable ratio at
// target_ratio (in [1, 1.5]). Only the minority class weight moves; the
// other stays at 1.
LambdaWeights recommended_lambdas(long n_D, long n_U,
                                  double target_ratio = 1.25);

// One context, outputs y_a = (0) and y_b = (1); round(p n) pairs prefer
// y_a and the rest prefer y_b, interleaved evenly.
Dataset gen_contradictory(double p, int n);

// Pairs of distinct outputs ranked by a hidden Gaussian reward through a
// sampled Bradley-Terry outcome.
Dataset gen_random(int vocab, int max_len, int contexts, int n,
                   std::uint64_t seed);

// Each context has one good output (drawn from the seed) that is preferred
// over every other output, repeated `reps` times.
Dataset gen_separable(int vocab, int max_len, int contexts, int reps,
                      std::uint64_t seed);
// The good output of each context in a gen_separable dataset.
std::vector<Output> separable_targets(int vocab, int max_len, int contexts,
                                      std::uint64_t seed);

// JSON lines: an optional {"meta":{"V":..,"L":..,"X":..}} record, then
// {"x":int,"yw":[..],"yl":[..]} pair records and
// {"x":int,"y":[..],"label":"D"|"U"} feedback records.
// Without a meta record, V, L and X are inferred from the data.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace halo

#endif  // HALO_DATA_HPP_
