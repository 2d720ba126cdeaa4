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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Tolerances and time budgets are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "halo/data.hpp"
#include "halo/gradcheck.hpp"
#include "halo/io.hpp"
#include "halo/klref.hpp"
#include "halo/numeric.hpp"
#include "halo/oracles.hpp"
#include "halo/rng.hpp"
#include "halo/trainer.hpp"

namespace halo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kSeed = 20260101;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;  // 0 means no time limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "halo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out != nullptr) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

Outcome gradient_oracle() {
  constexpr double kStep = 1e-5;
  constexpr double kTol = 1e-5;
  constexpr int kTrials = 20;
  Outcome o{true, ""};
  double worst = 0.0;
  for (LossKind kind : {LossKind::dpo, LossKind::kto, LossKind::kto_ref_free,
                        LossKind::slic, LossKind::csft, LossKind::ppo_offline,
                        LossKind::bt_reward, LossKind::sft_ce}) {
    const GradcheckResult r = run_gradcheck(kind, kTrials, kSeed, kStep, kTol);
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed() || r.trials - r.excluded < kTrials) {
      o.passed = false;
      o.detail += std::string(to_string(kind)) + " failed; ";
    }
  }
  o.detail += fmt("max rel error %.3g", worst);
  return o;
}

Outcome dpo_stationarity() {
  const Dataset data = gen_contradictory(0.75, 100);
  const Policy ref = TabularPolicy(1, data.space());
  LossSpec spec = LossSpec::defaults_for(LossKind::dpo);
  spec.beta = 1.0;
  TrainConfig cfg;
  cfg.lr = 2.0;
  cfg.steps = 20'000;
  cfg.batch_size = 100;
  cfg.log_every = 1000;
  cfg.grad_tol = 1e-12;
  const TrainResult r = train(ref, ref, data, spec, cfg);
  const double u = spec.beta * (implied_reward(r.policy, ref, 0, Output{0}) -
                                implied_reward(r.policy, ref, 0, Output{1}));
  const auto pi = r.policy.distribution(0);
  const double ratio = pi[0] / pi[1];
  return {std::fabs(sigmoid(u) - 0.75) <= 1e-3 &&
              std::fabs(ratio - 3.0) <= 0.01 * 3.0,
          fmt("sigma(u)=%.6f ratio=%.6f steps=%ld", sigmoid(u), ratio,
              r.report.steps_run)};
}

Outcome minority_pathology() {
  const double p = 0.6, beta = 0.5, ref_a = 0.1, ref_b = 0.9;
  const double lhs = std::pow(p, 1.0 / beta) * ref_a;
  const double rhs = std::pow(1.0 - p, 1.0 / beta) * ref_b;
  const bool condition = check_theorem3_condition(p, beta, ref_a, ref_b);
  const ContradictoryOutcome dpo =
      train_contradictory(LossKind::dpo, p, beta, ref_a, ref_b);
  const ContradictoryOutcome kto =
      train_contradictory(LossKind::kto, p, beta, ref_a, ref_b);
  return {condition && lhs < rhs && dpo.converged && dpo.pi_b > dpo.pi_a &&
              kto.pi_a >= 0.99,
          fmt("condition %.3f < %.3f; dpo pi=(%.4f, %.4f); kto pi_a=%.6f", lhs,
              rhs, dpo.pi_a, dpo.pi_b, kto.pi_a)};
}

Outcome rlhf_closed_form() {
  Rng rng = make_rng(kSeed, "acceptance/rlhf");
  const OutputSpace space(3, 2);
  TabularPolicy ref(3, space);
  for (double& v : ref.params()) v = gaussian(rng);
  RewardTable r(3, space);
  for (double& v : r.params()) v = gaussian(rng);
  const double beta = 1.0;
  const TabularPolicy opt = rlhf_optimal_policy(ref, r, beta);
  const AscentResult ascent =
      maximize_rlhf_objective(ref, r, beta, 1.0, 200'000, 1e-10);
  const double tv = max_total_variation(Policy(opt), Policy(ascent.policy));
  const TheoremVerdict shift = verify_opt_reward_shift(opt, ref, r, beta);
  return {tv <= 1e-3 && shift.passed,
          fmt("tv=%.3g (ascent steps %ld); shift spread %.3g", tv, ascent.steps,
              shift.observed)};
}

Outcome reward_equivalence() {
  Rng rng = make_rng(kSeed, "acceptance/equivalence");
  const TabularPolicy ref = TabularPolicy::uniform(3, 3, 2);
  RewardTable r(3, ref.space());
  for (double& v : r.params()) v = gaussian(rng);
  double bt = 0.0, tv = 0.0, gap = 1e300;
  bool ok = true;
  for (int i = 0; i < 10; ++i) {
    EquivalenceShift h;
    for (int x = 0; x < 3; ++x) {
      const double mag = uniform(rng, 0.1, 3.0);
      h.h.push_back(uniform01(rng) < 0.5 ? -mag : mag);
    }
    const auto v = verify_theorem2(r, h, ref, 0.5, LogisticValueParams{});
    for (const auto& leg : v) ok = ok && leg.passed;
    bt = std::max(bt, v[0].observed);
    tv = std::max(tv, v[1].observed);
    gap = std::min(gap, v[2].observed);
  }
  return {ok, fmt("max bt gap %.3g, max tv %.3g, min value gap %.3g", bt, tv,
                  gap)};
}

Outcome kto_saturation() {
  const TheoremVerdict v =
      verify_prop1_saturation(LossSpec::defaults_for(LossKind::kto));
  return {v.passed && v.observed <= 1e-6,
          fmt("endpoint/peak = %.3g", v.observed)};
}

Outcome ppo_clip_form() {
  const TheoremVerdict v = verify_halo_form_ppo(1000, kSeed);
  return {v.passed, fmt("max |difference| = %.3g", v.observed)};
}

Outcome kl_estimator() {
  std::string out;
  const int code = cli({"klbench", "--m", "4", "--trials", "10000", "--seed",
                        std::to_string(kSeed)},
                       &out);
  if (code == 2) return {false, "klbench usage error"};
  const json j = json::parse(out);
  const bool ok = j["unclamped_both_signs"].get<bool>() &&
                  j["mean_clamped"].get<double>() >=
                      j["mean_unclamped"].get<double>() &&
                  j["var_clamped"].get<double>() <=
                      j["var_unclamped"].get<double>();
  return {ok && code == 0,
          fmt("mean %.4g vs %.4g, var %.4g vs %.4g",
              j["mean_clamped"].get<double>(), j["mean_unclamped"].get<double>(),
              j["var_clamped"].get<double>(), j["var_unclamped"].get<double>())};
}

Outcome lambda_rule() {
  std::vector<long> grid;
  for (long v = 1; v <= 1'000'000; v *= 10) {
    for (long s : {1L, 2L, 3L, 7L}) {
      if (v * s <= 1'000'000) grid.push_back(v * s);
    }
  }
  Rng rng = make_rng(kSeed, "acceptance/lambdas");
  for (int i = 0; i < 200; ++i) {
    grid.push_back(1 + static_cast<long>(uniform01(rng) * 999'999.0));
  }
  double lo = 1e300, hi = 0.0;
  for (long nd : grid) {
    for (long nu : grid) {
      const double e = effective_ratio(recommended_lambdas(nd, nu), nd, nu);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
  }
  const LambdaWeights w = recommended_lambdas(1, 10);
  const bool example = w.lambda_U == 1.0 && w.lambda_D >= 10.0 &&
                       w.lambda_D <= 15.0;
  return {lo >= 1.0 - 1e-12 && hi <= 1.5 + 1e-12 && example,
          fmt("%zu^2 pairs, ratio in [%.6f, %.6f]; 1:10 -> lambda_D=%.4g "
              "lambda_U=%.4g",
              grid.size(), lo, hi, w.lambda_D, w.lambda_U)};
}

Outcome imbalance() {
  constexpr int kV = 3, kL = 1, kX = 4, kReps = 20;
  const Dataset pairs = gen_separable(kV, kL, kX, kReps, kSeed);
  const auto targets = separable_targets(kV, kL, kX, kSeed);
  Dataset full = pairs;
  full.pairs.clear();
  full.feedback = preferences_to_binary(pairs.pairs);
  Dataset sub = full;
  sub.feedback = subsample_desirable(full.feedback, {0.1, kSeed});
  long nd = 0, nu = 0;
  for (const auto& ex : sub.feedback) (ex.label == Label::desirable ? nd : nu)++;
  const LambdaWeights w = recommended_lambdas(nd, nu);

  const Policy ref = TabularPolicy(kX, full.space());
  TrainConfig cfg;
  cfg.lr = 1.0;
  cfg.steps = 3000;
  cfg.batch_size = 64;
  cfg.log_every = 1000;
  LossSpec spec = LossSpec::defaults_for(LossKind::kto);
  const TrainResult a = train(ref, ref, full, spec, cfg);
  spec.lambda_D = w.lambda_D;
  spec.lambda_U = w.lambda_U;
  const TrainResult b = train(ref, ref, sub, spec, cfg);
  int agree = 0;
  for (Context x = 0; x < kX; ++x) {
    const std::size_t ia = argmax(a.policy.distribution(x));
    const std::size_t ib = argmax(b.policy.distribution(x));
    const std::size_t want = full.space().index_of(targets[static_cast<std::size_t>(x)]);
    agree += (ia == ib && ia == want) ? 1 : 0;
  }
  return {agree == kX, fmt("n_D=%ld n_U=%ld lambda_D=%.4g; %d/%d contexts agree",
                           nd, nu, w.lambda_D, agree, kX)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "halo_acceptance_determinism";
  fs::remove_all(root);
  const json config = {
      {"dataset", {{"generator", {{"kind", "random"}, {"n", 40}, {"V", 2},
                                  {"L", 2}, {"X", 2}, {"seed", 3}}}}},
      {"loss", {{"kind", "kto"}}},
      {"train", {{"lr", 0.5}, {"steps", 200}, {"full_batch", false},
                 {"batch_size", 8}, {"seed", 11}, {"log_every", 10}}},
      {"output_dir", "out"}};
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    std::ofstream(root / run / "config.json") << config.dump(2);
    if (cli({"train", "--config", (root / run / "config.json").string()}) != 0 ||
        cli({"verify", "--suite", "all", "--seed", "5", "--out",
             (root / run / "verdicts.json").string()}) != 0) {
      return {false, "command failed"};
    }
  }
  int same = 0, total = 0;
  for (const char* f : {"out/report.csv", "out/summary.json", "out/policy.json",
                        "verdicts.json"}) {
    ++total;
    same += read_file(root / "a" / f) == read_file(root / "b" / f) ? 1 : 0;
  }
  return {same == total, fmt("%d/%d payload files identical", same, total)};
}

}  // namespace
}  // namespace halo

int main() {
  using namespace halo;
  const std::vector<Criterion> criteria = {
      {1, "gradient oracle", 10.0, gradient_oracle},
      {2, "DPO stationarity on contradictory data", 30.0, dpo_stationarity},
      {3, "minority pathology (DPO) vs majority (KTO)", 60.0, minority_pathology},
      {4, "RLHF closed form and reward shift", 0.0, rlhf_closed_form},
      {5, "reward equivalence classes", 5.0, reward_equivalence},
      {6, "KTO gradient saturation", 0.0, kto_saturation},
      {7, "PPO clip as a value function", 0.0, ppo_clip_form},
      {8, "clamped KL estimator bias/variance", 30.0, kl_estimator},
      {9, "lambda weighting rule", 0.0, lambda_rule},
      {10, "imbalance robustness", 0.0, imbalance},
      {11, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    if (c.budget_s > 0.0 && secs >= c.budget_s) {
      o.passed = false;
      o.detail += " [over time budget]";
    }
    if (!o.passed) ++failed;
    std::printf("%s criterion %d: %s (%s; %.2f s)\n", o.passed ? "PASS" : "FAIL",
                c.id, c.title.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
