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

#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "halo/error.hpp"
#include "halo/gradcheck.hpp"
#include "halo/io.hpp"
#include "halo/klref.hpp"
#include "halo/numeric.hpp"
#include "halo/oracles.hpp"
#include "halo/rng.hpp"

namespace halo::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Dataset generate(const json& j, const std::string& prefix) {
  StrictObject obj(j, prefix);
  std::string kind;
  if (!obj.string("kind", kind)) throw ConfigError(obj.path("kind"), "required");
  double p = 0.75;
  int n = 100;
  int vocab = 2;
  int max_len = 1;
  int contexts = 1;
  int reps = 10;
  std::uint64_t seed = 0;
  obj.number("p", p);
  obj.integer("n", n);
  obj.integer("V", vocab);
  obj.integer("L", max_len);
  obj.integer("X", contexts);
  obj.integer("reps", reps);
  obj.integer("seed", seed);
  obj.reject_unknown();
  try {
    if (kind == "contradictory") return gen_contradictory(p, n);
    if (kind == "random") return gen_random(vocab, max_len, contexts, n, seed);
    if (kind == "separable") {
      return gen_separable(vocab, max_len, contexts, reps, seed);
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(prefix, e.what());
  }
  throw ConfigError(obj.path("kind"),
                    "expected contradictory|random|separable");
}

Dataset read_dataset_section(const json& j, const fs::path& base) {
  StrictObject obj(j, "dataset");
  std::string path;
  Dataset data;
  const bool from_file = obj.string("path", path);
  const bool from_gen = obj.has("generator");
  if (from_file == from_gen) {
    throw ConfigError("dataset", "exactly one of path or generator required");
  }
  if (from_file) {
    data = load_dataset(resolve(base, path));
  } else {
    data = generate(j.at("generator"), "dataset.generator");
  }
  if (obj.has("subsample_desirable")) {
    StrictObject sub(j.at("subsample_desirable"),
                     "dataset.subsample_desirable");
    ImbalanceSpec spec;
    sub.number("fraction", spec.keep_desirable_fraction);
    sub.integer("seed", spec.seed);
    sub.reject_unknown();
    if (data.feedback.empty()) {
      data.feedback = preferences_to_binary(data.pairs);
      data.pairs.clear();
    }
    try {
      data.feedback = subsample_desirable(data.feedback, spec);
    } catch (const InvalidArgument& e) {
      throw ConfigError("dataset.subsample_desirable", e.what());
    }
  }
  obj.reject_unknown();
  return data;
}

Policy as_kind(Policy p, bool markov, int order, const std::string& field) {
  if (markov && p.is_tabular()) {
    p = to_markov(p.tabular());
  } else if (!markov && p.is_markov()) {
    p = to_tabular(p.markov());
  }
  if (markov && p.markov().order() != order) {
    throw ConfigError(field, "Markov order does not match policy.order");
  }
  return p;
}

Policy build_policy(const json& spec, const std::string& field,
                    const fs::path& base, int contexts,
                    const OutputSpace& space, bool markov, int order) {
  auto uniform = [&]() -> Policy {
    if (markov) return MarkovPolicy(contexts, space, order);
    return TabularPolicy(contexts, space);
  };
  if (spec.is_string()) {
    if (spec.get<std::string>() == "uniform") return uniform();
    throw ConfigError(field, "expected \"uniform\" or an object");
  }
  StrictObject obj(spec, field);
  Policy p = uniform();
  if (obj.has("probs")) {
    try {
      p = TabularPolicy::from_probabilities(
          space, spec.at("probs").get<std::vector<std::vector<double>>>());
    } catch (const json::exception& e) {
      throw ConfigError(obj.path("probs"), e.what());
    } catch (const InvalidArgument& e) {
      throw ConfigError(obj.path("probs"), e.what());
    }
  } else if (std::string path; obj.string("path", path)) {
    p = policy_from_json(json::parse(read_file(resolve(base, path))));
  } else {
    throw ConfigError(field, "expected probs or path");
  }
  obj.reject_unknown();
  if (p.contexts() != contexts || !(p.space() == space)) {
    throw ConfigError(field, "policy shape does not match the dataset");
  }
  return as_kind(std::move(p), markov, order, field);
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

json dataset_summary(const Dataset& d) {
  return json{{"V", d.meta.vocab},
              {"L", d.meta.max_len},
              {"X", d.meta.contexts},
              {"pairs", d.pairs.size()},
              {"feedback", d.feedback.size()}};
}

int cmd_gen(const std::string& kind, double p, int n, int vocab, int max_len,
            int contexts, int reps, std::uint64_t seed, double fraction,
            const std::string& out_path, std::ostream& out) {
  json gen{{"kind", kind}, {"p", p}, {"n", n}, {"V", vocab},
           {"L", max_len}, {"X", contexts}, {"reps", reps}, {"seed", seed}};
  json section{{"generator", gen}};
  if (fraction < 1.0) {
    section["subsample_desirable"] = json{{"fraction", fraction}, {"seed", seed}};
  }
  const Dataset data = read_dataset_section(section, fs::current_path());
  save_dataset(out_path, data);
  out << "pairs=" << data.pairs.size() << " feedback=" << data.feedback.size();
  if (kind == "contradictory" && !data.pairs.empty()) {
    long prefer_a = 0;
    for (const auto& pr : data.pairs) prefer_a += pr.chosen == Output{0};
    out << " prefer_a=" << prefer_a
        << " prefer_b=" << static_cast<long>(data.pairs.size()) - prefer_a;
  }
  if (!data.feedback.empty()) {
    long desirable = 0;
    for (const auto& ex : data.feedback) {
      desirable += ex.label == Label::desirable;
    }
    out << " desirable=" << desirable
        << " undesirable=" << static_cast<long>(data.feedback.size()) - desirable;
  }
  out << "\n";
  return kExitOk;
}

int cmd_train(const fs::path& config_path, std::ostream& out) {
  json doc;
  try {
    doc = json::parse(read_file(config_path));
  } catch (const json::parse_error& e) {
    throw ConfigError(config_path.string(), e.what());
  }
  const fs::path base = config_path.has_parent_path()
                            ? config_path.parent_path()
                            : fs::current_path();
  const RunConfig rc = parse_run_config(doc, base);
  const TrainResult result =
      train(rc.initial, rc.reference, rc.data, rc.loss, rc.train);

  json summary{{"loss", loss_spec_to_json(rc.loss)},
               {"train", train_config_to_json(rc.train)},
               {"dataset", dataset_summary(rc.data)},
               {"steps_run", result.report.steps_run},
               {"converged", result.report.converged},
               {"final_loss", result.report.final_loss},
               {"final_grad_norm", result.report.final_grad_norm}};
  if (!result.report.rows.empty()) {
    summary["final_kl_to_ref"] = result.report.rows.back().kl_to_ref;
  }
  if (result.policy.space().size() == 2) {
    json ctx = json::array();
    for (Context x = 0; x < result.policy.contexts(); ++x) {
      const auto pi = result.policy.distribution(x);
      const double margin =
          rc.loss.beta * (implied_reward(result.policy, rc.reference, x, Output{0}) -
                          implied_reward(result.policy, rc.reference, x, Output{1}));
      ctx.push_back(json{{"x", x},
                         {"pi_a", pi[0]},
                         {"pi_b", pi[1]},
                         {"ratio", pi[0] / pi[1]},
                         {"sigma_u", sigmoid(margin)}});
    }
    summary["two_output"] = ctx;
  }

  fs::create_directories(rc.output_dir);
  write_file_atomic(rc.output_dir / "report.csv", report_csv(result.report));
  write_json(rc.output_dir / "summary.json", summary);
  write_json(rc.output_dir / "policy.json", policy_to_json(result.policy));
  write_json(rc.output_dir / "meta.json",
             json{{"config", fs::absolute(config_path).string()},
                  {"output_dir", fs::absolute(rc.output_dir).string()},
                  {"timestamp", utc_timestamp()},
                  {"files", {"report.csv", "summary.json", "policy.json"}}});
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed,
               const std::string& out_path, std::ostream& out) {
  const auto verdicts = run_suite(suite, seed);
  json arr = json::array();
  bool ok = true;
  for (const auto& v : verdicts) {
    arr.push_back(verdict_to_json(v));
    ok = ok && v.passed;
  }
  if (!out_path.empty()) write_json(out_path, arr);
  out << arr.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const std::string& loss, int trials, std::uint64_t seed,
                  double h, double tol, std::ostream& out) {
  std::vector<LossKind> kinds;
  if (loss == "all") {
    kinds = {LossKind::dpo,  LossKind::kto,         LossKind::kto_ref_free,
             LossKind::slic, LossKind::csft,        LossKind::ppo_offline,
             LossKind::bt_reward, LossKind::sft_ce};
  } else {
    kinds = {loss_kind_from_string(loss)};
  }
  json arr = json::array();
  bool ok = true;
  for (LossKind kind : kinds) {
    const GradcheckResult r = run_gradcheck(kind, trials, seed, h, tol);
    arr.push_back(json{{"loss", to_string(kind)},
                       {"trials", r.trials},
                       {"excluded", r.excluded},
                       {"max_rel_error", r.max_rel_error},
                       {"tolerance", r.tolerance},
                       {"passed", r.passed()}});
    ok = ok && r.passed();
  }
  out << arr.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

struct KlbenchOptions {
  int m = 4;
  int trials = 10'000;
  std::uint64_t seed = 0;
  int contexts = 3;
  int vocab = 3;
  int max_len = 2;
  int n = 256;
  double spread = 0.3;
  bool identical = false;
  std::string pairing = "partial";
};

int cmd_klbench(const KlbenchOptions& o, std::ostream& out) {
  if (o.m < 2) throw BatchTooSmall("microbatch size must be >= 2");
  if (o.n < 1) throw InvalidArgument("--n must be >= 1");
  const Z0Pairing pairing =
      o.pairing == "full_cycle" ? Z0Pairing::full_cycle : Z0Pairing::partial;
  const OutputSpace space(o.vocab, o.max_len);
  Rng init = make_rng(o.seed, "klbench/init");
  TabularPolicy ref(o.contexts, space);
  for (double& v : ref.params()) v = gaussian(init);
  TabularPolicy theta = ref;
  if (!o.identical) {
    for (double& v : theta.params()) v += o.spread * gaussian(init);
  }
  Rng sample = make_rng(o.seed, "klbench/data");
  std::vector<FeedbackExample> data;
  for (int i = 0; i < o.n; ++i) {
    const auto x = static_cast<Context>(
        uniform_index(sample, static_cast<std::uint64_t>(o.contexts)));
    data.push_back({x, theta.sample(x, sample), Label::desirable});
  }
  Rng resample = make_rng(o.seed, "klbench/resample");
  const BiasVarianceReport r = bias_variance_report(
      theta, ref, data, o.m, o.trials, resample, pairing);
  out << bias_variance_to_json(r).dump(2) << "\n";
  return r.clamped_bias_nonnegative() && r.clamped_variance_not_larger()
             ? kExitOk
             : kExitFailure;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  StrictObject obj(doc, "");
  for (const char* key : {"dataset", "loss", "output_dir"}) {
    if (!doc.is_object() || !doc.contains(key)) {
      throw ConfigError(key, "required");
    }
  }
  obj.has("dataset");
  Dataset data = read_dataset_section(doc.at("dataset"), base_dir);
  obj.has("loss");
  const LossSpec loss = loss_spec_from_json(doc.at("loss"), "loss");
  TrainConfig train;
  if (obj.has("train")) train = train_config_from_json(doc.at("train"), "train");
  try {
    train.validate(loss);
  } catch (const Error& e) {
    throw ConfigError("train", e.what());
  }
  std::string out_dir;
  obj.string("output_dir", out_dir);

  std::string kind = "tabular";
  int order = -1;
  json reference = "uniform";
  json init = "reference";
  if (obj.has("policy")) {
    StrictObject pol(doc.at("policy"), "policy");
    pol.string("kind", kind);
    pol.integer("order", order);
    if (pol.has("reference")) reference = doc.at("policy").at("reference");
    if (pol.has("init")) init = doc.at("policy").at("init");
    pol.reject_unknown();
  }
  obj.reject_unknown();
  if (kind != "tabular" && kind != "markov") {
    throw ConfigError("policy.kind", "expected tabular|markov");
  }
  const bool markov = kind == "markov";
  OutputSpace space = data.space();
  if (loss.kind == LossKind::csft) {
    space = OutputSpace(space.vocab() + 2, space.max_len() + 1);
  }
  if (markov && order < 0) order = space.max_len() - 1;
  if (markov && order > space.max_len() - 1) {
    throw ConfigError("policy.order", "must lie in [0, L - 1]");
  }
  if (loss.kind == LossKind::ppo_offline && !markov) {
    throw ConfigError("policy.kind", "ppo_offline needs a markov policy");
  }

  const int contexts = data.meta.contexts;
  Policy ref = build_policy(reference, "policy.reference", base_dir, contexts,
                            space, markov, order);
  Policy initial = ref;
  if (init.is_string() && init.get<std::string>() == "reference") {
    initial = ref;
  } else {
    initial = build_policy(init, "policy.init", base_dir, contexts, space,
                           markov, order);
  }
  return RunConfig{std::move(data), std::move(initial), std::move(ref), loss,
                   train, resolve(base_dir, out_dir)};
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Human-aware loss laboratory over enumerable policies", "halo"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_kind;
  double gen_p = 0.75;
  int gen_n = 100;
  int gen_v = 2;
  int gen_l = 1;
  int gen_x = 1;
  int gen_reps = 10;
  std::uint64_t gen_seed = 0;
  double gen_fraction = 1.0;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "Generator")
      ->required()
      ->check(CLI::IsMember({"contradictory", "random", "separable"}));
  gen->add_option("--p", gen_p, "Majority proportion (contradictory)");
  gen->add_option("--n", gen_n, "Number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--V", gen_v, "Vocabulary size");
  gen->add_option("--L", gen_l, "Maximum output length");
  gen->add_option("--X", gen_x, "Number of contexts");
  gen->add_option("--reps", gen_reps, "Repetitions (separable)");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--fraction", gen_fraction,
                  "Keep this fraction of desirable examples")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gen_out, "Output JSON-lines file")->required();

  auto* tr = app.add_subcommand("train", "Train a policy from a JSON config");
  std::string config;
  tr->add_option("--config", config, "Run config")
      ->required()
      ->check(CLI::ExistingFile);

  auto* ver = app.add_subcommand("verify", "Run theorem oracles");
  std::string suite = "all";
  std::uint64_t ver_seed = 0;
  std::string ver_out;
  ver->add_option("--suite", suite, "Suite")
      ->check(CLI::IsMember(
          {"all", "theorem1", "theorem2", "theorem3", "prop1", "rlhf"}));
  ver->add_option("--seed", ver_seed, "Seed");
  ver->add_option("--out", ver_out, "Also write the verdicts here");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::string gc_loss = "all";
  int gc_trials = 20;
  std::uint64_t gc_seed = 0;
  double gc_h = 1e-5;
  double gc_tol = 1e-5;
  gc->add_option("--loss", gc_loss, "Loss kind or all");
  gc->add_option("--trials", gc_trials, "Instances per loss")
      ->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "Seed");
  gc->add_option("--fd-step", gc_h, "Central-difference step");
  gc->add_option("--tol", gc_tol, "Relative error tolerance");

  auto* kb = app.add_subcommand("klbench", "Bias/variance of the z0 estimate");
  KlbenchOptions kbo;
  kb->add_option("--m", kbo.m, "Microbatch size");
  kb->add_option("--trials", kbo.trials, "Resampled microbatches");
  kb->add_option("--seed", kbo.seed, "Seed");
  kb->add_option("--X", kbo.contexts, "Number of contexts");
  kb->add_option("--V", kbo.vocab, "Vocabulary size");
  kb->add_option("--L", kbo.max_len, "Maximum output length");
  kb->add_option("--n", kbo.n, "Dataset size");
  kb->add_option("--spread", kbo.spread, "Policy distance from reference");
  kb->add_flag("--identical", kbo.identical, "Use the reference as policy");
  kb->add_option("--pairing", kbo.pairing, "partial or full_cycle")
      ->check(CLI::IsMember({"partial", "full_cycle"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      return cmd_gen(gen_kind, gen_p, gen_n, gen_v, gen_l, gen_x, gen_reps,
                     gen_seed, gen_fraction, gen_out, out);
    }
    if (*tr) return cmd_train(config, out);
    if (*ver) return cmd_verify(suite, ver_seed, ver_out, out);
    if (*gc) return cmd_gradcheck(gc_loss, gc_trials, gc_seed, gc_h, gc_tol, out);
    if (*kb) return cmd_klbench(kbo, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const BatchTooSmall& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const EnumerationTooLarge& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure at step " << e.step() << ": " << e.what()
        << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace halo::cli
