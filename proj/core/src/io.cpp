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

#include "halo/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>

#include "halo/error.hpp"

namespace halo {
namespace {

using nlohmann::json;

json rows_to_json(std::span<const double> flat, std::size_t rows) {
  json out = json::array();
  const std::size_t width = rows == 0 ? 0 : flat.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    out.push_back(std::vector<double>(flat.begin() + r * width,
                                      flat.begin() + (r + 1) * width));
  }
  return out;
}

std::vector<double> rows_from_json(const json& j, std::size_t rows,
                                   std::size_t width, const std::string& path) {
  if (!j.is_array() || j.size() != rows) {
    throw ConfigError(path, "expected one row per context");
  }
  std::vector<double> flat;
  flat.reserve(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j[r];
    const std::string at = path + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.size() != width) {
      throw ConfigError(at, "expected " + std::to_string(width) + " values");
    }
    for (const json& v : row) {
      if (!v.is_number()) throw ConfigError(at, "expected numbers");
      flat.push_back(v.get<double>());
    }
  }
  return flat;
}

struct TableShape {
  int contexts = 0;
  int vocab = 0;
  int max_len = 0;
};

// Reads X, V, L and rejects shapes the enumeration cannot build.
TableShape read_shape(StrictObject& obj) {
  TableShape shape;
  for (auto [key, out] : {std::pair<const char*, int*>{"X", &shape.contexts},
                          {"V", &shape.vocab},
                          {"L", &shape.max_len}}) {
    if (!obj.has(key)) throw ConfigError(obj.path(key), "required");
    obj.integer(key, *out);
    if (*out < 1) throw ConfigError(obj.path(key), "must be >= 1");
  }
  return shape;
}

OutputSpace make_space(const TableShape& shape, const StrictObject& obj) {
  try {
    return OutputSpace(shape.vocab, shape.max_len);
  } catch (const InvalidArgument& e) {
    throw ConfigError(obj.path("V"), e.what());
  }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json policy_to_json(const Policy& policy) {
  json j;
  const auto rows = static_cast<std::size_t>(policy.contexts());
  j["kind"] = policy.is_tabular() ? "tabular" : "markov";
  j["V"] = policy.space().vocab();
  j["L"] = policy.space().max_len();
  j["X"] = policy.contexts();
  if (policy.is_markov()) j["k"] = policy.markov().order();
  j["logits"] = rows_to_json(policy.params(), rows);
  return j;
}

Policy policy_from_json(const json& j) {
  StrictObject obj(j, "policy");
  std::string kind;
  if (!obj.string("kind", kind)) throw ConfigError(obj.path("kind"), "required");
  const TableShape shape = read_shape(obj);
  const OutputSpace space = make_space(shape, obj);
  const auto rows = static_cast<std::size_t>(shape.contexts);
  if (!obj.has("logits")) throw ConfigError(obj.path("logits"), "required");
  if (kind == "tabular") {
    obj.reject_unknown();
    return TabularPolicy(shape.contexts, space,
                         rows_from_json(j.at("logits"), rows, space.size(),
                                        obj.path("logits")));
  }
  if (kind == "markov") {
    int order = 0;
    if (!obj.has("k")) throw ConfigError(obj.path("k"), "required");
    obj.integer("k", order);
    obj.reject_unknown();
    std::size_t width = 0;
    try {
      width = MarkovPolicy(shape.contexts, space, order).params().size() / rows;
    } catch (const InvalidArgument& e) {
      throw ConfigError(obj.path("k"), e.what());
    }
    return MarkovPolicy(shape.contexts, space, order,
                        rows_from_json(j.at("logits"), rows, width,
                                       obj.path("logits")));
  }
  throw ConfigError(obj.path("kind"), "unknown policy kind " + kind);
}

json reward_to_json(const RewardTable& r) {
  json j;
  j["V"] = r.space().vocab();
  j["L"] = r.space().max_len();
  j["X"] = r.contexts();
  j["values"] = rows_to_json(r.params(), static_cast<std::size_t>(r.contexts()));
  return j;
}

RewardTable reward_from_json(const json& j) {
  StrictObject obj(j, "reward");
  const TableShape shape = read_shape(obj);
  const OutputSpace space = make_space(shape, obj);
  if (!obj.has("values")) throw ConfigError(obj.path("values"), "required");
  obj.reject_unknown();
  return RewardTable(shape.contexts, space,
                     rows_from_json(j.at("values"),
                                    static_cast<std::size_t>(shape.contexts),
                                    space.size(), obj.path("values")));
}

LossSpec loss_spec_from_json(const json& j, const std::string& prefix) {
  StrictObject obj(j, prefix);
  LossKind kind = LossKind::kto;
  if (!obj.has("kind")) throw ConfigError(obj.path("kind"), "required");
  obj.choice("kind", loss_kind_from_string, kind);
  LossSpec spec = LossSpec::defaults_for(kind);
  obj.number("beta", spec.beta);
  obj.number("lambda_D", spec.lambda_D);
  obj.number("lambda_U", spec.lambda_U);
  obj.number("delta", spec.delta);
  obj.number("lambda_reg", spec.lambda_reg);
  obj.number("clip_lo", spec.clip_lo);
  obj.number("clip_hi", spec.clip_hi);
  obj.number("kl_coeff", spec.kl_coeff);
  obj.choice("value_kind", value_kind_from_string, spec.value_kind);
  obj.boolean("use_z0", spec.use_z0);
  obj.reject_unknown();
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(prefix, e.what());
  }
  return spec;
}

json loss_spec_to_json(const LossSpec& spec) {
  return json{{"kind", to_string(spec.kind)},
              {"beta", spec.beta},
              {"lambda_D", spec.lambda_D},
              {"lambda_U", spec.lambda_U},
              {"delta", spec.delta},
              {"lambda_reg", spec.lambda_reg},
              {"clip_lo", spec.clip_lo},
              {"clip_hi", spec.clip_hi},
              {"kl_coeff", spec.kl_coeff},
              {"value_kind", to_string(spec.value_kind)},
              {"use_z0", spec.use_z0}};
}

TrainConfig train_config_from_json(const json& j, const std::string& prefix) {
  StrictObject obj(j, prefix);
  TrainConfig cfg;
  obj.number("lr", cfg.lr);
  obj.integer("steps", cfg.steps);
  obj.integer("batch_size", cfg.batch_size);
  obj.boolean("full_batch", cfg.full_batch);
  obj.choice("optimizer", optimizer_kind_from_string, cfg.optimizer);
  obj.number("momentum", cfg.momentum);
  obj.number("adam_beta1", cfg.adam_beta1);
  obj.number("adam_beta2", cfg.adam_beta2);
  obj.number("adam_eps", cfg.adam_eps);
  obj.integer("seed", cfg.seed);
  obj.integer("log_every", cfg.log_every);
  obj.number("grad_tol", cfg.grad_tol);
  obj.number("value_lr", cfg.value_lr);
  std::string pairing;
  if (obj.string("z0_pairing", pairing)) {
    if (pairing == "partial") {
      cfg.z0_pairing = Z0Pairing::partial;
    } else if (pairing == "full_cycle") {
      cfg.z0_pairing = Z0Pairing::full_cycle;
    } else {
      throw ConfigError(obj.path("z0_pairing"), "expected partial|full_cycle");
    }
  }
  obj.boolean("finite_difference_gradients", cfg.finite_difference_gradients);
  obj.number("finite_difference_step", cfg.finite_difference_step);
  obj.reject_unknown();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{
      {"lr", cfg.lr},
      {"steps", cfg.steps},
      {"batch_size", cfg.batch_size},
      {"full_batch", cfg.full_batch},
      {"optimizer", to_string(cfg.optimizer)},
      {"momentum", cfg.momentum},
      {"adam_beta1", cfg.adam_beta1},
      {"adam_beta2", cfg.adam_beta2},
      {"adam_eps", cfg.adam_eps},
      {"seed", cfg.seed},
      {"log_every", cfg.log_every},
      {"grad_tol", cfg.grad_tol},
      {"value_lr", cfg.value_lr},
      {"z0_pairing",
       cfg.z0_pairing == Z0Pairing::partial ? "partial" : "full_cycle"},
      {"finite_difference_gradients", cfg.finite_difference_gradients},
      {"finite_difference_step", cfg.finite_difference_step}};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string report_csv(const TrainReport& report) {
  std::string out =
      "step,loss,grad_norm,reward_desirable,reward_undesirable,z0,kl_to_ref\n";
  for (const TrainRow& row : report.rows) {
    out += std::to_string(row.step);
    for (double v : {row.loss, row.grad_norm, row.reward_desirable,
                     row.reward_undesirable, row.z0, row.kl_to_ref}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

json verdict_to_json(const TheoremVerdict& v) {
  return json{{"name", v.name},
              {"passed", v.passed},
              {"observed", v.observed},
              {"expected", v.expected},
              {"tolerance", v.tolerance},
              {"relation", to_string(v.relation)}};
}

json bias_variance_to_json(const BiasVarianceReport& r) {
  return json{{"m", r.m},
              {"trials", r.trials},
              {"exact_kl_mean", r.exact_kl_mean},
              {"mean_clamped", r.mean_clamped},
              {"mean_unclamped", r.mean_unclamped},
              {"var_clamped", r.var_clamped},
              {"var_unclamped", r.var_unclamped},
              {"unclamped_both_signs", r.unclamped_both_signs},
              {"clamped_bias_nonnegative", r.clamped_bias_nonnegative()},
              {"clamped_variance_not_larger", r.clamped_variance_not_larger()}};
}

}  // namespace halo
