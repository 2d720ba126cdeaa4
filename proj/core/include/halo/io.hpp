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

#ifndef HALO_IO_HPP_
#define HALO_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "halo/klref.hpp"
#include "halo/losses.hpp"
#include "halo/oracles.hpp"
#include "halo/policy.hpp"
#include "halo/error.hpp"
#include "halo/trainer.hpp"

namespace halo {

// Field-by-field strict reader over one JSON object. Every key read (or
// probed with has) counts as known for reject_unknown.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string prefix)
      : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_, "expected an object");
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  bool has(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    out = v.get<double>();
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_number_integer()) {
      throw ConfigError(path(key), "expected an integer");
    }
    if (v.is_number_unsigned()) {
      out = static_cast<Int>(v.get<std::uint64_t>());
    } else {
      out = static_cast<Int>(v.get<std::int64_t>());
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected a boolean");
    out = v.get<bool>();
  }

  bool string(const std::string& key, std::string& out) {
    if (!has(key)) return false;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    out = v.get<std::string>();
    return true;
  }

  // Enum fields: the parser's InvalidArgument becomes a ConfigError.
  template <class Parse, class T>
  void choice(const std::string& key, Parse parse, T& out) {
    std::string s;
    if (!string(key, s)) return;
    try {
      out = parse(s);
    } catch (const InvalidArgument& e) {
      throw ConfigError(path(key), e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : j_.items()) {
      bool known = false;
      for (const auto& s : seen_) known = known || s == key;
      if (!known) throw ConfigError(path(key), "unknown field");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::vector<std::string> seen_;
};

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// {"kind": "tabular"|"markov", "V", "L", "X", "k" (markov only),
//  "logits": [[...] per context]}.
nlohmann::json policy_to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

// {"V", "L", "X", "values": [[...] per context]}.
nlohmann::json reward_to_json(const RewardTable& r);
RewardTable reward_from_json(const nlohmann::json& j);

// Strict readers: unknown fields and wrong types raise ConfigError naming
// the field as "<prefix>.<field>". Missing fields keep their defaults
// (LossSpec::defaults_for(kind) for the loss).
LossSpec loss_spec_from_json(const nlohmann::json& j,
                             const std::string& prefix = "loss");
nlohmann::json loss_spec_to_json(const LossSpec& spec);
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const std::string& prefix = "train");
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// One line per logged step; numbers carry 17 significant digits.
std::string report_csv(const TrainReport& report);

nlohmann::json verdict_to_json(const TheoremVerdict& v);
nlohmann::json bias_variance_to_json(const BiasVarianceReport& r);

// Round-trip decimal form with 17 significant digits.
std::string format_double(double v);

}  // namespace halo

#endif  // HALO_IO_HPP_
