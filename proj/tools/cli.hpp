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

#ifndef HALO_TOOLS_CLI_HPP_
#define HALO_TOOLS_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "halo/data.hpp"
#include "halo/losses.hpp"
#include "halo/policy.hpp"
#include "halo/trainer.hpp"

namespace halo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// A parsed `train --config` document with datasets generated or loaded and
// policies built.
struct RunConfig {
  Dataset data;
  Policy initial;
  Policy reference;
  LossSpec loss;
  TrainConfig train;
  std::filesystem::path output_dir;
};

// Relative paths inside the document resolve against `base_dir`. Throws
// ConfigError on schema violations.
RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir);

// Entry point shared by the `halo` binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace halo::cli

#endif  // HALO_TOOLS_CLI_HPP_
