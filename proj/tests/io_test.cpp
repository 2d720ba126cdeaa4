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

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "halo/error.hpp"
#include "halo/rng.hpp"

namespace halo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("halo_io_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config_error_path(const auto& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

TEST(PolicyJsonTest, TabularRoundTripIsBitExact) {
  Rng rng = make_rng(1, "io");
  TabularPolicy p(2, OutputSpace(3, 2));
  for (double& v : p.params()) v = gaussian(rng) * 1e3;
  p.params()[0] = 0.1;
  p.params()[1] = -std::numeric_limits<double>::min();
  // Through text, not just through the json value.
  const json j = json::parse(policy_to_json(Policy(p)).dump());
  const Policy back = policy_from_json(j);
  ASSERT_EQ(back.num_params(), p.params().size());
  for (std::size_t i = 0; i < p.params().size(); ++i) {
    EXPECT_EQ(back.params()[i], p.params()[i]) << i;
  }
}

TEST(PolicyJsonTest, MarkovRoundTripKeepsDistribution) {
  Rng rng = make_rng(2, "io");
  MarkovPolicy p(2, OutputSpace(2, 3), 1);
  for (double& v : p.params()) v = gaussian(rng);
  const Policy back = policy_from_json(json::parse(policy_to_json(Policy(p)).dump()));
  const Policy orig(p);
  for (Context x = 0; x < 2; ++x) {
    EXPECT_EQ(back.distribution(x), orig.distribution(x));
  }
}

TEST(PolicyJsonTest, MalformedRejected) {
  json j = policy_to_json(Policy(TabularPolicy(1, OutputSpace(2, 1))));
  j["logits"][0].push_back(1.0);
  EXPECT_EQ(config_error_path([&] { policy_from_json(j); }), "policy.logits[0]");
  j = policy_to_json(Policy(TabularPolicy(1, OutputSpace(2, 1))));
  j["kind"] = "lstm";
  EXPECT_EQ(config_error_path([&] { policy_from_json(j); }), "policy.kind");
  j["kind"] = "tabular";
  j["L"] = 0;
  EXPECT_EQ(config_error_path([&] { policy_from_json(j); }), "policy.L");
  j["L"] = 1;
  j["extra"] = true;
  EXPECT_EQ(config_error_path([&] { policy_from_json(j); }), "policy.extra");
}

TEST(RewardJsonTest, RoundTrip) {
  const RewardTable r(1, OutputSpace(2, 1), {0.25, -3.5});
  const RewardTable back = reward_from_json(json::parse(reward_to_json(r).dump()));
  EXPECT_EQ(back.at(0, 0), 0.25);
  EXPECT_EQ(back.at(0, 1), -3.5);
}

TEST(LossSpecJsonTest, DefaultsAndRoundTrip) {
  const LossSpec kto = loss_spec_from_json(json{{"kind", "kto"}, {"beta", 0.3}});
  EXPECT_EQ(kto.kind, LossKind::kto);
  EXPECT_EQ(kto.beta, 0.3);
  EXPECT_EQ(kto.lambda_D, LossSpec::defaults_for(LossKind::kto).lambda_D);
  const LossSpec back = loss_spec_from_json(loss_spec_to_json(kto));
  EXPECT_EQ(loss_spec_to_json(back), loss_spec_to_json(kto));
}

TEST(LossSpecJsonTest, ErrorsCarryFieldPath) {
  EXPECT_EQ(config_error_path([] { loss_spec_from_json(json::object()); }),
            "loss.kind");
  EXPECT_EQ(config_error_path(
                [] { loss_spec_from_json(json{{"kind", "dpo"}, {"betta", 1}}); }),
            "loss.betta");
  EXPECT_EQ(config_error_path(
                [] { loss_spec_from_json(json{{"kind", "dpo"}, {"beta", "x"}}); }),
            "loss.beta");
  EXPECT_EQ(config_error_path([] { loss_spec_from_json(json{{"kind", "ipo"}}); }),
            "loss.kind");
  EXPECT_THROW(loss_spec_from_json(json{{"kind", "dpo"}, {"beta", -1.0}}),
               Error);
}

TEST(TrainConfigJsonTest, RoundTripAndErrors) {
  TrainConfig cfg;
  cfg.lr = 0.125;
  cfg.steps = 77;
  cfg.seed = 123456789012345ULL;
  cfg.full_batch = false;
  const TrainConfig back =
      train_config_from_json(json::parse(train_config_to_json(cfg).dump()));
  EXPECT_EQ(train_config_to_json(back), train_config_to_json(cfg));
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(config_error_path([] { train_config_from_json(json{{"steps", 1.5}}); }),
            "train.steps");
  EXPECT_EQ(config_error_path([] { train_config_from_json(json{{"optimizer", "lbfgs"}}); }),
            "train.optimizer");
  EXPECT_EQ(config_error_path([] { train_config_from_json(json::array()); }),
            "train");
}

TEST(AtomicWriteTest, ReplacesWholeFile) {
  const fs::path dir = scratch_dir("atomic");
  const fs::path f = dir / "out.txt";
  write_file_atomic(f, "first version, longer");
  write_file_atomic(f, "second");
  EXPECT_EQ(read_file(f), "second");
  EXPECT_FALSE(fs::exists(dir / "out.txt.tmp"));
  EXPECT_THROW(write_file_atomic(dir / "missing" / "x.txt", "x"), Error);
  EXPECT_THROW(read_file(dir / "nope.txt"), Error);
}

TEST(ReportCsvTest, HeaderAndPrecision) {
  TrainReport report;
  TrainRow row;
  row.step = 3;
  row.loss = 0.1;
  report.rows.push_back(row);
  const std::string csv = report_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "step,loss,grad_norm,reward_desirable,reward_undesirable,z0,"
            "kl_to_ref");
  EXPECT_NE(csv.find("3,0.10000000000000001,"), std::string::npos);
}

TEST(FormatDoubleTest, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

}  // namespace
}  // namespace halo
