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

#ifndef HALO_VALUE_HPP_
#define HALO_VALUE_HPP_

#include <string_view>

namespace halo {

// Kahneman-Tversky power-law value function parameters.
struct KTValueParams {
  double alpha = 0.88;  // curvature, in (0, 1]
  double lambda = 2.25;  // loss aversion, >= 1
  double z0 = 0.0;       // reference point

  void validate() const;
};

// Median-human parameters.
inline constexpr KTValueParams kMedianKTParams{0.88, 2.25, 0.0};

// Logistic value function used by KTO.
struct LogisticValueParams {
  double beta = 0.1;
  double lambda_D = 1.0;
  double lambda_U = 1.0;

  void validate() const;
};

enum class ValueKind {
  kt_power,
  logistic_kto,
  concave_logsigmoid,
  risk_neutral_identity,
};

std::string_view to_string(ValueKind kind);
// Throws InvalidArgument on an unknown name.
ValueKind value_kind_from_string(std::string_view name);

enum class Label { desirable, undesirable };

// (z - z0)^alpha for gains, -lambda (z0 - z)^alpha for losses.
double kt_value(double z, const KTValueParams& params);

// lambda_D sigma(beta (r - z0)) for desirable outputs,
// lambda_U sigma(beta (z0 - r)) for undesirable ones.
double kto_value(double r, double z0, Label label,
                 const LogisticValueParams& params);

// Ablated value shapes. concave_logsigmoid: log sigma(+-beta (r - z0));
// risk_neutral_identity: +-beta (r - z0); the sign is + for desirable.
// Only those two kinds are accepted.
double ablation_value(double r, double z0, Label label, ValueKind kind,
                      const LogisticValueParams& params);

}  // namespace halo

#endif  // HALO_VALUE_HPP_
