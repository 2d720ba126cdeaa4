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

#include "halo/value.hpp"

#include <cmath>
#include <string>

#include "halo/error.hpp"
#include "halo/numeric.hpp"

namespace halo {

void KTValueParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw InvalidArgument("KT alpha must lie in (0, 1]");
  }
  if (!(lambda >= 1.0)) throw InvalidArgument("KT lambda must be >= 1");
  if (!std::isfinite(z0)) throw InvalidArgument("KT z0 must be finite");
}

void LogisticValueParams::validate() const {
  if (!(beta > 0.0) || !(lambda_D > 0.0) || !(lambda_U > 0.0)) {
    throw InvalidArgument("beta, lambda_D and lambda_U must be positive");
  }
}

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::kt_power:
      return "kt_power";
    case ValueKind::logistic_kto:
      return "logistic_kto";
    case ValueKind::concave_logsigmoid:
      return "concave_logsigmoid";
    case ValueKind::risk_neutral_identity:
      return "risk_neutral_identity";
  }
  return "unknown";
}

ValueKind value_kind_from_string(std::string_view name) {
  for (ValueKind k :
       {ValueKind::kt_power, ValueKind::logistic_kto,
        ValueKind::concave_logsigmoid, ValueKind::risk_neutral_identity}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown value kind '" + std::string(name) + "'");
}

double kt_value(double z, const KTValueParams& params) {
  params.validate();
  if (z >= params.z0) return std::pow(z - params.z0, params.alpha);
  return -params.lambda * std::pow(params.z0 - z, params.alpha);
}

double kto_value(double r, double z0, Label label,
                 const LogisticValueParams& params) {
  params.validate();
  const double z = params.beta * (r - z0);
  if (label == Label::desirable) return params.lambda_D * sigmoid(z);
  return params.lambda_U * sigmoid(-z);
}

double ablation_value(double r, double z0, Label label, ValueKind kind,
                      const LogisticValueParams& params) {
  params.validate();
  const double sign = label == Label::desirable ? 1.0 : -1.0;
  const double z = sign * params.beta * (r - z0);
  switch (kind) {
    case ValueKind::concave_logsigmoid:
      return log_sigmoid(z);
    case ValueKind::risk_neutral_identity:
      return z;
    default:
      throw InvalidArgument("ablation_value takes concave_logsigmoid or "
                            "risk_neutral_identity");
  }
}

}  // namespace halo
