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

#include "halo/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "halo/error.hpp"
#include "halo/io.hpp"

namespace halo {

using nlohmann::json;

void Dataset::validate() const {
  const OutputSpace sp = space();
  if (meta.contexts < 1) throw InvalidArgument("dataset needs X >= 1");
  auto check = [&](Context x, const Output& y) {
    if (x < 0 || x >= meta.contexts) {
      throw InvalidArgument("record context " + std::to_string(x) +
                            " outside [0, X)");
    }
    if (!sp.contains(y)) {
      throw InvalidArgument("record output outside the (V, L) space");
    }
  };
  for (const auto& p : pairs) {
    check(p.x, p.chosen);
    check(p.x, p.rejected);
    if (p.chosen == p.rejected) {
      throw InvalidArgument("preference pair with identical outputs");
    }
  }
  for (const auto& f : feedback) check(f.x, f.y);
}

std::vector<FeedbackExample> preferences_to_binary(
    std::span<const PreferencePair> pairs) {
  std::vector<FeedbackExample> out;
  out.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    out.push_back({p.x, p.chosen, Label::desirable});
    out.push_back({p.x, p.rejected, Label::undesirable});
  }
  return out;
}

std::vector<FeedbackExample> one_y_per_x(std::span<const PreferencePair> pairs,
                                         Rng& rng) {
  std::vector<FeedbackExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (uniform01(rng) < 0.5) {
      out.push_back({p.x, p.chosen, Label::desirable});
    } else {
      out.push_back({p.x, p.rejected, Label::undesirable});
    }
  }
  return out;
}

std::vector<FeedbackExample> subsample_desirable(
    std::span<const FeedbackExample> feedback, const ImbalanceSpec& spec) {
  const double f = spec.keep_desirable_fraction;
  if (!(f > 0.0 && f <= 1.0)) {
    throw InvalidArgument("keep_desirable_fraction must lie in (0, 1]");
  }
  Rng rng = make_rng(spec.seed, "subsample_desirable");
  std::vector<FeedbackExample> out;
  for (const auto& ex : feedback) {
    if (ex.label == Label::undesirable) {
      out.push_back(ex);
      continue;
    }
    // One draw per desirable record, so the kept set is a fixed function of
    // the seed and the record order.
    if (uniform01(rng) < f) out.push_back(ex);
  }
  return out;
}

double effective_ratio(const LambdaWeights& w, long n_D, long n_U) {
  return (w.lambda_D * static_cast<double>(n_D)) /
         (w.lambda_U * static_cast<double>(n_U));
}

LambdaWeights recommended_lambdas(long n_D, long n_U, double target_ratio) {
  if (n_D < 1 || n_U < 1) {
    throw InvalidArgument("need at least one example of each label");
  }
  if (!(target_ratio >= 1.0 && target_ratio <= 1.5)) {
    throw InvalidArgument("target ratio must lie in [1, 1.5]");
  }
  const double d = static_cast<double>(n_D);
  const double u = static_cast<double>(n_U);
  if (n_D < n_U) return {target_ratio * u / d, 1.0};
  return {1.0, d / (target_ratio * u)};
}

Dataset gen_contradictory(double p, int n) {
  if (!(p > 0.5 && p <= 1.0)) throw InvalidArgument("p must lie in (0.5, 1]");
  if (n < 1) throw InvalidArgument("n must be >= 1");
  const long majority = std::lround(p * static_cast<double>(n));
  Dataset d;
  d.meta = {2, 1, 1};
  const Output a{0};
  const Output b{1};
  for (long i = 0; i < n; ++i) {
    const bool prefers_a = ((i + 1) * majority) / n > (i * majority) / n;
    if (prefers_a) {
      d.pairs.push_back({0, a, b});
    } else {
      d.pairs.push_back({0, b, a});
    }
  }
  return d;
}

Dataset gen_random(int vocab, int max_len, int contexts, int n,
                   std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("n must be >= 1");
  if (contexts < 1) throw InvalidArgument("X must be >= 1");
  Dataset d;
  d.meta = {vocab, max_len, contexts};
  const OutputSpace sp = d.space();
  Rng reward_rng = make_rng(seed, "gen_random/reward");
  std::vector<double> reward(static_cast<std::size_t>(contexts) * sp.size());
  for (double& r : reward) r = gaussian(reward_rng);
  Rng rng = make_rng(seed, "gen_random/pairs");
  for (int i = 0; i < n; ++i) {
    const Context x = static_cast<Context>(uniform_index(rng, contexts));
    const std::size_t a = uniform_index(rng, sp.size());
    std::size_t b = uniform_index(rng, sp.size() - 1);
    if (b >= a) ++b;
    const std::size_t base = static_cast<std::size_t>(x) * sp.size();
    const double p_a = 1.0 / (1.0 + std::exp(reward[base + b] -
                                             reward[base + a]));
    if (uniform01(rng) < p_a) {
      d.pairs.push_back({x, sp.at(a), sp.at(b)});
    } else {
      d.pairs.push_back({x, sp.at(b), sp.at(a)});
    }
  }
  return d;
}

std::vector<Output> separable_targets(int vocab, int max_len, int contexts,
                                      std::uint64_t seed) {
  const OutputSpace sp(vocab, max_len);
  Rng rng = make_rng(seed, "gen_separable/targets");
  std::vector<Output> out;
  for (int x = 0; x < contexts; ++x) {
    out.push_back(sp.at(uniform_index(rng, sp.size())));
  }
  return out;
}

Dataset gen_separable(int vocab, int max_len, int contexts, int reps,
                      std::uint64_t seed) {
  if (reps < 1) throw InvalidArgument("reps must be >= 1");
  Dataset d;
  d.meta = {vocab, max_len, contexts};
  const OutputSpace sp = d.space();
  const auto targets = separable_targets(vocab, max_len, contexts, seed);
  for (int r = 0; r < reps; ++r) {
    for (int x = 0; x < contexts; ++x) {
      const std::size_t good = sp.index_of(targets[static_cast<std::size_t>(x)]);
      for (std::size_t j = 0; j < sp.size(); ++j) {
        if (j != good) {
          d.pairs.push_back({x, targets[static_cast<std::size_t>(x)], sp.at(j)});
        }
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// JSON lines

namespace {

Output parse_tokens(const json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw ParseError(std::string("missing array field '") + field + "'", line);
  }
  Output y;
  for (const auto& t : j[field]) {
    if (!t.is_number_integer()) {
      throw ParseError(std::string("non-integer token in '") + field + "'",
                       line);
    }
    y.push_back(t.get<Token>());
  }
  return y;
}

Context parse_context(const json& j, std::size_t line) {
  if (!j.contains("x") || !j["x"].is_number_integer()) {
    throw ParseError("missing integer field 'x'", line);
  }
  return j["x"].get<Context>();
}

int parse_meta_int(const json& meta, const char* field, std::size_t line) {
  if (!meta.contains(field) || !meta[field].is_number_integer()) {
    throw ParseError(std::string("meta record needs integer '") + field + "'",
                     line);
  }
  return meta[field].get<int>();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path.string(), 0);
  Dataset d;
  bool have_meta = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!j.is_object()) throw ParseError("record is not an object", line);
    if (j.contains("meta")) {
      const json& meta = j["meta"];
      d.meta = {parse_meta_int(meta, "V", line), parse_meta_int(meta, "L", line),
                parse_meta_int(meta, "X", line)};
      have_meta = true;
    } else if (j.contains("yw") || j.contains("yl")) {
      d.pairs.push_back({parse_context(j, line), parse_tokens(j, "yw", line),
                         parse_tokens(j, "yl", line)});
    } else if (j.contains("label")) {
      const json& label = j["label"];
      if (!label.is_string() || (label != "D" && label != "U")) {
        throw ParseError("label must be \"D\" or \"U\"", line);
      }
      d.feedback.push_back({parse_context(j, line), parse_tokens(j, "y", line),
                            label == "D" ? Label::desirable
                                         : Label::undesirable});
    } else {
      throw ParseError("record is neither meta, pair nor feedback", line);
    }
  }
  if (!have_meta) {
    DatasetMeta inferred{2, 1, 1};
    auto widen = [&](Context x, const Output& y) {
      inferred.contexts = std::max(inferred.contexts, x + 1);
      inferred.max_len =
          std::max(inferred.max_len, static_cast<int>(y.size()));
      for (Token t : y) inferred.vocab = std::max(inferred.vocab, t + 1);
    };
    for (const auto& p : d.pairs) {
      widen(p.x, p.chosen);
      widen(p.x, p.rejected);
    }
    for (const auto& f : d.feedback) widen(f.x, f.y);
    d.meta = inferred;
  }
  d.validate();
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream out;
  out << json{{"meta",
               {{"V", data.meta.vocab},
                {"L", data.meta.max_len},
                {"X", data.meta.contexts}}}}
             .dump()
      << '\n';
  for (const auto& p : data.pairs) {
    out << json{{"x", p.x}, {"yw", p.chosen}, {"yl", p.rejected}}.dump()
        << '\n';
  }
  for (const auto& f : data.feedback) {
    out << json{{"x", f.x},
                {"y", f.y},
                {"label", f.label == Label::desirable ? "D" : "U"}}
               .dump()
        << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace halo
