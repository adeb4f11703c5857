// Copyright 2026 The musclegail Authors
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

#ifndef MUSCLEGAIL_CHECKPOINT_HPP_
#define MUSCLEGAIL_CHECKPOINT_HPP_

// Checkpoint file: JSON with the config hash, the environment and policy
// configs, and every network as a named flat parameter vector with its
// segment layout.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "musclegail/config_io.hpp"
#include "musclegail/errors.hpp"
#include "musclegail/gail.hpp"
#include "musclegail/synergy.hpp"

namespace musclegail {

inline constexpr const char* kCheckpointFormat = "musclegail-checkpoint-v1";

struct Checkpoint {
  std::string config_hash;
  std::uint64_t seed = 0;
  long env_steps = 0;
  LimbConfig env = LimbConfig::default_config();
  Policy policy;
  std::optional<Critic> critic;
  std::optional<Discriminator> discriminator;
  std::optional<SynergyMap> synergy;
};

inline json mlp_to_json(const Mlp& m) {
  return {{"sizes", m.sizes()},
          {"tanh_output", m.tanh_output()},
          {"layout", segments_to_json(m.layout())},
          {"params", vec_to_json(m.params())}};
}

inline Mlp mlp_from_json(const json& j, const std::string& what) {
  const Section s(j, what, {"sizes", "tanh_output", "layout", "params"});
  std::vector<int> sizes;
  bool tanh_output = false;
  s.get("sizes", sizes);
  s.get("tanh_output", tanh_output);
  if (!s.has("params")) throw ConfigError("'" + what + ".params' is missing");
  Rng rng(0);
  Mlp m;
  try {
    m = Mlp(sizes, tanh_output, rng);
  } catch (const ParameterError& e) {
    throw ConfigError("'" + what + "': " + e.what());
  }
  const Vec p = vec_from_json(s.raw("params"), what + ".params");
  if (p.size() != m.param_dim())
    throw ConfigError("'" + what + ".params' has " + std::to_string(p.size()) +
                      " entries, expected " + std::to_string(m.param_dim()));
  m.set_params(p);
  return m;
}

inline json normalizer_to_json(const RunningNormalizer& n) {
  return {{"mean", vec_to_json(n.mean())},
          {"variance", vec_to_json(n.variance())},
          {"count", n.count()},
          {"clip", n.clip()}};
}

inline RunningNormalizer normalizer_from_json(const json& j, const std::string& what) {
  const Section s(j, what, {"mean", "variance", "count", "clip"});
  double count = 0.0, clip = 10.0;
  s.get("count", count);
  s.get("clip", clip);
  if (!s.has("mean") || !s.has("variance")) throw ConfigError("'" + what + "' is incomplete");
  Vec mean = vec_from_json(s.raw("mean"), what + ".mean");
  RunningNormalizer n(static_cast<int>(mean.size()), clip);
  n.set_state(std::move(mean), vec_from_json(s.raw("variance"), what + ".variance"), count);
  return n;
}

inline json checkpoint_to_json(const Checkpoint& c) {
  const Policy& p = c.policy;
  json j;
  j["format"] = kCheckpointFormat;
  j["config_hash"] = c.config_hash;
  j["seed"] = c.seed;
  j["env_steps"] = c.env_steps;
  j["env"] = to_json(c.env);
  j["policy"] = {{"config", to_json(p.config())},
                 {"body", mlp_to_json(p.body())},
                 {"distribution",
                  {{"family", p.dist().name()},
                   {"action_dim", p.action_dim()},
                   {"layout", segments_to_json(p.dist().layout())},
                   {"params", vec_to_json(p.dist().params())}}},
                 {"obs_normalizer", normalizer_to_json(p.obs_normalizer())}};
  if (c.critic) j["critic"] = mlp_to_json(c.critic->net);
  if (c.discriminator)
    j["discriminator"] = {{"net", mlp_to_json(c.discriminator->net())},
                          {"normalizer", normalizer_to_json(c.discriminator->normalizer())}};
  if (c.synergy) j["synergy"] = c.synergy->to_json();
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  const Section top(j, "checkpoint",
                    {"format", "config_hash", "seed", "env_steps", "env", "policy", "critic",
                     "discriminator", "synergy"});
  std::string format;
  top.get("format", format);
  if (format != kCheckpointFormat) throw ConfigError("unsupported checkpoint format '" + format + "'");
  Checkpoint c;
  top.get("config_hash", c.config_hash);
  top.get("seed", c.seed);
  top.get("env_steps", c.env_steps);
  if (!top.has("env") || !top.has("policy")) throw ConfigError("checkpoint lacks env or policy");
  c.env = limb_config_from_json(top.raw("env"));
  if (top.has("synergy")) c.synergy = SynergyMap::from_json(top.raw("synergy"));

  const Section ps(top.raw("policy"), "policy", {"config", "body", "distribution", "obs_normalizer"});
  const PolicyConfig pcfg = policy_config_from_json(ps.raw("config"));
  c.policy = Policy(pcfg, kObservationDim,
                    policy_action_box(c.env, c.synergy ? &*c.synergy : nullptr), 0);
  const Mlp body = mlp_from_json(ps.raw("body"), "policy.body");
  if (body.sizes() != c.policy.body().sizes() || body.tanh_output() != c.policy.body().tanh_output())
    throw ConfigError("checkpoint policy body does not match its config");
  c.policy.body() = body;
  const Section ds(ps.raw("distribution"), "policy.distribution",
                   {"family", "action_dim", "layout", "params"});
  std::string family;
  ds.get("family", family);
  if (family != c.policy.dist().name())
    throw ConfigError("checkpoint distribution '" + family + "' does not match its config");
  try {
    c.policy.dist().set_params(vec_from_json(ds.raw("params"), "policy.distribution.params"));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("checkpoint distribution: ") + e.what());
  }
  c.policy.obs_normalizer() = normalizer_from_json(ps.raw("obs_normalizer"), "policy.obs_normalizer");
  if (top.has("critic")) c.critic = Critic{mlp_from_json(top.raw("critic"), "critic")};
  if (top.has("discriminator")) {
    const Section dsec(top.raw("discriminator"), "discriminator", {"net", "normalizer"});
    Discriminator d;
    d.net() = mlp_from_json(dsec.raw("net"), "discriminator.net");
    d.normalizer() = normalizer_from_json(dsec.raw("normalizer"), "discriminator.normalizer");
    c.discriminator = std::move(d);
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint '" + path + "'");
  os << checkpoint_to_json(c).dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint '" + path + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_CHECKPOINT_HPP_
