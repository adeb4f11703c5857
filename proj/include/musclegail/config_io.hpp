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

#ifndef MUSCLEGAIL_CONFIG_IO_HPP_
#define MUSCLEGAIL_CONFIG_IO_HPP_

// JSON forms of the configuration structs. Readers reject unknown keys and
// wrongly typed values with ConfigError; absent keys keep their defaults.

#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "musclegail/errors.hpp"
#include "musclegail/explore.hpp"
#include "musclegail/gail.hpp"
#include "musclegail/limb_env.hpp"

namespace musclegail {

using json = nlohmann::json;

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) { return fmt::format("{:016x}", h); }

// Strict view of one JSON object section.
class Section {
 public:
  Section(const json& j, std::string name, std::initializer_list<const char*> keys)
      : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("'" + name_ + "' must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) const { return j_.at(key); }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("'" + name_ + "." + key + "' has the wrong type");
    }
  }

 private:
  const json& j_;
  std::string name_;
};

// ---------------------------------------------------------------------------

inline json to_json(const LimbConfig& c) {
  return {{"dt", c.dt},
          {"physics_substeps", c.physics_substeps},
          {"filter_substeps", c.filter_substeps},
          {"gravity", c.gravity},
          {"link_length", c.link_length},
          {"link_mass", c.link_mass},
          {"joint_damping", c.joint_damping},
          {"ground_height", c.ground_height},
          {"contact_width", c.contact_width},
          {"stance_gain", c.stance_gain},
          {"body_drag", c.body_drag},
          {"target_velocity", c.target_velocity},
          {"joint_limit", c.joint_limit},
          {"collapse_height", c.collapse_height},
          {"max_episode_steps", c.max_episode_steps},
          {"initial_angles", c.initial_angles},
          {"initial_noise", c.initial_noise}};
}

// Muscles always come from the default twelve-MTU layout.
inline LimbConfig limb_config_from_json(const json& j) {
  LimbConfig c = LimbConfig::default_config();
  const Section s(j, "env",
                  {"dt", "physics_substeps", "filter_substeps", "gravity", "link_length",
                   "link_mass", "joint_damping", "ground_height", "contact_width", "stance_gain",
                   "body_drag", "target_velocity", "joint_limit", "collapse_height",
                   "max_episode_steps", "initial_angles", "initial_noise"});
  s.get("dt", c.dt);
  s.get("physics_substeps", c.physics_substeps);
  s.get("filter_substeps", c.filter_substeps);
  s.get("gravity", c.gravity);
  s.get("link_length", c.link_length);
  s.get("link_mass", c.link_mass);
  s.get("joint_damping", c.joint_damping);
  s.get("ground_height", c.ground_height);
  s.get("contact_width", c.contact_width);
  s.get("stance_gain", c.stance_gain);
  s.get("body_drag", c.body_drag);
  s.get("target_velocity", c.target_velocity);
  s.get("joint_limit", c.joint_limit);
  s.get("collapse_height", c.collapse_height);
  s.get("max_episode_steps", c.max_episode_steps);
  s.get("initial_angles", c.initial_angles);
  s.get("initial_noise", c.initial_noise);
  c.validate();
  return c;
}

inline json to_json(const PolicyConfig& c) {
  return {{"family", to_string(c.family)},
          {"hidden", c.hidden},
          {"init_std", c.init_std},
          {"init_mean", c.init_mean},
          {"output_scale", c.output_scale},
          {"beta_unimodal", c.beta_unimodal},
          {"latent_init_std_action", c.latent_init_std_action},
          {"latent_init_std_latent", c.latent_init_std_latent},
          {"latent_init_weight_scale", c.latent_init_weight_scale}};
}

inline PolicyConfig policy_config_from_json(const json& j) {
  PolicyConfig c;
  const Section s(j, "policy",
                  {"family", "hidden", "init_std", "init_mean", "output_scale", "beta_unimodal",
                   "latent_init_std_action", "latent_init_std_latent",
                   "latent_init_weight_scale"});
  std::string family = to_string(c.family);
  s.get("family", family);
  c.family = distribution_kind_from_string(family);
  s.get("hidden", c.hidden);
  s.get("init_std", c.init_std);
  s.get("init_mean", c.init_mean);
  s.get("output_scale", c.output_scale);
  s.get("beta_unimodal", c.beta_unimodal);
  s.get("latent_init_std_action", c.latent_init_std_action);
  s.get("latent_init_std_latent", c.latent_init_std_latent);
  s.get("latent_init_weight_scale", c.latent_init_weight_scale);
  c.validate();
  return c;
}

inline json to_json(const ObjectiveConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"lambda_entropy", c.lambda_entropy},
          {"lambda_target_entropy", c.lambda_target_entropy},
          {"target_entropy", c.target_entropy},
          {"lambda_flipped_kl", c.lambda_flipped_kl},
          {"oob_scale", c.oob_scale}};
}

inline ObjectiveConfig objective_config_from_json(const json& j) {
  ObjectiveConfig c;
  const Section s(j, "objective",
                  {"mode", "lambda_entropy", "lambda_target_entropy", "target_entropy",
                   "lambda_flipped_kl", "oob_scale"});
  std::string mode = to_string(c.mode);
  s.get("mode", mode);
  c.mode = objective_mode_from_string(mode);
  s.get("lambda_entropy", c.lambda_entropy);
  s.get("lambda_target_entropy", c.lambda_target_entropy);
  s.get("target_entropy", c.target_entropy);
  s.get("lambda_flipped_kl", c.lambda_flipped_kl);
  s.get("oob_scale", c.oob_scale);
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"max_kl", c.max_kl},
          {"cg_iterations", c.cg_iterations},
          {"cg_damping", c.cg_damping},
          {"line_search_shrink", c.line_search_shrink},
          {"line_search_steps", c.line_search_steps},
          {"normalize_advantages", c.normalize_advantages},
          {"entropy_samples", c.entropy_samples},
          {"critic_hidden", c.critic_hidden},
          {"critic_learning_rate", c.critic_learning_rate},
          {"critic_epochs", c.critic_epochs},
          {"critic_minibatch", c.critic_minibatch},
          {"disc_hidden", c.disc_hidden},
          {"disc_learning_rate", c.disc_learning_rate},
          {"disc_epochs", c.disc_epochs},
          {"disc_minibatch", c.disc_minibatch},
          {"steps_per_iteration", c.steps_per_iteration},
          {"total_steps", c.total_steps},
          {"reset_from_expert", c.reset_from_expert}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const Section s(j, "train",
                  {"gamma", "gae_lambda", "max_kl", "cg_iterations", "cg_damping",
                   "line_search_shrink", "line_search_steps", "normalize_advantages",
                   "entropy_samples", "critic_hidden", "critic_learning_rate", "critic_epochs",
                   "critic_minibatch", "disc_hidden", "disc_learning_rate", "disc_epochs",
                   "disc_minibatch", "steps_per_iteration", "total_steps",
                   "reset_from_expert"});
  s.get("gamma", c.gamma);
  s.get("gae_lambda", c.gae_lambda);
  s.get("max_kl", c.max_kl);
  s.get("cg_iterations", c.cg_iterations);
  s.get("cg_damping", c.cg_damping);
  s.get("line_search_shrink", c.line_search_shrink);
  s.get("line_search_steps", c.line_search_steps);
  s.get("normalize_advantages", c.normalize_advantages);
  s.get("entropy_samples", c.entropy_samples);
  s.get("critic_hidden", c.critic_hidden);
  s.get("critic_learning_rate", c.critic_learning_rate);
  s.get("critic_epochs", c.critic_epochs);
  s.get("critic_minibatch", c.critic_minibatch);
  s.get("disc_hidden", c.disc_hidden);
  s.get("disc_learning_rate", c.disc_learning_rate);
  s.get("disc_epochs", c.disc_epochs);
  s.get("disc_minibatch", c.disc_minibatch);
  s.get("steps_per_iteration", c.steps_per_iteration);
  s.get("total_steps", c.total_steps);
  s.get("reset_from_expert", c.reset_from_expert);
  c.validate();
  return c;
}

// Flat vectors and matrices.
inline json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const json& j, const std::string& what) {
  try {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  } catch (const json::exception&) {
    throw ConfigError("'" + what + "' must be an array of numbers");
  }
}

inline json segments_to_json(const std::vector<ParamSegment>& segs) {
  json a = json::array();
  for (const auto& s : segs) a.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  return a;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_CONFIG_IO_HPP_
