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

#ifndef MUSCLEGAIL_LIMB_ENV_HPP_
#define MUSCLEGAIL_LIMB_ENV_HPP_

// Planar two-joint limb (hip-like and knee-like) hanging from a body that
// moves forward. Twelve muscle-tendon units actuate the joints, three
// agonists and three antagonists per joint. Tendons are rigid, so each fiber
// length is an affine function of the joint angles.
//
// Forward progression: while the foot is below the ground line it is in
// stance, and the body velocity relaxes toward the backward sweep velocity of
// the foot; during swing the body coasts against a linear drag. The tracked
// velocity for the task reward is this body velocity.
//
// Observation layout (kObservationDim entries):
//   0 q_hip         hip angle from the downward vertical, rad, forward > 0
//   1 q_knee        knee flexion, rad
//   2 dq_hip        rad/s
//   3 dq_knee       rad/s
//   4 foot_height   foot height relative to the hip, m
//   5 body_velocity forward velocity of the body, m/s

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "musclegail/errors.hpp"
#include "musclegail/mtu.hpp"

namespace musclegail {

inline constexpr int kNumJoints = 2;
inline constexpr int kObservationDim = 6;

inline const std::array<const char*, kObservationDim>& observation_names() {
  static const std::array<const char*, kObservationDim> names = {
      "q_hip", "q_knee", "dq_hip", "dq_knee", "foot_height", "body_velocity"};
  return names;
}

struct LimbConfig {
  double dt = 0.01;
  int physics_substeps = 10;
  int filter_substeps = 2;  // RK4 sub-steps per physics sub-step (minimum)
  double gravity = 9.81;
  std::array<double, 2> link_length{0.5, 0.5};
  std::array<double, 2> link_mass{2.0, 1.0};
  double joint_damping = 0.5;  // N m s / rad
  double ground_height = -0.92;   // foot is in stance below this height
  double contact_width = 0.005;   // m, smoothing of the stance indicator
  double stance_gain = 10.0;      // 1/s
  double body_drag = 0.3;         // 1/s
  double target_velocity = 2.45;   // m/s
  double joint_limit = 2.5;       // rad
  double collapse_height = -0.97; // foot below this height is absorbing
  int max_episode_steps = 1000;
  std::array<double, 2> initial_angles{0.0, 0.6};
  double initial_noise = 0.05;
  std::vector<MtuParams> muscles;

  int num_muscles() const { return static_cast<int>(muscles.size()); }

  void validate() const {
    if (!(dt > 0)) throw ConfigError("env.dt must be > 0");
    if (physics_substeps < 1) throw ConfigError("env.physics_substeps must be >= 1");
    if (filter_substeps < 1) throw ConfigError("env.filter_substeps must be >= 1");
    for (int i = 0; i < 2; ++i) {
      if (!(link_length[i] > 0) || !(link_mass[i] > 0))
        throw ConfigError("env link lengths and masses must be > 0");
    }
    if (!(joint_damping >= 0)) throw ConfigError("env.joint_damping must be >= 0");
    if (!(contact_width > 0)) throw ConfigError("env.contact_width must be > 0");
    if (!(joint_limit > 0)) throw ConfigError("env.joint_limit must be > 0");
    if (max_episode_steps < 1) throw ConfigError("env.max_episode_steps must be >= 1");
    if (muscles.empty()) throw ConfigError("env needs at least one muscle");
    for (const auto& m : muscles) {
      m.validate();
      if (m.moment_arms.size() != kNumJoints)
        throw ConfigError("muscle '" + m.name + "' needs exactly 2 moment arms");
    }
  }

  // Twelve uniarticular muscles: hip flexors, hip extensors, knee flexors,
  // knee extensors, three agonists each with slightly different geometry.
  static LimbConfig default_config() {
    LimbConfig c;
    struct Group {
      const char* name;
      int joint;
      double sign;
      double force;
    };
    const Group groups[4] = {{"hip_flex", 0, +1.0, 500.0},
                             {"hip_ext", 0, -1.0, 500.0},
                             {"knee_flex", 1, +1.0, 400.0},
                             {"knee_ext", 1, -1.0, 400.0}};
    const double arms[3] = {0.04, 0.05, 0.06};
    const double force_share[3] = {0.3, 0.4, 0.3};
    for (const auto& g : groups) {
      for (int k = 0; k < 3; ++k) {
        MtuParams p;
        p.name = std::string(g.name) + "_" + std::to_string(k + 1);
        p.moment_arms.assign(kNumJoints, 0.0);
        p.moment_arms[g.joint] = g.sign * arms[k];
        p.optimal_length = 0.10 + 0.02 * k;
        p.max_isometric_force = g.force * force_share[k];
        p.tau_act = 0.01;
        p.tau_deact = 0.04;
        p.passive_stiffness = 2.0;
        p.rest_length = 1.0;
        p.max_shortening_velocity = 10.0;
        c.muscles.push_back(p);
      }
    }
    return c;
  }
};

struct LimbState {
  Eigen::Vector2d q = Eigen::Vector2d::Zero();
  Eigen::Vector2d dq = Eigen::Vector2d::Zero();
  std::vector<MuscleState> muscles;
  double body_velocity = 0.0;
  double t = 0.0;

  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "t=" << t << " q=[" << q(0) << ", " << q(1) << "] dq=[" << dq(0)
       << ", " << dq(1) << "] body_velocity=" << body_velocity << "\n";
    for (std::size_t i = 0; i < muscles.size(); ++i) {
      os << "  muscle " << i << ": z=" << muscles[i].activation
         << " L=" << muscles[i].length << " V=" << muscles[i].velocity << "\n";
    }
    return os.str();
  }
};

struct FootKinematics {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
};

inline FootKinematics foot_kinematics(const LimbConfig& c,
                                      const Eigen::Vector2d& q,
                                      const Eigen::Vector2d& dq) {
  const double a1 = q(0);
  const double a2 = q(0) - q(1);
  const double w1 = dq(0);
  const double w2 = dq(0) - dq(1);
  const double l1 = c.link_length[0];
  const double l2 = c.link_length[1];
  FootKinematics k;
  k.position << l1 * std::sin(a1) + l2 * std::sin(a2),
      -l1 * std::cos(a1) - l2 * std::cos(a2);
  k.velocity << l1 * std::cos(a1) * w1 + l2 * std::cos(a2) * w2,
      l1 * std::sin(a1) * w1 + l2 * std::sin(a2) * w2;
  return k;
}

// Fiber length and velocity from joint kinematics (rigid tendon).
inline void update_fiber_kinematics(const LimbConfig& c, LimbState& s) {
  for (int m = 0; m < c.num_muscles(); ++m) {
    const MtuParams& p = c.muscles[m];
    double dl = 0.0;
    double dv = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      dl += p.moment_arms[j] * s.q(j);
      dv += p.moment_arms[j] * s.dq(j);
    }
    s.muscles[m].length = p.rest_length - dl / p.optimal_length;
    s.muscles[m].velocity = -dv / p.optimal_length;
  }
}

// Net joint torques produced by the muscles in the current state.
inline Eigen::Vector2d muscle_torques(const LimbConfig& c, const LimbState& s) {
  Eigen::Vector2d tau = Eigen::Vector2d::Zero();
  for (int m = 0; m < c.num_muscles(); ++m) {
    const MtuParams& p = c.muscles[m];
    const MuscleState& ms = s.muscles[m];
    const double f = flv_force(std::max(ms.length, 1e-6), ms.velocity,
                               ms.activation, p);
    for (int j = 0; j < kNumJoints; ++j) tau(j) += p.moment_arms[j] * f;
  }
  return tau;
}

// Joint accelerations of the two-link limb for the given joint torques.
inline Eigen::Vector2d joint_accelerations(const LimbConfig& c,
                                           const Eigen::Vector2d& q,
                                           const Eigen::Vector2d& dq,
                                           const Eigen::Vector2d& tau) {
  // Absolute link angles phi1 = q_hip, phi2 = q_hip - q_knee.
  const double l1 = c.link_length[0];
  const double m1 = c.link_mass[0];
  const double m2 = c.link_mass[1];
  const double c1 = 0.5 * l1;
  const double c2 = 0.5 * c.link_length[1];
  const double i1 = m1 * l1 * l1 / 12.0;
  const double i2 = m2 * c.link_length[1] * c.link_length[1] / 12.0;
  const double phi1 = q(0);
  const double phi2 = q(0) - q(1);
  const double w1 = dq(0);
  const double w2 = dq(0) - dq(1);
  const double delta = phi1 - phi2;
  const double h = m2 * l1 * c2 * std::sin(delta);
  Eigen::Matrix2d mass;
  mass(0, 0) = i1 + m1 * c1 * c1 + m2 * l1 * l1;
  mass(0, 1) = mass(1, 0) = m2 * l1 * c2 * std::cos(delta);
  mass(1, 1) = i2 + m2 * c2 * c2;
  const double g = c.gravity;
  Eigen::Vector2d rhs;
  // Generalized forces on (phi1, phi2) from joint torques: power is
  // tau_hip dq_hip + tau_knee dq_knee = (tau_hip + tau_knee) w1 - tau_knee w2.
  const Eigen::Vector2d joint_tau = tau - c.joint_damping * dq;
  rhs(0) = joint_tau(0) + joint_tau(1) - h * w2 * w2 -
           (m1 * c1 + m2 * l1) * g * std::sin(phi1);
  rhs(1) = -joint_tau(1) + h * w1 * w1 - m2 * c2 * g * std::sin(phi2);
  const Eigen::Vector2d acc = mass.inverse() * rhs;
  return {acc(0), acc(0) - acc(1)};
}

inline double kinetic_energy(const LimbConfig& c, const Eigen::Vector2d& q,
                             const Eigen::Vector2d& dq) {
  const double l1 = c.link_length[0];
  const double l2 = c.link_length[1];
  const double m1 = c.link_mass[0];
  const double m2 = c.link_mass[1];
  const double c1 = 0.5 * l1;
  const double c2 = 0.5 * l2;
  const double w1 = dq(0);
  const double w2 = dq(0) - dq(1);
  const double delta = q(1);
  return 0.5 * (m1 * l1 * l1 / 12.0 + m1 * c1 * c1) * w1 * w1 +
         0.5 * m2 * (l1 * l1 * w1 * w1 + c2 * c2 * w2 * w2 +
                     2.0 * l1 * c2 * w1 * w2 * std::cos(delta)) +
         0.5 * (m2 * l2 * l2 / 12.0) * w2 * w2;
}

inline Eigen::VectorXd observe(const LimbConfig& c, const LimbState& s) {
  Eigen::VectorXd obs(kObservationDim);
  const FootKinematics foot = foot_kinematics(c, s.q, s.dq);
  obs << s.q(0), s.q(1), s.dq(0), s.dq(1), foot.position(1), s.body_velocity;
  return obs;
}

inline double stance_weight(const LimbConfig& c, double foot_height) {
  return 1.0 / (1.0 + std::exp((foot_height - c.ground_height) / c.contact_width));
}

inline double task_reward(const LimbConfig& c, double velocity) {
  const double e = velocity - c.target_velocity;
  return std::exp(-e * e);
}

inline bool is_absorbing(const LimbConfig& c, const LimbState& s) {
  if (std::abs(s.q(0)) > c.joint_limit || std::abs(s.q(1)) > c.joint_limit)
    return true;
  return foot_kinematics(c, s.q, s.dq).position(1) < c.collapse_height;
}

inline LimbState make_state(const LimbConfig& c, const Eigen::Vector2d& q,
                            const Eigen::Vector2d& dq, double body_velocity = 0.0) {
  LimbState s;
  s.q = q;
  s.dq = dq;
  s.body_velocity = body_velocity;
  s.muscles.assign(c.muscles.size(), MuscleState{});
  update_fiber_kinematics(c, s);
  return s;
}

// Inverse of `observe` up to the hidden muscle activations, which are zero.
inline LimbState state_from_observation(const LimbConfig& c,
                                        std::span<const double> obs) {
  if (obs.size() != kObservationDim)
    throw DomainError("state_from_observation: wrong observation size");
  return make_state(c, Eigen::Vector2d(obs[0], obs[1]),
                    Eigen::Vector2d(obs[2], obs[3]), obs[5]);
}

struct StepResult {
  LimbState state;
  double task_reward = 0.0;
  bool absorbing = false;
};

// One control step: clamp the action into [0, 1], advance activations, apply
// muscle torques and integrate the limb with semi-implicit Euler.
inline StepResult env_step(const LimbConfig& c, const LimbState& state,
                           std::span<const double> action, double dt) {
  if (static_cast<int>(action.size()) != c.num_muscles())
    throw DomainError("env_step: action has " + std::to_string(action.size()) +
                      " entries, expected " + std::to_string(c.num_muscles()));
  if (!(dt > 0)) throw ConfigError("env_step: dt must be > 0");
  StepResult r;
  r.state = state;
  LimbState& s = r.state;
  const int n = c.physics_substeps;
  const double h = dt / n;
  for (int k = 0; k < n; ++k) {
    for (int m = 0; m < c.num_muscles(); ++m) {
      const double a = std::isfinite(action[m]) ? std::clamp(action[m], 0.0, 1.0) : 0.0;
      s.muscles[m].activation = activation_step(s.muscles[m].activation, a, h,
                                                c.muscles[m], c.filter_substeps);
    }
    update_fiber_kinematics(c, s);
    const Eigen::Vector2d tau = muscle_torques(c, s);
    const Eigen::Vector2d acc = joint_accelerations(c, s.q, s.dq, tau);
    s.dq += h * acc;
    s.q += h * s.dq;
    const FootKinematics foot = foot_kinematics(c, s.q, s.dq);
    const double w = stance_weight(c, foot.position(1));
    const double dv = w * c.stance_gain * (-foot.velocity(0) - s.body_velocity) -
                      c.body_drag * s.body_velocity;
    s.body_velocity += h * dv;
    s.t += h;
    if (!s.q.allFinite() || !s.dq.allFinite() || !std::isfinite(s.body_velocity))
      throw SimulationFault("env_step: non-finite limb state", s.dump());
  }
  update_fiber_kinematics(c, s);
  r.task_reward = task_reward(c, s.body_velocity);
  r.absorbing = is_absorbing(c, s);
  return r;
}

// Episode bookkeeping around env_step. Not thread-safe; use one instance per
// thread.
class LimbEnv {
 public:
  explicit LimbEnv(LimbConfig config) : config_(std::move(config)) {
    config_.validate();
    state_ = make_state(config_, Eigen::Vector2d(config_.initial_angles[0],
                                                 config_.initial_angles[1]),
                        Eigen::Vector2d::Zero());
  }

  const LimbConfig& config() const { return config_; }
  int action_dim() const { return config_.num_muscles(); }
  static constexpr int observation_dim() { return kObservationDim; }
  const LimbState& state() const { return state_; }
  int episode_step() const { return episode_step_; }

  // Restarts near the configured initial posture, or, when reset states are
  // registered, at a uniformly drawn one of them.
  template <class Rng>
  Eigen::VectorXd reset(Rng& rng) {
    std::uniform_real_distribution<double> noise(-config_.initial_noise,
                                                 config_.initial_noise);
    if (!reset_states_.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, reset_states_.size() - 1);
      const Eigen::VectorXd& obs = reset_states_[pick(rng)];
      state_ = state_from_observation(config_, {obs.data(), static_cast<std::size_t>(obs.size())});
    } else {
      const double q0 = config_.initial_angles[0] + noise(rng);
      const double q1 = config_.initial_angles[1] + noise(rng);
      state_ = make_state(config_, Eigen::Vector2d(q0, q1), Eigen::Vector2d::Zero());
    }
    episode_step_ = 0;
    return observe(config_, state_);
  }

  void set_reset_states(std::vector<Eigen::VectorXd> states) {
    reset_states_ = std::move(states);
  }

  struct Transition {
    Eigen::VectorXd observation;
    double task_reward = 0.0;
    bool absorbing = false;
    bool truncated = false;  // episode step cap reached
  };

  Transition step(std::span<const double> action) {
    StepResult r = env_step(config_, state_, action, config_.dt);
    state_ = std::move(r.state);
    ++episode_step_;
    Transition t;
    t.observation = observe(config_, state_);
    t.task_reward = r.task_reward;
    t.absorbing = r.absorbing;
    t.truncated = !r.absorbing && episode_step_ >= config_.max_episode_steps;
    return t;
  }

 private:
  LimbConfig config_;
  LimbState state_;
  int episode_step_ = 0;
  std::vector<Eigen::VectorXd> reset_states_;
};

}  // namespace musclegail

#endif  // MUSCLEGAIL_LIMB_ENV_HPP_
