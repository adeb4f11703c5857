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

#ifndef MUSCLEGAIL_MTU_HPP_
#define MUSCLEGAIL_MTU_HPP_

// Muscle-tendon unit model: the FLV force law and the first-order
// activation filter. Lengths are normalized by the optimal fiber length and
// velocities are in optimal lengths per second.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "musclegail/errors.hpp"

namespace musclegail {

// Shape constants of the force curves.
inline constexpr double kForceLengthWidth = 0.45;
inline constexpr double kForceVelocityCurvature = 0.25;
inline constexpr double kForceVelocityLengtheningScale = 0.08;
inline constexpr double kMaxEccentricForce = 1.4;

struct MtuParams {
  std::string name;
  double optimal_length = 0.1;        // L0 in meters, normalizes lengths
  double max_isometric_force = 100.0;  // F_max, N
  double tau_act = 0.01;               // s
  double tau_deact = 0.04;             // s
  std::vector<double> moment_arms;     // m, one per joint
  double passive_stiffness = 2.0;      // multiples of F_max per unit stretch^2
  double rest_length = 1.0;            // normalized fiber length at q = 0
  double max_shortening_velocity = 10.0;  // L0/s

  // Throws ConfigError when an invariant does not hold.
  void validate() const {
    auto bad = [&](const std::string& msg) {
      throw ConfigError("muscle '" + name + "': " + msg);
    };
    if (!(optimal_length > 0)) bad("optimal_length must be > 0");
    if (!(max_isometric_force > 0)) bad("max_isometric_force must be > 0");
    if (!(tau_act > 0) || !(tau_deact > 0)) bad("time constants must be > 0");
    if (!(passive_stiffness >= 0)) bad("passive_stiffness must be >= 0");
    if (!(rest_length > 0)) bad("rest_length must be > 0");
    if (!(max_shortening_velocity > 0)) bad("max_shortening_velocity must be > 0");
    if (std::none_of(moment_arms.begin(), moment_arms.end(),
                     [](double r) { return r != 0.0; }))
      bad("needs at least one nonzero moment arm");
  }
};

struct MuscleState {
  double activation = 0.0;  // z in [0, 1]
  double length = 1.0;      // normalized
  double velocity = 0.0;    // normalized, positive when lengthening
};

// Active force-length curve, a Gaussian bell with peak 1 at L = 1.
inline double force_length(double length) {
  const double x = (length - 1.0) / kForceLengthWidth;
  return std::exp(-x * x);
}

// Hill force-velocity curve with F_V(0) = 1, zero at maximal shortening
// velocity and saturating toward the eccentric plateau. The lengthening
// branch is matched in slope at V = 0.
inline double force_velocity(double velocity, double max_shortening_velocity) {
  const double v = velocity / max_shortening_velocity;
  double f;
  if (v <= -1.0) {
    f = 0.0;
  } else if (v <= 0.0) {
    f = (1.0 + v) / (1.0 - v / kForceVelocityCurvature);
  } else {
    f = 1.0 + (kMaxEccentricForce - 1.0) * v / (v + kForceVelocityLengtheningScale);
  }
  return std::clamp(f, 0.0, kMaxEccentricForce);
}

// Quadratic passive element, zero up to the optimal length.
inline double force_passive(double length, double stiffness) {
  const double stretch = std::max(0.0, length - 1.0);
  return stiffness * stretch * stretch;
}

struct MuscleForce {
  double active = 0.0;   // N
  double passive = 0.0;  // N
  double total() const { return active + passive; }
};

inline MuscleForce flv_force_components(double length, double velocity,
                                        double activation, const MtuParams& p) {
  if (!std::isfinite(length) || !std::isfinite(velocity) ||
      !std::isfinite(activation))
    throw DomainError("flv_force: non-finite input");
  if (!(length > 0)) throw DomainError("flv_force: length must be > 0");
  if (activation < 0.0 || activation > 1.0)
    throw DomainError("flv_force: activation outside [0, 1]");
  MuscleForce f;
  f.active = p.max_isometric_force * force_length(length) *
             force_velocity(velocity, p.max_shortening_velocity) * activation;
  f.passive = p.max_isometric_force * force_passive(length, p.passive_stiffness);
  return f;
}

// FLV(L, V, z) = F_max (F_L(L) F_V(V) z + F_P(L)).
inline double flv_force(double length, double velocity, double activation,
                        const MtuParams& p) {
  return flv_force_components(length, velocity, activation, p).total();
}

// Time constant of the activation filter for control a and activation z.
inline double activation_time_constant(double control, double activation,
                                       const MtuParams& p) {
  if (control - activation > 0.0)
    return p.tau_act * (0.5 + 1.5 * activation);
  return p.tau_deact / (0.5 + 1.5 * activation);
}

inline double activation_rate(double control, double activation,
                              const MtuParams& p) {
  return (control - activation) /
         activation_time_constant(control, activation, p);
}

inline constexpr int kDefaultFilterSubsteps = 16;

// Number of RK4 sub-steps used for a step of length dt: at least
// `min_substeps`, and enough that every sub-step stays below a quarter of the
// fastest filter time constant.
inline int activation_substeps(double dt, const MtuParams& p,
                               int min_substeps = kDefaultFilterSubsteps) {
  const double fastest = std::min(0.5 * p.tau_act, p.tau_deact / 2.0);
  const double needed = std::ceil(dt / (0.25 * fastest));
  return std::max(min_substeps, static_cast<int>(std::min(needed, 1e7)));
}

// Advances the activation filter by dt. The control is clamped into [0, 1]
// first; each RK4 sub-step result is clamped into [0, 1].
inline double activation_step(double activation, double control, double dt,
                              const MtuParams& p,
                              int min_substeps = kDefaultFilterSubsteps) {
  if (!(dt > 0)) throw ConfigError("activation_step: dt must be > 0");
  if (!std::isfinite(activation) || !std::isfinite(control))
    throw DomainError("activation_step: non-finite input");
  const double a = std::clamp(control, 0.0, 1.0);
  double z = std::clamp(activation, 0.0, 1.0);
  const int n = activation_substeps(dt, p, min_substeps);
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    const double k1 = activation_rate(a, z, p);
    const double k2 = activation_rate(a, std::clamp(z + 0.5 * h * k1, 0.0, 1.0), p);
    const double k3 = activation_rate(a, std::clamp(z + 0.5 * h * k2, 0.0, 1.0), p);
    const double k4 = activation_rate(a, std::clamp(z + h * k3, 0.0, 1.0), p);
    z = std::clamp(z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0, 1.0);
  }
  return z;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_MTU_HPP_
