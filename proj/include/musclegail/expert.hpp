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

#ifndef MUSCLEGAIL_EXPERT_HPP_
#define MUSCLEGAIL_EXPERT_HPP_

// Scripted expert controller and the state-only expert trajectory file.
//
// File format (text):
//   # musclegail expert trajectory
//   # dt=<control timestep in s>
//   q_hip,q_knee,...                 header naming observation dimensions
//   <row per timestep>
//                                    blank line separates episodes
//   <row per timestep>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "musclegail/errors.hpp"
#include "musclegail/limb_env.hpp"

namespace musclegail {

struct ExpertConfig {
  double period = 1.0;  // s
  // Per-muscle peak control, phase offset (rad) and duty cycle (fraction of
  // the period with nonzero output).
  std::vector<double> amplitude;
  std::vector<double> phase;
  std::vector<double> duty;

  void validate(int num_muscles) const {
    if (!(period > 0)) throw ConfigError("expert.period must be > 0");
    if (static_cast<int>(amplitude.size()) != num_muscles ||
        static_cast<int>(phase.size()) != num_muscles ||
        static_cast<int>(duty.size()) != num_muscles)
      throw ConfigError("expert amplitude/phase/duty need one entry per muscle");
    for (double d : duty)
      if (!(d > 0 && d <= 1)) throw ConfigError("expert duty cycles must lie in (0, 1]");
  }

  // Four phase groups matching LimbConfig::default_config(): hip flexors,
  // hip extensors (antiphase), knee flexors, knee extensors (antiphase).
  static ExpertConfig default_config() {
    ExpertConfig e;
    const double knee_lead = 0.5;  // rad
    const double group_phase[4] = {0.0, std::numbers::pi, knee_lead,
                                   std::numbers::pi + knee_lead};
    const double group_amp[4] = {1.0, 0.3, 1.0, 0.6};
    const double share[3] = {0.9, 1.0, 0.8};
    for (int g = 0; g < 4; ++g) {
      for (int k = 0; k < 3; ++k) {
        e.amplitude.push_back(group_amp[g] * share[k]);
        e.phase.push_back(group_phase[g]);
        e.duty.push_back(0.5);
      }
    }
    return e;
  }
};

// Rectified cosine burst: nonzero on a window of `duty` * period centered at
// phase offset, peaking at the amplitude.
inline Eigen::VectorXd scripted_expert(double t, const ExpertConfig& cfg) {
  const int n = static_cast<int>(cfg.amplitude.size());
  Eigen::VectorXd u(n);
  const double omega = 2.0 * std::numbers::pi / cfg.period;
  for (int i = 0; i < n; ++i) {
    const double threshold = std::cos(std::numbers::pi * cfg.duty[i]);
    const double c = std::cos(omega * t - cfg.phase[i]);
    const double burst = cfg.duty[i] >= 1.0 ? 0.5 * (1.0 + c)
                                            : std::max(0.0, c - threshold) / (1.0 - threshold);
    u(i) = cfg.amplitude[i] * burst;
  }
  return u;
}

struct ExpertTrajectory {
  double dt = 0.01;
  std::vector<std::string> columns;
  std::vector<std::vector<Eigen::VectorXd>> episodes;

  std::size_t num_rows() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.size();
    return n;
  }

  // All observations stacked column-wise (observation_dim x rows).
  Eigen::MatrixXd stacked() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(columns.size()),
                      static_cast<Eigen::Index>(num_rows()));
    Eigen::Index col = 0;
    for (const auto& e : episodes)
      for (const auto& row : e) m.col(col++) = row;
    return m;
  }
};

inline void write_expert_trajectory(const ExpertTrajectory& traj,
                                    std::ostream& os) {
  os << "# musclegail expert trajectory\n";
  os << std::setprecision(17) << "# dt=" << traj.dt << "\n";
  for (std::size_t i = 0; i < traj.columns.size(); ++i)
    os << (i ? "," : "") << traj.columns[i];
  os << "\n";
  for (std::size_t e = 0; e < traj.episodes.size(); ++e) {
    if (e > 0) os << "\n";
    for (const auto& row : traj.episodes[e]) {
      for (Eigen::Index i = 0; i < row.size(); ++i) os << (i ? "," : "") << row(i);
      os << "\n";
    }
  }
}

inline void save_expert_trajectory(const ExpertTrajectory& traj,
                                   const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write expert file '" + path + "'");
  write_expert_trajectory(traj, os);
}

inline ExpertTrajectory read_expert_trajectory(std::istream& is) {
  ExpertTrajectory traj;
  std::string line;
  bool have_dt = false;
  bool have_header = false;
  std::vector<Eigen::VectorXd> current;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '#') {
      const auto pos = line.find("dt=");
      if (pos != std::string::npos) {
        traj.dt = std::stod(line.substr(pos + 3));
        have_dt = true;
      }
      continue;
    }
    if (!have_header) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string name;
      while (std::getline(ss, name, ',')) traj.columns.push_back(name);
      have_header = true;
      continue;
    }
    if (line.empty()) {
      if (!current.empty()) traj.episodes.push_back(std::move(current));
      current.clear();
      continue;
    }
    Eigen::VectorXd row(static_cast<Eigen::Index>(traj.columns.size()));
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= row.size())
        throw ConfigError("expert file line " + std::to_string(line_no) + ": too many values");
      try {
        row(i++) = std::stod(cell);
      } catch (const std::exception&) {
        throw ConfigError("expert file line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (i != row.size())
      throw ConfigError("expert file line " + std::to_string(line_no) + ": too few values");
    current.push_back(std::move(row));
  }
  if (!current.empty()) traj.episodes.push_back(std::move(current));
  if (!have_dt) throw ConfigError("expert file is missing the '# dt=' metadata line");
  if (!have_header) throw ConfigError("expert file is missing the header row");
  return traj;
}

inline ExpertTrajectory load_expert_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read expert file '" + path + "'");
  return read_expert_trajectory(is);
}

// Rolls out the scripted expert from the nominal posture. Throws
// SimulationFault when the expert reaches an absorbing state.
struct ExpertRollout {
  std::vector<Eigen::VectorXd> observations;  // after each step
  std::vector<Eigen::VectorXd> controls;
  std::vector<double> task_rewards;
};

inline ExpertRollout rollout_expert(const LimbConfig& env, const ExpertConfig& expert,
                                    int steps, double start_time = 0.0) {
  expert.validate(env.num_muscles());
  LimbState s = make_state(env, Eigen::Vector2d(env.initial_angles[0], env.initial_angles[1]),
                           Eigen::Vector2d::Zero());
  ExpertRollout out;
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd u = scripted_expert(start_time + k * env.dt, expert);
    StepResult r = env_step(env, s, {u.data(), static_cast<std::size_t>(u.size())}, env.dt);
    s = std::move(r.state);
    if (r.absorbing)
      throw SimulationFault("scripted expert reached an absorbing state at step " +
                                std::to_string(k),
                            s.dump());
    out.observations.push_back(observe(env, s));
    out.controls.push_back(u);
    out.task_rewards.push_back(r.task_reward);
  }
  return out;
}

// Generates the state-only dataset: one rollout from the nominal posture,
// the first `transient_periods` periods discarded, the rest cut into
// `episodes` consecutive episodes of `periods` periods each.
inline ExpertTrajectory generate_expert_trajectory(const LimbConfig& env,
                                                   const ExpertConfig& expert,
                                                   int episodes, int periods,
                                                   int transient_periods) {
  if (episodes < 1 || periods < 1 || transient_periods < 0)
    throw ConfigError("expert generation needs episodes >= 1, periods >= 1, transient >= 0");
  const int steps_per_period = static_cast<int>(std::lround(expert.period / env.dt));
  const int skip = transient_periods * steps_per_period;
  const int per_episode = periods * steps_per_period;
  ExpertRollout r = rollout_expert(env, expert, skip + episodes * per_episode);
  ExpertTrajectory traj;
  traj.dt = env.dt;
  for (const char* n : observation_names()) traj.columns.emplace_back(n);
  for (int e = 0; e < episodes; ++e) {
    const auto first = r.observations.begin() + skip + e * per_episode;
    traj.episodes.emplace_back(first, first + per_episode);
  }
  return traj;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_EXPERT_HPP_
