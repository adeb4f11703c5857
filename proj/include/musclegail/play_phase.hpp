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

#ifndef MUSCLEGAIL_PLAY_PHASE_HPP_
#define MUSCLEGAIL_PLAY_PHASE_HPP_

#include <string>

#include "musclegail/errors.hpp"
#include "musclegail/gail.hpp"
#include "musclegail/synergy.hpp"

namespace musclegail {

struct PlayPhaseResult {
  Mat actions;  // |A| x steps, executed (clamped) controls
  TrainResult training;
};

// Trains an unbounded Gaussian policy with the out-of-bounds penalty for
// `steps` environment steps and records every executed control.
inline PlayPhaseResult play_phase(const LimbConfig& env, const ExpertTrajectory& expert,
                                  long steps, TrainConfig tcfg, PolicyConfig pcfg = {},
                                  ObjectiveConfig obj = {}) {
  const long min_steps = static_cast<long>(kMinSamplesPerAction) * env.num_muscles();
  if (steps < min_steps)
    throw ConfigError("play phase needs at least 10 x |A| = " + std::to_string(min_steps) +
                      " steps, got " + std::to_string(steps));
  pcfg.family = DistributionKind::kGaussian;
  obj.mode = ObjectiveMode::kOobPenaltyEntropy;
  tcfg.total_steps = steps;
  PlayPhaseResult out;
  out.actions.resize(env.num_muscles(), steps);
  Eigen::Index col = 0;
  out.training = train_gail(env, expert, pcfg, obj, nullptr, tcfg, {}, [&](const Mat& exec) {
    out.actions.middleCols(col, exec.cols()) = exec;
    col += exec.cols();
  });
  return out;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_PLAY_PHASE_HPP_
