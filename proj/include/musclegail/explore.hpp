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

#ifndef MUSCLEGAIL_EXPLORE_HPP_
#define MUSCLEGAIL_EXPLORE_HPP_

// Exploration objectives. Every function here returns a *loss* contribution
// (to be minimized), except `oob_penalty`, which is a per-step reward.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "musclegail/errors.hpp"
#include "musclegail/numeric.hpp"
#include "musclegail/policy_dist.hpp"

namespace musclegail {

enum class ObjectiveMode {
  kEntropy,
  kNone,
  kTargetEntropy,
  kFlippedKl,
  kFlippedKlTargetEntropy,
  kOobPenaltyEntropy,
};

inline std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::kEntropy: return "entropy";
    case ObjectiveMode::kNone: return "none";
    case ObjectiveMode::kTargetEntropy: return "target_entropy";
    case ObjectiveMode::kFlippedKl: return "flipped_kl";
    case ObjectiveMode::kFlippedKlTargetEntropy: return "flipped_kl+target_entropy";
    case ObjectiveMode::kOobPenaltyEntropy: return "oob_penalty+entropy";
  }
  return "unknown";
}

inline ObjectiveMode objective_mode_from_string(const std::string& s) {
  for (auto m : {ObjectiveMode::kEntropy, ObjectiveMode::kNone, ObjectiveMode::kTargetEntropy,
                 ObjectiveMode::kFlippedKl, ObjectiveMode::kFlippedKlTargetEntropy,
                 ObjectiveMode::kOobPenaltyEntropy})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown objective mode '" + s + "'");
}

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::kEntropy;
  double lambda_entropy = 0.001;
  double lambda_target_entropy = 1.0;
  double target_entropy = 0.0;
  double lambda_flipped_kl = 0.01;
  double oob_scale = 0.1;
  ActionBox bounds = ActionBox::unit(1);

  bool uses_entropy_bonus() const {
    return mode == ObjectiveMode::kEntropy || mode == ObjectiveMode::kFlippedKl ||
           mode == ObjectiveMode::kOobPenaltyEntropy;
  }
  bool uses_target_entropy() const {
    return mode == ObjectiveMode::kTargetEntropy ||
           mode == ObjectiveMode::kFlippedKlTargetEntropy;
  }
  bool uses_flipped_kl() const {
    return mode == ObjectiveMode::kFlippedKl || mode == ObjectiveMode::kFlippedKlTargetEntropy;
  }
  bool uses_oob_penalty() const { return mode == ObjectiveMode::kOobPenaltyEntropy; }

  void validate() const {
    if (lambda_entropy < 0 || lambda_target_entropy < 0 || lambda_flipped_kl < 0 || oob_scale < 0)
      throw ConfigError("objective coefficients must be >= 0");
    bounds.validate();
  }
};

// -lambda H.
inline double entropy_bonus(double entropy, const ObjectiveConfig& cfg) {
  return -cfg.lambda_entropy * entropy;
}

// lambda_TE (H - h_target)^2.
inline double target_entropy_loss(double entropy, const ObjectiveConfig& cfg) {
  const double d = entropy - cfg.target_entropy;
  return cfg.lambda_target_entropy * d * d;
}

// d/dH of target_entropy_loss.
inline double target_entropy_loss_slope(double entropy, const ObjectiveConfig& cfg) {
  return 2.0 * cfg.lambda_target_entropy * (entropy - cfg.target_entropy);
}

struct KlUniformGaussian {
  double value = 0.0;
  Vec d_mean;  // dKL/dmean
  Mat d_cov;   // dKL/dcov, entries treated as independent
};

// KL(U || N(mean, cov)) for U uniform on the box. Bounds are shifted by the
// mean, a_i = low_i - mean_i and b_i = high_i - mean_i, and with u the uniform
// density
//   KL = log u + 1/2 log|S| + d/2 log(2 pi)
//        + u/2 sum_p  prod_{i!=p} (b_i - a_i) P_pp (b_p^3 - a_p^3) / 3
//        + u/2 sum_{p!=q} prod_{i!=p,q} (b_i - a_i) P_pq (b_p^2 - a_p^2)(b_q^2 - a_q^2) / 4
// where P is the precision matrix.
inline KlUniformGaussian kl_uniform_to_gaussian_with_grad(const Vec& mean, const Mat& cov,
                                                          const ActionBox& box) {
  const int d = static_cast<int>(mean.size());
  if (box.dim() != d || cov.rows() != d || cov.cols() != d)
    throw DomainError("kl_uniform_to_gaussian: dimension mismatch");
  if (!mean.allFinite() || !cov.allFinite())
    throw DomainError("kl_uniform_to_gaussian: non-finite input");
  const Vec width = box.width();
  if (!(width.array() > 0).all()) throw DomainError("kl_uniform_to_gaussian: degenerate box");
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success)
    throw DomainError("kl_uniform_to_gaussian: covariance is not positive definite");
  const Mat prec = llt.solve(Mat::Identity(d, d));
  const Mat lmat = llt.matrixL();
  const double log_det = 2.0 * lmat.diagonal().array().log().sum();

  const Vec a = box.low - mean;
  const Vec b = box.high - mean;
  const Vec sq = (b.array().square() - a.array().square()).matrix();  // b^2 - a^2
  const Vec cu = (b.array().cube() - a.array().cube()).matrix();      // b^3 - a^3
  double volume = 1.0;
  for (int i = 0; i < d; ++i) volume *= width(i);
  const double u = 1.0 / volume;

  auto prod_except = [&](int p, int q) {
    double r = 1.0;
    for (int i = 0; i < d; ++i)
      if (i != p && i != q) r *= width(i);
    return r;
  };

  // Second moments E_U[x x^T] of the shifted uniform, written as the
  // products above; the quadratic term is 1/2 tr(P M).
  Mat moments(d, d);
  for (int p = 0; p < d; ++p) {
    moments(p, p) = u * prod_except(p, p) * cu(p) / 3.0;
    for (int q = 0; q < d; ++q)
      if (q != p) moments(p, q) = u * prod_except(p, q) * sq(p) * sq(q) / 4.0;
  }

  KlUniformGaussian r;
  r.value = std::log(u) + 0.5 * log_det + 0.5 * d * kLogTwoPi +
            0.5 * prec.cwiseProduct(moments).sum();

  // Shifting the mean moves both bounds: d(b^3 - a^3)/dmean = -3 (b^2 - a^2)
  // and d(b^2 - a^2)/dmean = -2 (b - a).
  r.d_mean = Vec::Zero(d);
  for (int p = 0; p < d; ++p) {
    double g = -prec(p, p) * u * prod_except(p, p) * sq(p);
    for (int q = 0; q < d; ++q) {
      if (q == p) continue;
      g += -(prec(p, q) + prec(q, p)) * u * prod_except(p, q) * 2.0 * width(p) * sq(q) / 4.0;
    }
    r.d_mean(p) = 0.5 * g;
  }
  r.d_cov = 0.5 * prec - 0.5 * prec * moments * prec;
  return r;
}

inline double kl_uniform_to_gaussian(const Vec& mean, const Mat& cov, const ActionBox& box) {
  return kl_uniform_to_gaussian_with_grad(mean, cov, box).value;
}

struct FlippedKlLoss {
  double value = 0.0;  // lambda_FKL * mean_s KL(U || pi(s))
  double mean_kl = 0.0;
  Mat d_heads;         // head_dim x num_states
  Vec d_params;
};

// Loss form of the flipped uniform KL objective over a set of states, given
// the policy heads at those states (columns of `heads`).
inline FlippedKlLoss flipped_kl_loss(const PolicyDistribution& dist, const Mat& heads,
                                     const ObjectiveConfig& cfg) {
  if (dist.bounded_support())
    throw ConfigError("flipped_kl requires an unbounded Gaussian family, got " + dist.name());
  FlippedKlLoss out;
  const int n = static_cast<int>(heads.cols());
  out.d_heads = Mat::Zero(dist.head_dim(), n);
  out.d_params = Vec::Zero(dist.param_dim());
  if (n == 0) return out;
  const double scale = cfg.lambda_flipped_kl / n;
  for (int s = 0; s < n; ++s) {
    const Vec head = heads.col(s);
    const auto moments = dist.gaussian_moments(head);
    if (!moments) throw ConfigError("flipped_kl requires Gaussian moments from " + dist.name());
    const KlUniformGaussian kl =
        kl_uniform_to_gaussian_with_grad(moments->mean, moments->cov, cfg.bounds);
    out.mean_kl += kl.value / n;
    const DensityGrad g = dist.gaussian_moments_vjp(head, scale * kl.d_mean, scale * kl.d_cov);
    out.d_heads.col(s) = g.head;
    out.d_params += g.params;
  }
  out.value = cfg.lambda_flipped_kl * out.mean_kl;
  return out;
}

// Squared out-of-bounds penalty, a reward <= 0:
//   r = beta sum_i r_i,  r_i = -(a_i - low_i)^2 below, -(a_i - high_i)^2 above.
inline double oob_penalty(const Vec& action, const ActionBox& bounds, double scale) {
  if (action.size() != bounds.dim()) throw DomainError("oob_penalty: dimension mismatch");
  double r = 0.0;
  for (int i = 0; i < action.size(); ++i) {
    if (action(i) < bounds.low(i)) {
      const double e = action(i) - bounds.low(i);
      r -= e * e;
    } else if (action(i) > bounds.high(i)) {
      const double e = action(i) - bounds.high(i);
      r -= e * e;
    }
  }
  return scale * r;
}

inline double oob_penalty(const Vec& action, const ObjectiveConfig& cfg) {
  return oob_penalty(action, cfg.bounds, cfg.oob_scale);
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_EXPLORE_HPP_
