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

#ifndef MUSCLEGAIL_POLICY_DIST_HPP_
#define MUSCLEGAIL_POLICY_DIST_HPP_

// Policy distribution families behind one interface.
//
// A distribution is evaluated at a "head": the network output for one state.
// State-independent learnable parameters live in the distribution itself as a
// flat vector with named segments (`layout()`), so that the learner can treat
// [network parameters, distribution parameters] as one parameter vector.
//
// Families and their layouts (D = action dimension, N = latent dimension):
//   gaussian             head: mean (D)           params: log_std (D)
//   squashed_gaussian    head: pre-squash mean (D) params: log_std (D)
//   beta_alpha_beta      head: alpha_raw (D), beta_raw (D); alpha = softplus + 1
//   beta_mean_std        head: mean_logit (D)     params: std_raw (D), std = softplus
//   latent_gaussian      head: latent state x (N) params: weight (D x N, row
//                        major), bias (D), log_std_action (D), log_std_latent (N)
//
// Bounded families map their native support onto the action box affinely and
// fold the Jacobian into the log-density.

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <spdlog/spdlog.h>

#include "musclegail/errors.hpp"
#include "musclegail/numeric.hpp"

namespace musclegail {

enum class DistributionKind {
  kGaussian,
  kSquashedGaussian,
  kBetaAlphaBeta,
  kBetaMeanStd,
  kLatentGaussian,
};

inline std::string to_string(DistributionKind k) {
  switch (k) {
    case DistributionKind::kGaussian: return "gaussian";
    case DistributionKind::kSquashedGaussian: return "squashed_gaussian";
    case DistributionKind::kBetaAlphaBeta: return "beta_alpha_beta";
    case DistributionKind::kBetaMeanStd: return "beta_mean_std";
    case DistributionKind::kLatentGaussian: return "latent_gaussian";
  }
  return "unknown";
}

inline DistributionKind distribution_kind_from_string(const std::string& s) {
  for (auto k : {DistributionKind::kGaussian, DistributionKind::kSquashedGaussian,
                 DistributionKind::kBetaAlphaBeta, DistributionKind::kBetaMeanStd,
                 DistributionKind::kLatentGaussian})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown policy family '" + s + "'");
}

struct ParamSegment {
  std::string name;
  int offset = 0;
  int size = 0;
};

struct ActionBox {
  Vec low;
  Vec high;

  static ActionBox unit(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }
  int dim() const { return static_cast<int>(low.size()); }
  Vec width() const { return high - low; }
  Vec center() const { return 0.5 * (low + high); }
  bool contains(const Vec& a) const {
    return (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
  }
  void validate() const {
    if (low.size() != high.size() || low.size() == 0)
      throw ConfigError("action box bounds must have equal nonzero length");
    if (!(low.array() < high.array()).all())
      throw ConfigError("action box needs low < high in every dimension");
  }
};

// Gradient of a scalar w.r.t. the head and the distribution parameters.
struct DensityGrad {
  Vec head;
  Vec params;
};

struct GaussianMoments {
  Vec mean;
  Mat cov;
};

// Standard normal draws used by Monte-Carlo entropy estimates; columns are
// samples. Families with closed-form entropy ignore it.
using EntropyNoise = Mat;

inline constexpr int kDefaultEntropySamples = 64;

class PolicyDistribution {
 public:
  virtual ~PolicyDistribution() = default;

  virtual DistributionKind kind() const = 0;
  std::string name() const { return to_string(kind()); }
  int action_dim() const { return action_dim_; }
  virtual bool bounded_support() const = 0;
  virtual int head_dim() const = 0;
  int param_dim() const { return static_cast<int>(params_.size()); }
  virtual std::vector<ParamSegment> layout() const = 0;
  virtual std::unique_ptr<PolicyDistribution> clone() const = 0;

  const Vec& params() const { return params_; }
  void set_params(const Vec& p) {
    if (p.size() != params_.size())
      throw ParameterError(name() + ": parameter vector has wrong size");
    params_ = p;
    refresh();
  }

  virtual Vec sample(const Vec& head, Rng& rng) const = 0;
  // Returns -infinity for actions outside the support of a bounded family.
  virtual double log_density(const Vec& head, const Vec& action) const = 0;
  virtual DensityGrad log_density_grad(const Vec& head, const Vec& action) const = 0;
  virtual double entropy(const Vec& head, const EntropyNoise& noise) const = 0;
  virtual DensityGrad entropy_grad(const Vec& head, const EntropyNoise& noise) const = 0;
  // KL(this(head) || other(other_head)); `other` must be the same family.
  virtual double kl_divergence(const Vec& head, const PolicyDistribution& other,
                               const Vec& other_head) const = 0;
  // Fisher information of the distribution at `head`, pulled back to
  // (head, params) and applied to the tangent (d_head, d_params).
  virtual DensityGrad fisher_product(const Vec& head, const Vec& d_head,
                                     const Vec& d_params) const = 0;
  // Location of the distribution in action space (deterministic action).
  virtual Vec mean_action(const Vec& head) const = 0;
  // Mean and covariance for the unbounded Gaussian families.
  virtual std::optional<GaussianMoments> gaussian_moments(const Vec&) const {
    return std::nullopt;
  }
  // Pulls a gradient w.r.t. (mean, covariance) back to (head, params).
  virtual DensityGrad gaussian_moments_vjp(const Vec&, const Vec&, const Mat&) const {
    throw ConfigError(name() + " is not an unbounded Gaussian family");
  }

  // Entropy with fresh noise; closed-form families ignore the sample count.
  double entropy(const Vec& head, Rng& rng, int samples = kDefaultEntropySamples) const {
    return entropy(head, standard_normal(action_dim_, samples, rng));
  }
  double entropy(const Vec& head) const { return entropy(head, EntropyNoise()); }

 protected:
  PolicyDistribution(int action_dim, int param_dim)
      : action_dim_(action_dim), params_(Vec::Zero(param_dim)) {
    if (action_dim < 1) throw ParameterError("action_dim must be >= 1");
  }
  virtual void refresh() {}
  void check_head(const Vec& head) const {
    if (head.size() != head_dim())
      throw ParameterError(name() + ": head has size " + std::to_string(head.size()) +
                           ", expected " + std::to_string(head_dim()));
  }

  int action_dim_;
  Vec params_;
};

// ---------------------------------------------------------------------------
// Unbounded diagonal Gaussian with state-independent log standard deviation.

class GaussianDistribution final : public PolicyDistribution {
 public:
  explicit GaussianDistribution(int action_dim, double init_std = 0.5)
      : PolicyDistribution(action_dim, action_dim) {
    if (!(init_std > 0)) throw ParameterError("gaussian: init_std must be > 0");
    params_.setConstant(std::log(init_std));
  }

  DistributionKind kind() const override { return DistributionKind::kGaussian; }
  bool bounded_support() const override { return false; }
  int head_dim() const override { return action_dim_; }
  std::vector<ParamSegment> layout() const override {
    return {{"log_std", 0, action_dim_}};
  }
  std::unique_ptr<PolicyDistribution> clone() const override {
    return std::make_unique<GaussianDistribution>(*this);
  }

  Vec std_dev() const { return params_.array().exp(); }

  Vec sample(const Vec& head, Rng& rng) const override {
    check_head(head);
    check_params();
    return head + std_dev().cwiseProduct(standard_normal(action_dim_, rng));
  }

  double log_density(const Vec& head, const Vec& action) const override {
    check_head(head);
    const Vec z = (action - head).cwiseQuotient(std_dev());
    return -0.5 * z.squaredNorm() - params_.sum() - 0.5 * action_dim_ * kLogTwoPi;
  }

  DensityGrad log_density_grad(const Vec& head, const Vec& action) const override {
    const Vec var = (2.0 * params_).array().exp();
    const Vec diff = action - head;
    DensityGrad g;
    g.head = diff.cwiseQuotient(var);
    g.params = (diff.array().square() / var.array() - 1.0).matrix();
    return g;
  }

  double entropy(const Vec&, const EntropyNoise&) const override {
    return params_.sum() + 0.5 * action_dim_ * (kLogTwoPi + 1.0);
  }

  DensityGrad entropy_grad(const Vec&, const EntropyNoise&) const override {
    return {Vec::Zero(action_dim_), Vec::Ones(action_dim_)};
  }

  double kl_divergence(const Vec& head, const PolicyDistribution& other,
                       const Vec& other_head) const override {
    const Vec& lq = other.params();
    const Vec var_p = (2.0 * params_).array().exp();
    const Vec var_q = (2.0 * lq).array().exp();
    return ((lq - params_).array() +
            (var_p.array() + (head - other_head).array().square()) / (2.0 * var_q.array()) -
            0.5)
        .sum();
  }

  DensityGrad fisher_product(const Vec&, const Vec& d_head,
                             const Vec& d_params) const override {
    const Vec var = (2.0 * params_).array().exp();
    return {d_head.cwiseQuotient(var), 2.0 * d_params};
  }

  Vec mean_action(const Vec& head) const override { return head; }

  std::optional<GaussianMoments> gaussian_moments(const Vec& head) const override {
    return GaussianMoments{head, Mat((2.0 * params_).array().exp().matrix().asDiagonal())};
  }

  DensityGrad gaussian_moments_vjp(const Vec&, const Vec& d_mean,
                                   const Mat& d_cov) const override {
    const Vec var = (2.0 * params_).array().exp();
    return {d_mean, 2.0 * var.cwiseProduct(d_cov.diagonal())};
  }

 private:
  void check_params() const {
    if (!params_.allFinite()) throw ParameterError("gaussian: non-finite log_std");
  }
};

// ---------------------------------------------------------------------------
// tanh-squashed Gaussian rescaled onto the action box.

inline constexpr double kSquashGuard = 1e-6;

class SquashedGaussianDistribution final : public PolicyDistribution {
 public:
  SquashedGaussianDistribution(ActionBox box, double init_std = 0.5)
      : PolicyDistribution(box.dim(), box.dim()), box_(std::move(box)) {
    box_.validate();
    if (!(init_std > 0)) throw ParameterError("squashed_gaussian: init_std must be > 0");
    params_.setConstant(std::log(init_std));
  }

  DistributionKind kind() const override { return DistributionKind::kSquashedGaussian; }
  bool bounded_support() const override { return true; }
  int head_dim() const override { return action_dim_; }
  std::vector<ParamSegment> layout() const override {
    return {{"log_std", 0, action_dim_}};
  }
  std::unique_ptr<PolicyDistribution> clone() const override {
    return std::make_unique<SquashedGaussianDistribution>(*this);
  }
  const ActionBox& box() const { return box_; }

  Vec squash(const Vec& u) const {
    Vec y = u.array().tanh().matrix();
    y = y.cwiseMax(-1.0 + kSquashGuard).cwiseMin(1.0 - kSquashGuard);
    return box_.low + 0.5 * box_.width().cwiseProduct(y + Vec::Ones(action_dim_));
  }

  Vec sample(const Vec& head, Rng& rng) const override {
    check_head(head);
    if (!params_.allFinite()) throw ParameterError("squashed_gaussian: non-finite log_std");
    const Vec u = head + params_.array().exp().matrix().cwiseProduct(
                             standard_normal(action_dim_, rng));
    return squash(u);
  }

  double log_density(const Vec& head, const Vec& action) const override {
    check_head(head);
    if (!box_.contains(action)) return -std::numeric_limits<double>::infinity();
    double lp = 0.0;
    for (int i = 0; i < action_dim_; ++i) {
      const double half = 0.5 * (box_.high(i) - box_.low(i));
      const double y = guarded(action(i), i);
      const double u = std::atanh(y);
      const double z = (u - head(i)) * std::exp(-params_(i));
      lp += -0.5 * z * z - params_(i) - 0.5 * kLogTwoPi - std::log1p(-y * y) -
            std::log(half);
    }
    return lp;
  }

  DensityGrad log_density_grad(const Vec& head, const Vec& action) const override {
    DensityGrad g{Vec(action_dim_), Vec(action_dim_)};
    for (int i = 0; i < action_dim_; ++i) {
      const double u = std::atanh(guarded(action(i), i));
      const double var = std::exp(2.0 * params_(i));
      const double diff = u - head(i);
      g.head(i) = diff / var;
      g.params(i) = diff * diff / var - 1.0;
    }
    return g;
  }

  // -E[log pi(a)] = Gaussian entropy + E[sum log(1 - tanh^2 u)] + log half-width,
  // the expectation estimated over the columns of `noise`.
  double entropy(const Vec& head, const EntropyNoise& noise) const override {
    check_noise(noise);
    double h = params_.sum() + 0.5 * action_dim_ * (kLogTwoPi + 1.0) +
               (0.5 * box_.width()).array().log().sum();
    double corr = 0.0;
    for (int k = 0; k < noise.cols(); ++k)
      for (int i = 0; i < action_dim_; ++i)
        corr += log_one_minus_tanh_sq(head(i) + std::exp(params_(i)) * noise(i, k));
    return h + corr / noise.cols();
  }

  DensityGrad entropy_grad(const Vec& head, const EntropyNoise& noise) const override {
    check_noise(noise);
    DensityGrad g{Vec::Zero(action_dim_), Vec::Ones(action_dim_)};
    const double inv = 1.0 / noise.cols();
    for (int k = 0; k < noise.cols(); ++k) {
      for (int i = 0; i < action_dim_; ++i) {
        const double s = std::exp(params_(i));
        const double t = std::tanh(head(i) + s * noise(i, k));
        g.head(i) -= 2.0 * t * inv;
        g.params(i) -= 2.0 * t * s * noise(i, k) * inv;
      }
    }
    return g;
  }

  // The squash is a bijection, so the divergence equals the one between the
  // pre-squash Gaussians.
  double kl_divergence(const Vec& head, const PolicyDistribution& other,
                       const Vec& other_head) const override {
    const Vec& lq = other.params();
    const Vec var_p = (2.0 * params_).array().exp();
    const Vec var_q = (2.0 * lq).array().exp();
    return ((lq - params_).array() +
            (var_p.array() + (head - other_head).array().square()) / (2.0 * var_q.array()) -
            0.5)
        .sum();
  }

  DensityGrad fisher_product(const Vec&, const Vec& d_head,
                             const Vec& d_params) const override {
    const Vec var = (2.0 * params_).array().exp();
    return {d_head.cwiseQuotient(var), 2.0 * d_params};
  }

  Vec mean_action(const Vec& head) const override { return squash(head); }

 private:
  double guarded(double a, int i) const {
    const double y = 2.0 * (a - box_.low(i)) / (box_.high(i) - box_.low(i)) - 1.0;
    return std::clamp(y, -1.0 + kSquashGuard, 1.0 - kSquashGuard);
  }
  void check_noise(const EntropyNoise& noise) const {
    if (noise.rows() != action_dim_ || noise.cols() < 1)
      throw ParameterError("squashed_gaussian: entropy needs a D x K noise matrix");
  }

  ActionBox box_;
};

// ---------------------------------------------------------------------------
// Beta distribution helpers.

inline double log_beta_function(double a, double b) {
  return boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
}

// log f(x; a, b) on (0, 1) with normalizer Gamma(a + b) / (Gamma(a) Gamma(b)).
inline double beta_log_pdf(double x, double a, double b) {
  if (!(x > 0.0 && x < 1.0)) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_function(a, b);
}

inline double beta_entropy(double a, double b) {
  using boost::math::digamma;
  return log_beta_function(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) +
         (a + b - 2.0) * digamma(a + b);
}

inline double beta_kl(double a1, double b1, double a2, double b2) {
  using boost::math::digamma;
  return log_beta_function(a2, b2) - log_beta_function(a1, b1) +
         (a1 - a2) * digamma(a1) + (b1 - b2) * digamma(b1) +
         (a2 - a1 + b2 - b1) * digamma(a1 + b1);
}

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;
};

inline BetaParams beta_sample_params_guard(BetaParams p) {
  if (!(p.alpha > 0) || !(p.beta > 0) || !std::isfinite(p.alpha) || !std::isfinite(p.beta))
    throw ParameterError("beta: alpha and beta must be finite and > 0");
  return p;
}

inline double sample_beta(BetaParams p, Rng& rng) {
  std::gamma_distribution<double> ga(p.alpha, 1.0);
  std::gamma_distribution<double> gb(p.beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double s = x + y;
  constexpr double tiny = 1e-12;
  if (!(s > 0)) return 0.5;
  return std::clamp(x / s, tiny, 1.0 - tiny);
}

// Upper bound on the variance of a Beta with mean mu: mu (1 - mu) in general,
// and mu min(mu (1 - mu) / (1 + mu), (1 - mu)^2 / (2 - mu)) for unimodality
// (alpha > 1 and beta > 1).
inline double beta_variance_bound(double mu, bool unimodal) {
  if (!unimodal) return mu * (1.0 - mu);
  return mu * std::min(mu * (1.0 - mu) / (1.0 + mu), (1.0 - mu) * (1.0 - mu) / (2.0 - mu));
}

inline double beta_variance_bound_derivative(double mu, bool unimodal) {
  if (!unimodal) return 1.0 - 2.0 * mu;
  if (mu <= 0.5) {
    // mu^2 (1 - mu) / (1 + mu)
    const double d = 1.0 + mu;
    return (2.0 * mu - 2.0 * mu * mu - 2.0 * mu * mu * mu) / (d * d);
  }
  // mu (1 - mu)^2 / (2 - mu)
  const double om = 1.0 - mu;
  const double d = 2.0 - mu;
  return ((om * om - 2.0 * mu * om) * d + mu * om * om) / (d * d);
}

inline constexpr double kBetaStdProjection = 0.99;

enum class BoundViolation { kStrict, kProject };

struct BetaFromMeanStd {
  BetaParams params;
  double variance = 0.0;  // variance actually used after projection
  bool projected = false;
};

// Moment matching: alpha = ((1 - mu) / s - 1 / mu) mu^2, beta = alpha (1 / mu - 1)
// with s = sigma^2. A sigma at or above the bound either throws (kStrict) or
// is scaled down to 0.99 of the maximal sigma (kProject).
inline BetaFromMeanStd beta_from_mean_std_quiet(double mu, double sigma, bool unimodal,
                                                BoundViolation mode) {
  if (!(mu > 0.0 && mu < 1.0)) throw ParameterError("beta_from_mean_std: mean must lie in (0, 1)");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ParameterError("beta_from_mean_std: std must be finite and > 0");
  BetaFromMeanStd r;
  const double bound = beta_variance_bound(mu, unimodal);
  double s = sigma * sigma;
  if (!(s < bound)) {
    if (mode == BoundViolation::kStrict)
      throw ParameterError("beta_from_mean_std: variance " + std::to_string(s) +
                           " violates the bound " + std::to_string(bound));
    s = kBetaStdProjection * kBetaStdProjection * bound;
    r.projected = true;
  }
  r.variance = s;
  r.params.alpha = ((1.0 - mu) / s - 1.0 / mu) * mu * mu;
  r.params.beta = r.params.alpha * (1.0 / mu - 1.0);
  return r;
}

inline BetaFromMeanStd beta_from_mean_std(double mu, double sigma, bool unimodal = true,
                                          BoundViolation mode = BoundViolation::kStrict) {
  BetaFromMeanStd r = beta_from_mean_std_quiet(mu, sigma, unimodal, mode);
  if (r.projected) {
    spdlog::warn("beta_from_mean_std: std {} exceeds the {} bound at mean {}; projected to {}",
                 sigma, unimodal ? "unimodal" : "support", mu, std::sqrt(r.variance));
  }
  return r;
}

// Fisher information of Beta(a, b) in (a, b).
inline Eigen::Matrix2d beta_fisher(double a, double b) {
  using boost::math::trigamma;
  const double tab = trigamma(a + b);
  Eigen::Matrix2d f;
  f << trigamma(a) - tab, -tab, -tab, trigamma(b) - tab;
  return f;
}

// Shared machinery of the two Beta parameterizations: both map the head
// (and params) to per-dimension (alpha, beta) with a Jacobian.
class BetaDistributionBase : public PolicyDistribution {
 public:
  bool bounded_support() const override { return true; }
  const ActionBox& box() const { return box_; }

  // Per-dimension (alpha, beta) and the Jacobian rows d(alpha, beta)/d(head_j)
  // and d(alpha, beta)/d(param_j) for the entries that touch dimension i.
  struct Local {
    BetaParams p;
    // dalpha/dh, dbeta/dh for each head entry feeding this dimension.
    std::vector<std::pair<int, Eigen::Vector2d>> head_jac;
    std::vector<std::pair<int, Eigen::Vector2d>> param_jac;
  };
  virtual Local local(const Vec& head, int i) const = 0;

  Vec sample(const Vec& head, Rng& rng) const override {
    check_head(head);
    Vec a(action_dim_);
    for (int i = 0; i < action_dim_; ++i) {
      const BetaParams p = beta_sample_params_guard(local(head, i).p);
      a(i) = box_.low(i) + (box_.high(i) - box_.low(i)) * sample_beta(p, rng);
    }
    return a;
  }

  double log_density(const Vec& head, const Vec& action) const override {
    check_head(head);
    double lp = 0.0;
    for (int i = 0; i < action_dim_; ++i) {
      const double w = box_.high(i) - box_.low(i);
      const double x = (action(i) - box_.low(i)) / w;
      const BetaParams p = local(head, i).p;
      lp += beta_log_pdf(x, p.alpha, p.beta) - std::log(w);
    }
    return lp;
  }

  DensityGrad log_density_grad(const Vec& head, const Vec& action) const override {
    using boost::math::digamma;
    DensityGrad g{Vec::Zero(head_dim()), Vec::Zero(param_dim())};
    for (int i = 0; i < action_dim_; ++i) {
      const double x = (action(i) - box_.low(i)) / (box_.high(i) - box_.low(i));
      const Local l = local(head, i);
      const double dab = digamma(l.p.alpha + l.p.beta);
      const Eigen::Vector2d d(std::log(x) - digamma(l.p.alpha) + dab,
                              std::log1p(-x) - digamma(l.p.beta) + dab);
      scatter(l, d, g);
    }
    return g;
  }

  double entropy(const Vec& head, const EntropyNoise&) const override {
    double h = 0.0;
    for (int i = 0; i < action_dim_; ++i) {
      const BetaParams p = local(head, i).p;
      h += beta_entropy(p.alpha, p.beta) + std::log(box_.high(i) - box_.low(i));
    }
    return h;
  }

  DensityGrad entropy_grad(const Vec& head, const EntropyNoise&) const override {
    using boost::math::trigamma;
    DensityGrad g{Vec::Zero(head_dim()), Vec::Zero(param_dim())};
    for (int i = 0; i < action_dim_; ++i) {
      const Local l = local(head, i);
      const double a = l.p.alpha;
      const double b = l.p.beta;
      const double tab = trigamma(a + b);
      const Eigen::Vector2d d(-(a - 1.0) * trigamma(a) + (a + b - 2.0) * tab,
                              -(b - 1.0) * trigamma(b) + (a + b - 2.0) * tab);
      scatter(l, d, g);
    }
    return g;
  }

  double kl_divergence(const Vec& head, const PolicyDistribution& other,
                       const Vec& other_head) const override {
    const auto& o = dynamic_cast<const BetaDistributionBase&>(other);
    double kl = 0.0;
    for (int i = 0; i < action_dim_; ++i) {
      const BetaParams p = local(head, i).p;
      const BetaParams q = o.local(other_head, i).p;
      kl += beta_kl(p.alpha, p.beta, q.alpha, q.beta);
    }
    return kl;
  }

  DensityGrad fisher_product(const Vec& head, const Vec& d_head,
                             const Vec& d_params) const override {
    DensityGrad g{Vec::Zero(head_dim()), Vec::Zero(param_dim())};
    for (int i = 0; i < action_dim_; ++i) {
      const Local l = local(head, i);
      Eigen::Vector2d t = Eigen::Vector2d::Zero();
      for (const auto& [j, jac] : l.head_jac) t += jac * d_head(j);
      for (const auto& [j, jac] : l.param_jac) t += jac * d_params(j);
      scatter(l, beta_fisher(l.p.alpha, l.p.beta) * t, g);
    }
    return g;
  }

  Vec mean_action(const Vec& head) const override {
    Vec m(action_dim_);
    for (int i = 0; i < action_dim_; ++i) {
      const BetaParams p = local(head, i).p;
      m(i) = box_.low(i) + (box_.high(i) - box_.low(i)) * p.alpha / (p.alpha + p.beta);
    }
    return m;
  }

 protected:
  BetaDistributionBase(ActionBox box, int param_dim)
      : PolicyDistribution(box.dim(), param_dim), box_(std::move(box)) {
    box_.validate();
  }

  static void scatter(const Local& l, const Eigen::Vector2d& d, DensityGrad& g) {
    for (const auto& [j, jac] : l.head_jac) g.head(j) += jac.dot(d);
    for (const auto& [j, jac] : l.param_jac) g.params(j) += jac.dot(d);
  }

  ActionBox box_;
};

// alpha = softplus(h_alpha) + 1, beta = softplus(h_beta) + 1: unimodal by
// construction.
class BetaAlphaBetaDistribution final : public BetaDistributionBase {
 public:
  explicit BetaAlphaBetaDistribution(ActionBox box) : BetaDistributionBase(std::move(box), 0) {}

  DistributionKind kind() const override { return DistributionKind::kBetaAlphaBeta; }
  int head_dim() const override { return 2 * action_dim_; }
  std::vector<ParamSegment> layout() const override { return {}; }
  std::unique_ptr<PolicyDistribution> clone() const override {
    return std::make_unique<BetaAlphaBetaDistribution>(*this);
  }

  Local local(const Vec& head, int i) const override {
    Local l;
    const double ha = head(i);
    const double hb = head(action_dim_ + i);
    l.p = {softplus(ha) + 1.0, softplus(hb) + 1.0};
    l.head_jac = {{i, Eigen::Vector2d(sigmoid(ha), 0.0)},
                  {action_dim_ + i, Eigen::Vector2d(0.0, sigmoid(hb))}};
    return l;
  }
};

// Mean from the network through a logistic, state-independent std through
// softplus, projected under the variance bound when it is violated.
class BetaMeanStdDistribution final : public BetaDistributionBase {
 public:
  BetaMeanStdDistribution(ActionBox box, bool unimodal = true, double init_std = 0.2)
      : BetaDistributionBase(std::move(box), 0), unimodal_(unimodal) {
    if (!(init_std > 0)) throw ParameterError("beta_mean_std: init_std must be > 0");
    params_ = Vec::Constant(action_dim_, softplus_inverse(init_std));
  }

  DistributionKind kind() const override { return DistributionKind::kBetaMeanStd; }
  int head_dim() const override { return action_dim_; }
  std::vector<ParamSegment> layout() const override { return {{"std_raw", 0, action_dim_}}; }
  std::unique_ptr<PolicyDistribution> clone() const override {
    return std::make_unique<BetaMeanStdDistribution>(*this);
  }
  bool unimodal() const { return unimodal_; }

  // Number of dimensions whose std is projected at this head.
  int projected_count(const Vec& head) const {
    int n = 0;
    for (int i = 0; i < action_dim_; ++i) {
      const double mu = mean_of(head(i));
      const double s = softplus(params_(i));
      n += !(s * s < beta_variance_bound(mu, unimodal_));
    }
    return n;
  }

  Local local(const Vec& head, int i) const override {
    const double h = head(i);
    const double mu = mean_of(h);
    const double dmu_dh = mu * (1.0 - mu);
    const double sigma = softplus(params_(i));
    const BetaFromMeanStd r =
        beta_from_mean_std_quiet(mu, sigma, unimodal_, BoundViolation::kProject);
    const double s = r.variance;
    Local l;
    l.p = r.params;
    // Partials of (alpha, beta) w.r.t. (mu, s).
    const double om = 1.0 - mu;
    const Eigen::Vector2d d_mu((2.0 * mu - 3.0 * mu * mu) / s - 1.0, om * (1.0 - 3.0 * mu) / s + 1.0);
    const Eigen::Vector2d d_s(-mu * mu * om / (s * s), -mu * om * om / (s * s));
    if (r.projected) {
      const double ds_dmu = kBetaStdProjection * kBetaStdProjection *
                            beta_variance_bound_derivative(mu, unimodal_);
      l.head_jac = {{i, (d_mu + d_s * ds_dmu) * dmu_dh}};
      l.param_jac = {{i, Eigen::Vector2d::Zero()}};
    } else {
      l.head_jac = {{i, d_mu * dmu_dh}};
      l.param_jac = {{i, d_s * (2.0 * sigma * sigmoid(params_(i)))}};
    }
    return l;
  }

 private:
  static double mean_of(double h) {
    // Keep the mean strictly inside (0, 1) in floating point.
    return std::clamp(sigmoid(h), 1e-9, 1.0 - 1e-9);
  }

  bool unimodal_;
};

// ---------------------------------------------------------------------------
// Latent exploration: a ~ N(W x + b, Sigma_a + W Sigma_x W^T) where x is the
// last hidden layer of the policy network. W enters the covariance as a
// constant: no gradient flows to W through the covariance.

class LatentGaussianDistribution final : public PolicyDistribution {
 public:
  LatentGaussianDistribution(int action_dim, int latent_dim, double init_std_action = 0.3,
                             double init_std_latent = 0.3, double init_weight_scale = 0.01,
                             std::uint64_t init_seed = 0)
      : PolicyDistribution(action_dim, action_dim * latent_dim + 2 * action_dim + latent_dim),
        latent_dim_(latent_dim) {
    if (latent_dim < 1) throw ParameterError("latent_gaussian: latent_dim must be >= 1");
    if (!(init_std_action > 0) || !(init_std_latent > 0))
      throw ParameterError("latent_gaussian: initial stds must be > 0");
    Rng rng(init_seed);
    const Mat w = init_weight_scale * standard_normal(action_dim, latent_dim, rng);
    for (int i = 0; i < action_dim; ++i)
      for (int j = 0; j < latent_dim; ++j) params_(i * latent_dim + j) = w(i, j);
    params_.segment(bias_offset(), action_dim).setZero();
    params_.segment(log_std_action_offset(), action_dim).setConstant(std::log(init_std_action));
    params_.segment(log_std_latent_offset(), latent_dim).setConstant(std::log(init_std_latent));
    refresh();
  }

  DistributionKind kind() const override { return DistributionKind::kLatentGaussian; }
  bool bounded_support() const override { return false; }
  int head_dim() const override { return latent_dim_; }
  int latent_dim() const { return latent_dim_; }
  std::vector<ParamSegment> layout() const override {
    return {{"weight", 0, action_dim_ * latent_dim_},
            {"bias", bias_offset(), action_dim_},
            {"log_std_action", log_std_action_offset(), action_dim_},
            {"log_std_latent", log_std_latent_offset(), latent_dim_}};
  }
  std::unique_ptr<PolicyDistribution> clone() const override {
    return std::make_unique<LatentGaussianDistribution>(*this);
  }

  const Mat& weight() const { return weight_; }
  Vec bias() const { return params_.segment(bias_offset(), action_dim_); }
  Vec action_variance() const {
    return (2.0 * params_.segment(log_std_action_offset(), action_dim_)).array().exp();
  }
  Vec latent_variance() const {
    return (2.0 * params_.segment(log_std_latent_offset(), latent_dim_)).array().exp();
  }
  // Sigma_a + W Sigma_x W^T.
  const Mat& covariance() const { return cov_; }

  Vec mean(const Vec& head) const { return weight_ * head + bias(); }

  // Two-stage draw: x_hat ~ N(x, Sigma_x), a = W x_hat + b + eps.
  Vec sample(const Vec& head, Rng& rng) const override {
    check_head(head);
    const Vec x_hat = head + latent_variance().cwiseSqrt().cwiseProduct(
                                 standard_normal(latent_dim_, rng));
    const Vec eps = action_variance().cwiseSqrt().cwiseProduct(standard_normal(action_dim_, rng));
    return weight_ * x_hat + bias() + eps;
  }

  double log_density(const Vec& head, const Vec& action) const override {
    check_head(head);
    const Vec r = action - mean(head);
    return -0.5 * r.dot(cov_inv_ * r) - 0.5 * log_det_ - 0.5 * action_dim_ * kLogTwoPi;
  }

  DensityGrad log_density_grad(const Vec& head, const Vec& action) const override {
    const Vec r = cov_inv_ * (action - mean(head));
    const Mat g_cov = 0.5 * (r * r.transpose() - cov_inv_);
    return assemble(head, r, g_cov);
  }

  double entropy(const Vec&, const EntropyNoise&) const override {
    return 0.5 * log_det_ + 0.5 * action_dim_ * (kLogTwoPi + 1.0);
  }

  DensityGrad entropy_grad(const Vec& head, const EntropyNoise&) const override {
    DensityGrad g = assemble(head, Vec::Zero(action_dim_), 0.5 * cov_inv_);
    g.head.setZero();
    return g;
  }

  double kl_divergence(const Vec& head, const PolicyDistribution& other,
                       const Vec& other_head) const override {
    const auto& q = dynamic_cast<const LatentGaussianDistribution&>(other);
    const Vec dm = q.mean(other_head) - mean(head);
    return 0.5 * ((q.cov_inv_ * cov_).trace() + dm.dot(q.cov_inv_ * dm) - action_dim_ +
                  q.log_det_ - log_det_);
  }

  DensityGrad fisher_product(const Vec& head, const Vec& d_head,
                             const Vec& d_params) const override {
    const Mat dw = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(d_params.data(), action_dim_,
                                                                    latent_dim_);
    const Vec dm = weight_ * d_head + dw * head + d_params.segment(bias_offset(), action_dim_);
    const Vec y = cov_inv_ * dm;
    DensityGrad g{weight_.transpose() * y, Vec::Zero(param_dim())};
    write_mean_path(head, y, g.params);
    const int nc = action_dim_ + latent_dim_;
    g.params.segment(log_std_action_offset(), nc) =
        cov_fisher_ * d_params.segment(log_std_action_offset(), nc);
    return g;
  }

  Vec mean_action(const Vec& head) const override { return mean(head); }

  std::optional<GaussianMoments> gaussian_moments(const Vec& head) const override {
    return GaussianMoments{mean(head), cov_};
  }

  DensityGrad gaussian_moments_vjp(const Vec& head, const Vec& d_mean,
                                   const Mat& d_cov) const override {
    return assemble(head, d_mean, d_cov);
  }

 private:
  int bias_offset() const { return action_dim_ * latent_dim_; }
  int log_std_action_offset() const { return bias_offset() + action_dim_; }
  int log_std_latent_offset() const { return log_std_action_offset() + action_dim_; }

  void refresh() override {
    weight_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                             Eigen::RowMajor>>(params_.data(), action_dim_,
                                                               latent_dim_);
    const Vec va = action_variance();
    const Vec vx = latent_variance();
    cov_ = Mat(va.asDiagonal()) + weight_ * vx.asDiagonal() * weight_.transpose();
    Eigen::LLT<Mat> llt(cov_);
    if (llt.info() != Eigen::Success)
      throw ParameterError("latent_gaussian: covariance is not positive definite");
    cov_inv_ = llt.solve(Mat::Identity(action_dim_, action_dim_));
    const Mat lmat = llt.matrixL();
    log_det_ = 2.0 * lmat.diagonal().array().log().sum();
    // Fisher of the covariance parameters (log_std_action, log_std_latent):
    // F_ij = 1/2 tr(P dS_i P dS_j) with dS_i = 2 s_i^2 c_i c_i^T, c_i the
    // columns of [I, W] and P the precision.
    const int nc = action_dim_ + latent_dim_;
    Mat cols(action_dim_, nc);
    cols << Mat::Identity(action_dim_, action_dim_), weight_;
    Vec s2(nc);
    s2 << va, vx;
    const Mat gram = cols.transpose() * cov_inv_ * cols;
    cov_fisher_ = 2.0 * s2.asDiagonal() * gram.cwiseProduct(gram) * s2.asDiagonal();
  }

  void write_mean_path(const Vec& head, const Vec& d_mean, Vec& out) const {
    for (int i = 0; i < action_dim_; ++i)
      for (int j = 0; j < latent_dim_; ++j) out(i * latent_dim_ + j) = d_mean(i) * head(j);
    out.segment(bias_offset(), action_dim_) = d_mean;
  }

  // Gradient from d/dmean and d/dcov, with W held fixed in the covariance.
  DensityGrad assemble(const Vec& head, const Vec& d_mean, const Mat& d_cov) const {
    DensityGrad g{weight_.transpose() * d_mean, Vec::Zero(param_dim())};
    write_mean_path(head, d_mean, g.params);
    const Vec va = action_variance();
    const Vec vx = latent_variance();
    for (int i = 0; i < action_dim_; ++i)
      g.params(log_std_action_offset() + i) = 2.0 * va(i) * d_cov(i, i);
    for (int j = 0; j < latent_dim_; ++j) {
      const Vec w = weight_.col(j);
      g.params(log_std_latent_offset() + j) = 2.0 * vx(j) * w.dot(d_cov * w);
    }
    return g;
  }

  int latent_dim_;
  Mat weight_;
  Mat cov_;
  Mat cov_inv_;
  Mat cov_fisher_;
  double log_det_ = 0.0;
};

}  // namespace musclegail

#endif  // MUSCLEGAIL_POLICY_DIST_HPP_
