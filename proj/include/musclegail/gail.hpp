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

#ifndef MUSCLEGAIL_GAIL_HPP_
#define MUSCLEGAIL_GAIL_HPP_

// State-only GAIL with TRPO policy updates.
//
// One iteration: collect a rollout, take discriminator steps on expert versus
// policy states, reward every transition with softplus(logit(s')) plus the
// optional out-of-bounds penalty, estimate GAE advantages, take one TRPO step
// and refit the critic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "musclegail/errors.hpp"
#include "musclegail/expert.hpp"
#include "musclegail/explore.hpp"
#include "musclegail/limb_env.hpp"
#include "musclegail/mlp.hpp"
#include "musclegail/numeric.hpp"
#include "musclegail/optim.hpp"
#include "musclegail/policy_dist.hpp"
#include "musclegail/synergy.hpp"

namespace musclegail {

// Independent generator for a named stream of a run seed.
inline Rng derive_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream, 0x9e3779b9u};
  return Rng(seq);
}

// Running per-dimension mean and variance (batched parallel-merge update).
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim, double clip = 10.0)
      : mean_(Vec::Zero(dim)), var_(Vec::Ones(dim)), clip_(clip) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Vec& variance() const { return var_; }
  double count() const { return count_; }
  double clip() const { return clip_; }

  void set_state(Vec mean, Vec var, double count) {
    if (mean.size() != var.size()) throw ConfigError("normalizer: mean/variance size mismatch");
    mean_ = std::move(mean);
    var_ = std::move(var);
    count_ = count;
  }

  void update(const Mat& x) {
    if (x.cols() == 0) return;
    if (x.rows() != dim()) throw DomainError("normalizer: wrong observation size");
    const double n = static_cast<double>(x.cols());
    const Vec bm = x.rowwise().mean();
    const Vec bv = (x.colwise() - bm).array().square().rowwise().mean();
    if (count_ == 0) {
      mean_ = bm;
      var_ = bv;
      count_ = n;
      return;
    }
    const double total = count_ + n;
    const Vec delta = bm - mean_;
    mean_ += delta * (n / total);
    var_ = (var_ * count_ + bv * n + delta.array().square().matrix() * (count_ * n / total)) / total;
    count_ = total;
  }

  Mat apply(const Mat& x) const {
    if (x.rows() != dim()) throw DomainError("normalizer: wrong observation size");
    const Vec inv = (var_.array() + 1e-8).sqrt().inverse();
    Mat z = (x.colwise() - mean_).array().colwise() * inv.array();
    return z.cwiseMax(-clip_).cwiseMin(clip_);
  }

 private:
  Vec mean_;
  Vec var_;
  double count_ = 0.0;
  double clip_ = 10.0;
};

// ---------------------------------------------------------------------------
// Configuration.

struct PolicyConfig {
  DistributionKind family = DistributionKind::kGaussian;
  std::vector<int> hidden{64, 64};
  double init_std = 0.5;         // gaussian, squashed_gaussian, beta_mean_std
  double init_mean = 0.0;        // initial action mean of the unbounded families
  double output_scale = 0.01;    // last-layer init scale
  bool beta_unimodal = true;
  double latent_init_std_action = 0.3;
  double latent_init_std_latent = 0.3;
  double latent_init_weight_scale = 0.1;

  void validate() const {
    if (hidden.empty()) throw ConfigError("policy.hidden needs at least one layer");
    for (int h : hidden)
      if (h < 1) throw ConfigError("policy.hidden sizes must be >= 1");
    if (!(init_std > 0) || !(latent_init_std_action > 0) || !(latent_init_std_latent > 0))
      throw ConfigError("policy initial standard deviations must be > 0");
    if (!(output_scale >= 0) || !(latent_init_weight_scale >= 0))
      throw ConfigError("policy init scales must be >= 0");
  }
};

struct TrainConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double max_kl = 0.01;
  int cg_iterations = 10;
  double cg_damping = 0.1;
  double line_search_shrink = 0.8;
  int line_search_steps = 10;
  bool normalize_advantages = true;
  int entropy_samples = kDefaultEntropySamples;
  std::vector<int> critic_hidden{64, 64};
  double critic_learning_rate = 1e-3;
  int critic_epochs = 5;
  int critic_minibatch = 64;
  std::vector<int> disc_hidden{64, 64};
  double disc_learning_rate = 3e-4;
  int disc_epochs = 1;
  int disc_minibatch = 512;
  int steps_per_iteration = 2048;
  long total_steps = 200000;
  bool reset_from_expert = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw ConfigError("train.gamma must lie in (0, 1)");
    if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw ConfigError("train.gae_lambda must lie in [0, 1]");
    if (!(max_kl > 0)) throw ConfigError("train.max_kl must be > 0");
    if (cg_iterations < 1) throw ConfigError("train.cg_iterations must be >= 1");
    if (!(cg_damping >= 0)) throw ConfigError("train.cg_damping must be >= 0");
    if (!(line_search_shrink > 0 && line_search_shrink < 1))
      throw ConfigError("train.line_search_shrink must lie in (0, 1)");
    if (line_search_steps < 1) throw ConfigError("train.line_search_steps must be >= 1");
    if (entropy_samples < 1) throw ConfigError("train.entropy_samples must be >= 1");
    if (!(critic_learning_rate > 0) || !(disc_learning_rate > 0))
      throw ConfigError("learning rates must be > 0");
    if (critic_epochs < 0 || disc_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (critic_minibatch < 1 || disc_minibatch < 1) throw ConfigError("minibatch sizes must be >= 1");
    if (steps_per_iteration < 1) throw ConfigError("train.steps_per_iteration must be >= 1");
    if (total_steps < 0) throw ConfigError("train.total_steps must be >= 0");
    for (int h : critic_hidden)
      if (h < 1) throw ConfigError("train.critic_hidden sizes must be >= 1");
    for (int h : disc_hidden)
      if (h < 1) throw ConfigError("train.disc_hidden sizes must be >= 1");
  }
};

inline std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  if (out > 0) s.push_back(out);
  return s;
}

// ---------------------------------------------------------------------------
// Policy: network body feeding a distribution head.

inline std::unique_ptr<PolicyDistribution> make_distribution(const PolicyConfig& cfg,
                                                             const ActionBox& box,
                                                             std::uint64_t seed) {
  const int d = box.dim();
  switch (cfg.family) {
    case DistributionKind::kGaussian:
      return std::make_unique<GaussianDistribution>(d, cfg.init_std);
    case DistributionKind::kSquashedGaussian:
      return std::make_unique<SquashedGaussianDistribution>(box, cfg.init_std);
    case DistributionKind::kBetaAlphaBeta:
      return std::make_unique<BetaAlphaBetaDistribution>(box);
    case DistributionKind::kBetaMeanStd:
      return std::make_unique<BetaMeanStdDistribution>(box, cfg.beta_unimodal, cfg.init_std);
    case DistributionKind::kLatentGaussian: {
      auto dist = std::make_unique<LatentGaussianDistribution>(
          d, cfg.hidden.back(), cfg.latent_init_std_action, cfg.latent_init_std_latent,
          cfg.latent_init_weight_scale, seed);
      Vec p = dist->params();
      const auto seg = dist->layout()[1];
      p.segment(seg.offset, seg.size).setConstant(cfg.init_mean);
      dist->set_params(p);
      return dist;
    }
  }
  throw ConfigError("unknown policy family");
}

class Policy {
 public:
  Policy() = default;
  Policy(PolicyConfig cfg, int obs_dim, ActionBox box, std::uint64_t seed)
      : cfg_(std::move(cfg)), box_(std::move(box)), obs_norm_(obs_dim) {
    cfg_.validate();
    box_.validate();
    Rng rng = derive_rng(seed, 11);
    dist_ = make_distribution(cfg_, box_, rng());
    const bool latent = cfg_.family == DistributionKind::kLatentGaussian;
    body_ = latent ? Mlp(layer_sizes(obs_dim, cfg_.hidden, 0), true, rng)
                   : Mlp(layer_sizes(obs_dim, cfg_.hidden, dist_->head_dim()), false, rng,
                         cfg_.output_scale);
    if (cfg_.family == DistributionKind::kGaussian ||
        cfg_.family == DistributionKind::kSquashedGaussian) {
      Vec p = body_.params();
      const auto seg = body_.layout().back();
      p.segment(seg.offset, seg.size).setConstant(cfg_.init_mean);
      body_.set_params(p);
    }
  }
  Policy(const Policy& o)
      : cfg_(o.cfg_), box_(o.box_), body_(o.body_), dist_(o.dist_ ? o.dist_->clone() : nullptr),
        obs_norm_(o.obs_norm_) {}
  Policy& operator=(const Policy& o) {
    if (this != &o) {
      cfg_ = o.cfg_;
      box_ = o.box_;
      body_ = o.body_;
      dist_ = o.dist_ ? o.dist_->clone() : nullptr;
      obs_norm_ = o.obs_norm_;
    }
    return *this;
  }
  Policy(Policy&&) = default;
  Policy& operator=(Policy&&) = default;

  const PolicyConfig& config() const { return cfg_; }
  const ActionBox& box() const { return box_; }
  const Mlp& body() const { return body_; }
  Mlp& body() { return body_; }
  const PolicyDistribution& dist() const { return *dist_; }
  PolicyDistribution& dist() { return *dist_; }
  RunningNormalizer& obs_normalizer() { return obs_norm_; }
  const RunningNormalizer& obs_normalizer() const { return obs_norm_; }
  int action_dim() const { return dist_->action_dim(); }
  int obs_dim() const { return body_.input_dim(); }

  int param_dim() const { return body_.param_dim() + dist_->param_dim(); }
  Vec params() const {
    Vec p(param_dim());
    p << body_.params(), dist_->params();
    return p;
  }
  void set_params(const Vec& p) {
    if (p.size() != param_dim()) throw ParameterError("policy: parameter vector has wrong size");
    body_.set_params(p.head(body_.param_dim()));
    dist_->set_params(p.tail(dist_->param_dim()));
  }

  Mlp::Cache forward_cache(const Mat& obs) const { return body_.forward_cache(obs_norm_.apply(obs)); }
  Mat heads(const Mat& obs) const { return forward_cache(obs).output(); }
  Vec head(const Vec& obs) const { return heads(Mat(obs)).col(0); }

  Vec sample(const Vec& obs, Rng& rng) const { return dist_->sample(head(obs), rng); }
  Vec mean_action(const Vec& obs) const { return dist_->mean_action(head(obs)); }
  double log_prob(const Vec& obs, const Vec& action) const {
    return dist_->log_density(head(obs), action);
  }

 private:
  PolicyConfig cfg_;
  ActionBox box_;
  Mlp body_;
  std::unique_ptr<PolicyDistribution> dist_;
  RunningNormalizer obs_norm_;
};

// ---------------------------------------------------------------------------
// Rollouts.

struct TransitionBatch {
  Mat states;        // obs_dim x n
  Mat next_states;   // obs_dim x n
  Mat actions;       // policy action space, as sampled
  Mat executed;      // muscle controls after mapping and clamping
  Vec rewards;       // discriminator reward + oob reward
  Vec disc_rewards;
  Vec oob_rewards;
  Vec task_rewards;
  Vec log_probs;     // behavior log q(a|s) of `actions`
  Vec advantages;
  Vec value_targets;
  std::vector<char> absorbing;  // s' is absorbing: bootstrap with 0
  std::vector<char> episode_end;  // absorbing, truncated, or last of batch
  double gamma = 0.99;

  int size() const { return static_cast<int>(log_probs.size()); }
};

struct EpisodeStats {
  std::vector<int> lengths;
  std::vector<double> task_returns;
};

// Maps a policy-space action to muscle space without clamping.
class ActionMapper {
 public:
  ActionMapper() = default;
  explicit ActionMapper(const SynergyMap* map) : map_(map) {}
  bool synergy() const { return map_ != nullptr; }
  Vec unclamped(const Vec& a) const { return map_ ? map_->to_muscle_space_unclamped(a) : a; }
  Vec executed(const Vec& a) const { return unclamped(a).cwiseMax(0.0).cwiseMin(1.0); }

 private:
  const SynergyMap* map_ = nullptr;
};

// Environment plus carried episode state, so that rollouts continue across
// iterations.
class RolloutWorker {
 public:
  RolloutWorker(LimbConfig cfg, std::uint64_t seed, std::vector<Vec> reset_states = {})
      : env_(std::move(cfg)), rng_(derive_rng(seed, 21)) {
    env_.set_reset_states(std::move(reset_states));
    obs_ = env_.reset(rng_);
  }

  LimbEnv& env() { return env_; }
  Rng& rng() { return rng_; }

  TransitionBatch collect(const Policy& pol, const ActionMapper& mapper, int steps,
                          const ObjectiveConfig& obj, EpisodeStats& stats) {
    const int od = pol.obs_dim();
    const int ad = pol.action_dim();
    const int md = env_.action_dim();
    TransitionBatch b;
    b.states.resize(od, steps);
    b.next_states.resize(od, steps);
    b.actions.resize(ad, steps);
    b.executed.resize(md, steps);
    b.oob_rewards = Vec::Zero(steps);
    b.task_rewards.resize(steps);
    b.log_probs.resize(steps);
    b.absorbing.assign(steps, 0);
    b.episode_end.assign(steps, 0);
    for (int t = 0; t < steps; ++t) {
      const Vec head = pol.head(obs_);
      const Vec a = pol.dist().sample(head, rng_);
      b.states.col(t) = obs_;
      b.actions.col(t) = a;
      b.log_probs(t) = pol.dist().log_density(head, a);
      const Vec u = mapper.unclamped(a);
      if (obj.uses_oob_penalty()) b.oob_rewards(t) = oob_penalty(u, obj);
      const Vec exec = u.cwiseMax(0.0).cwiseMin(1.0);
      b.executed.col(t) = exec;
      const LimbEnv::Transition tr =
          env_.step({exec.data(), static_cast<std::size_t>(exec.size())});
      b.next_states.col(t) = tr.observation;
      b.task_rewards(t) = tr.task_reward;
      episode_return_ += tr.task_reward;
      ++episode_length_;
      b.absorbing[t] = tr.absorbing;
      if (tr.absorbing || tr.truncated) {
        b.episode_end[t] = 1;
        stats.lengths.push_back(episode_length_);
        stats.task_returns.push_back(episode_return_);
        episode_length_ = 0;
        episode_return_ = 0.0;
        obs_ = env_.reset(rng_);
      } else {
        obs_ = tr.observation;
      }
    }
    if (steps > 0) b.episode_end[steps - 1] = 1;
    return b;
  }

 private:
  LimbEnv env_;
  Rng rng_;
  Vec obs_;
  int episode_length_ = 0;
  double episode_return_ = 0.0;
};

// ---------------------------------------------------------------------------
// Advantages.

struct GaeResult {
  Vec advantages;
  Vec value_targets;
};

// GAE(gamma, lambda). `next_values` holds V(s_{t+1}); it is ignored where
// `absorbing` is set. Recursion stops at every `episode_end`.
inline GaeResult gae_advantages(const Vec& rewards, const Vec& values, const Vec& next_values,
                                const std::vector<char>& absorbing,
                                const std::vector<char>& episode_end, double gamma,
                                double lambda) {
  const auto n = rewards.size();
  if (values.size() != n || next_values.size() != n ||
      static_cast<Eigen::Index>(absorbing.size()) != n ||
      static_cast<Eigen::Index>(episode_end.size()) != n)
    throw DomainError("gae_advantages: inconsistent batch sizes");
  GaeResult r;
  r.advantages = Vec::Zero(n);
  double running = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double boot = absorbing[t] ? 0.0 : next_values(t);
    const double delta = rewards(t) + gamma * boot - values(t);
    if (episode_end[t]) running = 0.0;
    running = delta + gamma * lambda * running;
    r.advantages(t) = running;
  }
  r.value_targets = r.advantages + values;
  return r;
}

// ---------------------------------------------------------------------------
// Discriminator.

// -log(1 - sigmoid(logit)) evaluated without cancellation.
inline double gail_reward_from_logit(double logit) { return softplus(logit); }

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int obs_dim, const std::vector<int>& hidden, std::uint64_t seed)
      : norm_(obs_dim) {
    Rng rng = derive_rng(seed, 31);
    net_ = Mlp(layer_sizes(obs_dim, hidden, 1), false, rng);
  }

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  RunningNormalizer& normalizer() { return norm_; }
  const RunningNormalizer& normalizer() const { return norm_; }

  Vec logits(const Mat& states) const { return net_.forward(norm_.apply(states)).row(0).transpose(); }
  double logit(const Vec& s) const { return logits(Mat(s))(0); }
  double probability(const Vec& s) const { return sigmoid(logit(s)); }
  Vec rewards(const Mat& states) const {
    return logits(states).unaryExpr([](double l) { return gail_reward_from_logit(l); });
  }

 private:
  Mlp net_;
  RunningNormalizer norm_;
};

inline double gail_reward(const Discriminator& d, const Vec& state) {
  return gail_reward_from_logit(d.logit(state));
}

struct DiscLoss {
  double value = 0.0;
  double accuracy = 0.0;
  Vec grad;
};

// mean_E softplus(-l) + mean_pi softplus(l): -log D on experts and
// -log(1 - D) on policy states.
inline DiscLoss discriminator_loss(const Discriminator& d, const Mat& expert, const Mat& policy,
                                   bool with_grad = true) {
  if (expert.cols() == 0 || policy.cols() == 0)
    throw DomainError("discriminator_loss: empty batch");
  Mat both(expert.rows(), expert.cols() + policy.cols());
  both << expert, policy;
  const Mlp::Cache c = d.net().forward_cache(d.normalizer().apply(both));
  const Eigen::RowVectorXd l = c.output().row(0);
  const double ne = static_cast<double>(expert.cols());
  const double np = static_cast<double>(policy.cols());
  DiscLoss out;
  Mat g(1, both.cols());
  int correct = 0;
  for (Eigen::Index k = 0; k < both.cols(); ++k) {
    if (k < expert.cols()) {
      out.value += softplus(-l(k)) / ne;
      g(0, k) = -sigmoid(-l(k)) / ne;
      correct += l(k) > 0;
    } else {
      out.value += softplus(l(k)) / np;
      g(0, k) = sigmoid(l(k)) / np;
      correct += l(k) < 0;
    }
  }
  out.accuracy = correct / static_cast<double>(both.cols());
  if (with_grad) out.grad = d.net().backward(c, g);
  return out;
}

struct DiscUpdate {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Minibatch Adam steps on the logistic loss; experts labeled 1, policy 0.
// Returns loss and accuracy on the full batches after the update.
inline DiscUpdate discriminator_update(Discriminator& d, Adam& opt, const Mat& expert,
                                       const Mat& policy, int epochs, int minibatch, Rng& rng) {
  if (expert.cols() == 0 || policy.cols() == 0)
    throw DomainError("discriminator_update: both batches must be nonempty");
  Mat both(expert.rows(), expert.cols() + policy.cols());
  both << expert, policy;
  d.normalizer().update(both);
  const int n = static_cast<int>(std::max(expert.cols(), policy.cols()));
  std::vector<int> pe(static_cast<std::size_t>(expert.cols())), pp(static_cast<std::size_t>(policy.cols()));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(pe.begin(), pe.end(), 0);
    std::iota(pp.begin(), pp.end(), 0);
    std::shuffle(pe.begin(), pe.end(), rng);
    std::shuffle(pp.begin(), pp.end(), rng);
    for (int start = 0; start < n; start += minibatch) {
      const int m = std::min(minibatch, n - start);
      Mat eb(expert.rows(), m), pb(policy.rows(), m);
      for (int k = 0; k < m; ++k) {
        eb.col(k) = expert.col(pe[static_cast<std::size_t>((start + k) % pe.size())]);
        pb.col(k) = policy.col(pp[static_cast<std::size_t>((start + k) % pp.size())]);
      }
      Vec p = d.net().params();
      opt.step(p, discriminator_loss(d, eb, pb).grad);
      d.net().set_params(p);
    }
  }
  const DiscLoss fin = discriminator_loss(d, expert, policy, false);
  return {fin.value, fin.accuracy};
}

// ---------------------------------------------------------------------------
// Critic.

struct Critic {
  Mlp net;
  Vec values(const Mat& obs, const RunningNormalizer& norm) const {
    return net.forward(norm.apply(obs)).row(0).transpose();
  }
};

inline double critic_loss(const Critic& c, const Mat& normalized_obs, const Vec& targets,
                          Vec* grad = nullptr) {
  const Mlp::Cache cache = c.net.forward_cache(normalized_obs);
  const Eigen::RowVectorXd err = cache.output().row(0) - targets.transpose();
  const double n = static_cast<double>(targets.size());
  if (grad) *grad = c.net.backward(cache, Mat(err * (2.0 / n)));
  return err.squaredNorm() / n;
}

// Returns the full-batch loss before the first and after every epoch.
inline std::vector<double> fit_critic(Critic& c, Adam& opt, const Mat& obs,
                                      const RunningNormalizer& norm, const Vec& targets,
                                      int epochs, int minibatch, Rng& rng) {
  const Mat x = norm.apply(obs);
  const int n = static_cast<int>(targets.size());
  std::vector<double> losses{critic_loss(c, x, targets)};
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int start = 0; start < n; start += minibatch) {
      const int m = std::min(minibatch, n - start);
      Mat xb(x.rows(), m);
      Vec tb(m);
      for (int k = 0; k < m; ++k) {
        xb.col(k) = x.col(perm[static_cast<std::size_t>(start + k)]);
        tb(k) = targets(perm[static_cast<std::size_t>(start + k)]);
      }
      Vec g;
      critic_loss(c, xb, tb, &g);
      Vec p = c.net.params();
      opt.step(p, g);
      c.net.set_params(p);
    }
    losses.push_back(critic_loss(c, x, targets));
  }
  return losses;
}

// ---------------------------------------------------------------------------
// TRPO.

struct PolicyLossTerms {
  double total = 0.0;
  double surrogate = 0.0;     // mean ratio * advantage
  double entropy = 0.0;       // mean entropy over states
  double entropy_loss = 0.0;  // -lambda H
  double target_entropy_loss = 0.0;
  double flipped_kl_loss = 0.0;
  double mean_abs_action_mean = 0.0;
  Vec grad;
};

// Loss minimized by the TRPO step:
//   -E[pi/q A] - lambda H + lambda_TE (H - h)^2 + lambda_FKL E[KL(U || pi)]
// with entropy terms on the batch-mean entropy.
inline PolicyLossTerms policy_loss(const Policy& pol, const Mat& states, const Mat& actions,
                                   const Vec& log_q, const Vec& advantages,
                                   const ObjectiveConfig& obj, const EntropyNoise& noise,
                                   bool with_grad) {
  const int n = static_cast<int>(states.cols());
  if (n == 0) throw DomainError("policy_loss: empty batch");
  const Mlp::Cache cache = pol.forward_cache(states);
  const Mat& heads = cache.output();
  const PolicyDistribution& dist = pol.dist();
  PolicyLossTerms r;
  Mat d_heads = Mat::Zero(dist.head_dim(), n);
  Vec d_params = Vec::Zero(dist.param_dim());
  const bool need_entropy = obj.uses_entropy_bonus() || obj.uses_target_entropy();
  std::vector<DensityGrad> ent_grads;
  for (int s = 0; s < n; ++s) {
    const Vec head = heads.col(s);
    const double lp = dist.log_density(head, actions.col(s));
    const double ratio = std::exp(lp - log_q(s));
    r.surrogate += ratio * advantages(s) / n;
    r.entropy += dist.entropy(head, noise) / n;
    r.mean_abs_action_mean += dist.mean_action(head).cwiseAbs().mean() / n;
    if (with_grad) {
      const double w = -ratio * advantages(s) / n;
      if (w != 0.0) {
        const DensityGrad g = dist.log_density_grad(head, actions.col(s));
        d_heads.col(s) += w * g.head;
        d_params += w * g.params;
      }
      if (need_entropy) ent_grads.push_back(dist.entropy_grad(head, noise));
    }
  }
  double d_entropy = 0.0;  // d total / d mean entropy
  if (obj.uses_entropy_bonus()) {
    r.entropy_loss = entropy_bonus(r.entropy, obj);
    d_entropy -= obj.lambda_entropy;
  }
  if (obj.uses_target_entropy()) {
    r.target_entropy_loss = target_entropy_loss(r.entropy, obj);
    d_entropy += target_entropy_loss_slope(r.entropy, obj);
  }
  r.total = -r.surrogate + r.entropy_loss + r.target_entropy_loss;
  if (with_grad && need_entropy && d_entropy != 0.0) {
    for (int s = 0; s < n; ++s) {
      d_heads.col(s) += (d_entropy / n) * ent_grads[static_cast<std::size_t>(s)].head;
      d_params += (d_entropy / n) * ent_grads[static_cast<std::size_t>(s)].params;
    }
  }
  if (obj.uses_flipped_kl()) {
    const FlippedKlLoss fk = flipped_kl_loss(dist, heads, obj);
    r.flipped_kl_loss = fk.value;
    r.total += fk.value;
    if (with_grad) {
      d_heads += fk.d_heads;
      d_params += fk.d_params;
    }
  }
  if (with_grad) {
    r.grad.resize(pol.param_dim());
    r.grad << pol.body().backward(cache, d_heads), d_params;
  }
  return r;
}

// Mean over states of KL(a(s) || b(s)).
inline double mean_kl(const Policy& a, const Policy& b, const Mat& states) {
  const Mat ha = a.heads(states);
  const Mat hb = b.heads(states);
  double kl = 0.0;
  for (Eigen::Index s = 0; s < states.cols(); ++s)
    kl += a.dist().kl_divergence(ha.col(s), b.dist(), hb.col(s));
  return kl / static_cast<double>(states.cols());
}

// Fisher-vector product of the batch-mean KL Hessian at the current policy.
class FisherOperator {
 public:
  FisherOperator(const Policy& pol, const Mat& states, double damping)
      : pol_(pol), cache_(pol.forward_cache(states)), damping_(damping) {}

  Vec operator()(const Vec& v) const {
    const int nb = pol_.body().param_dim();
    const PolicyDistribution& dist = pol_.dist();
    const Vec v_dist = v.tail(dist.param_dim());
    const Mat jv = pol_.body().jvp(cache_, v.head(nb));
    const Mat& heads = cache_.output();
    const Eigen::Index n = heads.cols();
    Mat g_heads(dist.head_dim(), n);
    Vec g_params = Vec::Zero(dist.param_dim());
    for (Eigen::Index s = 0; s < n; ++s) {
      const DensityGrad g = dist.fisher_product(heads.col(s), jv.col(s), v_dist);
      g_heads.col(s) = g.head / static_cast<double>(n);
      g_params += g.params / static_cast<double>(n);
    }
    Vec out(v.size());
    out << pol_.body().backward(cache_, g_heads), g_params;
    return out + damping_ * v;
  }

 private:
  const Policy& pol_;
  Mlp::Cache cache_;
  double damping_;
};

struct TrpoDiagnostics {
  bool accepted = false;
  int backtracks = 0;
  double kl = 0.0;
  double surrogate = 0.0;       // at the old policy
  double improvement = 0.0;     // decrease of the total loss
  double expected_improvement = 0.0;
  double entropy = 0.0;
  double mean_abs_action_mean = 0.0;
  double entropy_loss = 0.0;
  double target_entropy_loss = 0.0;
  double flipped_kl_loss = 0.0;
  double policy_loss = 0.0;
  int cg_iterations = 0;
};

inline TrpoDiagnostics trpo_step(Policy& pol, const TransitionBatch& b, const TrainConfig& cfg,
                                 const ObjectiveConfig& obj, Rng& rng) {
  if (b.size() == 0) throw DomainError("trpo_step: empty batch");
  if (!b.advantages.allFinite()) throw NumericError("trpo_step: non-finite advantages");
  Vec adv = b.advantages;
  if (cfg.normalize_advantages && adv.size() > 1) {
    const double mu = adv.mean();
    const double sd = std::sqrt((adv.array() - mu).square().mean());
    if (sd > 1e-8) adv = (adv.array() - mu) / sd;
  }
  const EntropyNoise noise = standard_normal(pol.action_dim(), cfg.entropy_samples, rng);
  const PolicyLossTerms before =
      policy_loss(pol, b.states, b.actions, b.log_probs, adv, obj, noise, true);
  TrpoDiagnostics dg;
  dg.surrogate = before.surrogate;
  dg.entropy = before.entropy;
  dg.mean_abs_action_mean = before.mean_abs_action_mean;
  dg.entropy_loss = before.entropy_loss;
  dg.target_entropy_loss = before.target_entropy_loss;
  dg.flipped_kl_loss = before.flipped_kl_loss;
  dg.policy_loss = before.total;
  if (before.grad.squaredNorm() == 0.0) return dg;

  const FisherOperator fisher(pol, b.states, cfg.cg_damping);
  const CgResult cg = conjugate_gradient(fisher, -before.grad, cfg.cg_iterations);
  dg.cg_iterations = cg.iterations;
  const double shs = cg.x.dot(fisher(cg.x));
  if (!(shs > 0) || !std::isfinite(shs)) {
    spdlog::warn("trpo_step: degenerate natural gradient; update skipped");
    return dg;
  }
  const Vec full_step = std::sqrt(2.0 * cfg.max_kl / shs) * cg.x;
  const Vec theta = pol.params();
  const Policy old = pol;
  double frac = 1.0;
  for (int k = 0; k < cfg.line_search_steps; ++k, frac *= cfg.line_search_shrink) {
    try {
      pol.set_params(theta + frac * full_step);
    } catch (const ParameterError&) {
      continue;
    }
    const PolicyLossTerms after =
        policy_loss(pol, b.states, b.actions, b.log_probs, adv, obj, noise, false);
    const double kl = mean_kl(old, pol, b.states);
    if (std::isfinite(after.total) && std::isfinite(kl) && after.total < before.total &&
        kl <= cfg.max_kl) {
      dg.accepted = true;
      dg.backtracks = k;
      dg.kl = kl;
      dg.improvement = before.total - after.total;
      dg.expected_improvement = -frac * before.grad.dot(full_step);
      return dg;
    }
  }
  pol.set_params(theta);
  dg.backtracks = cfg.line_search_steps;
  spdlog::info("trpo_step: line search exhausted after {} steps; policy unchanged",
               cfg.line_search_steps);
  return dg;
}

// ---------------------------------------------------------------------------
// Training loop.

struct MetricsRow {
  int iteration = 0;
  long env_steps = 0;
  int episodes = 0;
  double task_return = 0.0;     // mean task reward per completed episode
  double episode_length = 0.0;
  double gail_reward = 0.0;     // per step
  double oob_reward = 0.0;      // per step
  double entropy = 0.0;
  double abs_action_mean = 0.0;
  double disc_loss = 0.0;
  double disc_accuracy = 0.0;
  double critic_loss = 0.0;
  double surrogate = 0.0;
  double policy_loss = 0.0;
  double entropy_loss = 0.0;
  double target_entropy_loss = 0.0;
  double flipped_kl_loss = 0.0;
  double kl = 0.0;
  double improvement = 0.0;
  int backtracks = 0;
  int accepted = 0;
  int projected = 0;            // beta_mean_std std projections in the rollout
};

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "iteration",     "env_steps",       "episodes",        "task_return",
      "episode_length", "gail_reward",    "oob_reward",      "entropy",
      "abs_action_mean", "disc_loss",     "disc_accuracy",   "critic_loss",
      "surrogate",     "policy_loss",     "entropy_loss",    "target_entropy_loss",
      "flipped_kl_loss", "kl",            "improvement",     "backtracks",
      "accepted",      "projected"};
  return cols;
}

inline std::string format_number(double v) { return fmt::format("{:.10g}", v); }

inline std::string metrics_csv_header() {
  std::string s;
  for (const auto& c : metrics_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

inline std::string metrics_csv_row(const MetricsRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                     r.iteration, r.env_steps, r.episodes, format_number(r.task_return),
                     format_number(r.episode_length), format_number(r.gail_reward),
                     format_number(r.oob_reward), format_number(r.entropy),
                     format_number(r.abs_action_mean), format_number(r.disc_loss),
                     format_number(r.disc_accuracy), format_number(r.critic_loss),
                     format_number(r.surrogate), format_number(r.policy_loss),
                     format_number(r.entropy_loss), format_number(r.target_entropy_loss),
                     format_number(r.flipped_kl_loss), format_number(r.kl),
                     format_number(r.improvement), r.backtracks, r.accepted, r.projected);
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = metrics_csv_header() + "\n";
  for (const auto& r : rows) s += metrics_csv_row(r) + "\n";
  return s;
}

struct TrainResult {
  Policy policy;
  Critic critic;
  Discriminator discriminator;
  std::vector<MetricsRow> metrics;
  std::vector<TrpoDiagnostics> diagnostics;
};

// Action box of the policy: the muscle box [0, 1]^|A|, or for synergy
// actions an unbounded placeholder box of the synergy dimension.
inline ActionBox policy_action_box(const LimbConfig& env, const SynergyMap* synergy) {
  if (synergy) return {Vec::Constant(synergy->n_syn(), -1.0), Vec::Constant(synergy->n_syn(), 1.0)};
  return ActionBox::unit(env.num_muscles());
}

inline void check_training_setup(const LimbConfig& env, const ExpertTrajectory& expert,
                                 const PolicyConfig& pcfg, const ObjectiveConfig& obj,
                                 const SynergyMap* synergy, const TrainConfig& tcfg) {
  env.validate();
  pcfg.validate();
  obj.validate();
  tcfg.validate();
  if (expert.columns.size() != static_cast<std::size_t>(kObservationDim))
    throw ConfigError("expert data has " + std::to_string(expert.columns.size()) +
                      " columns; the environment observes " + std::to_string(kObservationDim));
  for (int i = 0; i < kObservationDim; ++i)
    if (expert.columns[static_cast<std::size_t>(i)] != observation_names()[static_cast<std::size_t>(i)])
      throw ConfigError("expert column '" + expert.columns[static_cast<std::size_t>(i)] +
                        "' does not match observation '" + observation_names()[static_cast<std::size_t>(i)] + "'");
  if (expert.num_rows() == 0) throw ConfigError("expert data is empty");
  if (synergy) {
    if (!synergy->fitted()) throw ConfigError("synergy map is not fitted");
    if (synergy->num_actions() != env.num_muscles())
      throw ConfigError("synergy map has " + std::to_string(synergy->num_actions()) +
                        " muscles; the environment has " + std::to_string(env.num_muscles()));
    if (obj.uses_flipped_kl())
      throw ConfigError("flipped_kl needs an action box and cannot act in synergy space");
  }
  const bool unbounded = pcfg.family == DistributionKind::kGaussian ||
                         pcfg.family == DistributionKind::kLatentGaussian;
  if (obj.uses_flipped_kl() && !unbounded)
    throw ConfigError("flipped_kl requires the gaussian or latent_gaussian family");
  if (!synergy && obj.bounds.dim() != env.num_muscles())
    throw ConfigError("objective bounds have the wrong dimension");
}

using IterationCallback = std::function<void(const MetricsRow&)>;
// Observes every executed muscle control (column) of each rollout.
using ActionRecorder = std::function<void(const Mat&)>;

inline TrainResult train_gail(const LimbConfig& env_cfg, const ExpertTrajectory& expert,
                              const PolicyConfig& pcfg, ObjectiveConfig obj,
                              const SynergyMap* synergy, const TrainConfig& tcfg,
                              const IterationCallback& on_iteration = {},
                              const ActionRecorder& recorder = {}) {
  if (!synergy) obj.bounds = ActionBox::unit(env_cfg.num_muscles());
  check_training_setup(env_cfg, expert, pcfg, obj, synergy, tcfg);
  const Mat expert_states = expert.stacked();
  const int od = kObservationDim;
  TrainResult res{Policy(pcfg, od, policy_action_box(env_cfg, synergy), tcfg.seed), Critic{},
                  Discriminator(od, tcfg.disc_hidden, tcfg.seed), {}, {}};
  {
    Rng crng = derive_rng(tcfg.seed, 41);
    res.critic.net = Mlp(layer_sizes(od, tcfg.critic_hidden, 1), false, crng);
  }
  res.policy.obs_normalizer().update(expert_states);
  Adam disc_opt(res.discriminator.net().param_dim(), tcfg.disc_learning_rate);
  Adam critic_opt(res.critic.net.param_dim(), tcfg.critic_learning_rate);
  std::vector<Vec> resets;
  if (tcfg.reset_from_expert)
    for (Eigen::Index k = 0; k < expert_states.cols(); ++k) resets.push_back(expert_states.col(k));
  RolloutWorker worker(env_cfg, tcfg.seed, std::move(resets));
  Rng rng = derive_rng(tcfg.seed, 51);
  const ActionMapper mapper(synergy);
  std::uniform_int_distribution<Eigen::Index> pick(0, expert_states.cols() - 1);

  long steps_done = 0;
  MetricsRow last;
  for (int it = 0; steps_done < tcfg.total_steps; ++it) {
    const int n = static_cast<int>(std::min<long>(tcfg.steps_per_iteration, tcfg.total_steps - steps_done));
    EpisodeStats stats;
    TransitionBatch b = worker.collect(res.policy, mapper, n, obj, stats);
    b.gamma = tcfg.gamma;
    steps_done += n;
    if (recorder) recorder(b.executed);

    MetricsRow row;
    if (const auto* beta = dynamic_cast<const BetaMeanStdDistribution*>(&res.policy.dist())) {
      const Mat heads = res.policy.heads(b.states);
      for (int s = 0; s < n; ++s) row.projected += beta->projected_count(heads.col(s)) > 0;
      if (row.projected > 0)
        spdlog::warn("iteration {}: beta std projected onto the variance bound in {} of {} states",
                     it, row.projected, n);
    }

    Mat expert_batch(od, n);
    for (int k = 0; k < n; ++k) expert_batch.col(k) = expert_states.col(pick(rng));
    const DiscUpdate du = discriminator_update(res.discriminator, disc_opt, expert_batch,
                                               b.next_states, tcfg.disc_epochs,
                                               tcfg.disc_minibatch, rng);
    b.disc_rewards = res.discriminator.rewards(b.next_states);
    b.rewards = b.disc_rewards + b.oob_rewards;

    const RunningNormalizer& norm = res.policy.obs_normalizer();
    const Vec values = res.critic.values(b.states, norm);
    const Vec next_values = res.critic.values(b.next_states, norm);
    GaeResult gae = gae_advantages(b.rewards, values, next_values, b.absorbing, b.episode_end,
                                   tcfg.gamma, tcfg.gae_lambda);
    b.advantages = std::move(gae.advantages);
    b.value_targets = std::move(gae.value_targets);

    const TrpoDiagnostics dg = trpo_step(res.policy, b, tcfg, obj, rng);
    const std::vector<double> closs = fit_critic(res.critic, critic_opt, b.states, norm,
                                                 b.value_targets, tcfg.critic_epochs,
                                                 tcfg.critic_minibatch, rng);
    res.policy.obs_normalizer().update(b.states);

    row.iteration = it;
    row.env_steps = steps_done;
    row.episodes = static_cast<int>(stats.lengths.size());
    if (row.episodes > 0) {
      row.task_return = std::accumulate(stats.task_returns.begin(), stats.task_returns.end(), 0.0) /
                        row.episodes;
      row.episode_length =
          std::accumulate(stats.lengths.begin(), stats.lengths.end(), 0.0) / row.episodes;
    } else {
      row.task_return = last.task_return;
      row.episode_length = last.episode_length;
    }
    row.gail_reward = b.disc_rewards.mean();
    row.oob_reward = b.oob_rewards.mean();
    row.entropy = dg.entropy;
    row.abs_action_mean = dg.mean_abs_action_mean;
    row.disc_loss = du.loss;
    row.disc_accuracy = du.accuracy;
    row.critic_loss = closs.back();
    row.surrogate = dg.surrogate;
    row.policy_loss = dg.policy_loss;
    row.entropy_loss = dg.entropy_loss;
    row.target_entropy_loss = dg.target_entropy_loss;
    row.flipped_kl_loss = dg.flipped_kl_loss;
    row.kl = dg.kl;
    row.improvement = dg.improvement;
    row.backtracks = dg.backtracks;
    row.accepted = dg.accepted;
    res.metrics.push_back(row);
    res.diagnostics.push_back(dg);
    last = row;
    if (on_iteration) on_iteration(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalSummary {
  int episodes = 0;
  double task_return = 0.0;      // mean per-episode task reward
  double episode_length = 0.0;
  double gail_reward = 0.0;      // mean per-step gail reward (needs a discriminator)
  double gail_return = 0.0;      // mean per-episode gail reward
  std::vector<Vec> first_episode;  // observations of the first episode
};

using ActionSource = std::function<Vec(const Vec& obs, Rng& rng)>;

inline EvalSummary evaluate_actions(const LimbConfig& env_cfg, const ActionSource& act,
                                    int episodes, std::uint64_t seed,
                                    const Discriminator* disc = nullptr,
                                    const std::vector<Vec>& reset_states = {}) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  LimbEnv env(env_cfg);
  env.set_reset_states(reset_states);
  Rng rng = derive_rng(seed, 61);
  EvalSummary s;
  s.episodes = episodes;
  long total_steps = 0;
  double gail_sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Vec obs = env.reset(rng);
    if (e == 0) s.first_episode.push_back(obs);
    for (;;) {
      const Vec u = act(obs, rng).cwiseMax(0.0).cwiseMin(1.0);
      const LimbEnv::Transition tr = env.step({u.data(), static_cast<std::size_t>(u.size())});
      s.task_return += tr.task_reward;
      if (disc) gail_sum += gail_reward(*disc, tr.observation);
      ++total_steps;
      if (e == 0) s.first_episode.push_back(tr.observation);
      obs = tr.observation;
      if (tr.absorbing || tr.truncated) break;
    }
  }
  s.task_return /= episodes;
  s.episode_length = static_cast<double>(total_steps) / episodes;
  s.gail_reward = gail_sum / static_cast<double>(total_steps);
  s.gail_return = gail_sum / episodes;
  return s;
}

inline EvalSummary evaluate_policy(const LimbConfig& env_cfg, const Policy& pol,
                                   const SynergyMap* synergy, int episodes, bool deterministic,
                                   std::uint64_t seed, const Discriminator* disc = nullptr,
                                   const std::vector<Vec>& reset_states = {}) {
  const ActionMapper mapper(synergy);
  if (pol.obs_dim() != kObservationDim)
    throw ConfigError("policy observes " + std::to_string(pol.obs_dim()) + " values; expected " +
                      std::to_string(kObservationDim));
  const int expected = synergy ? synergy->n_syn() : env_cfg.num_muscles();
  if (pol.action_dim() != expected)
    throw ConfigError("policy acts in " + std::to_string(pol.action_dim()) +
                      " dimensions; expected " + std::to_string(expected));
  return evaluate_actions(
      env_cfg,
      [&](const Vec& obs, Rng& rng) {
        return mapper.executed(deterministic ? pol.mean_action(obs) : pol.sample(obs, rng));
      },
      episodes, seed, disc, reset_states);
}

// Uniform random muscle controls in [0, 1].
inline EvalSummary evaluate_random(const LimbConfig& env_cfg, int episodes, std::uint64_t seed,
                                   const Discriminator* disc = nullptr,
                                   const std::vector<Vec>& reset_states = {}) {
  const int d = env_cfg.num_muscles();
  return evaluate_actions(
      env_cfg,
      [d](const Vec&, Rng& rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vec a(d);
        for (int i = 0; i < d; ++i) a(i) = u(rng);
        return a;
      },
      episodes, seed, disc, reset_states);
}

inline std::vector<Vec> expert_reset_states(const ExpertTrajectory& expert) {
  const Mat m = expert.stacked();
  std::vector<Vec> out;
  for (Eigen::Index k = 0; k < m.cols(); ++k) out.push_back(m.col(k));
  return out;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_GAIL_HPP_
