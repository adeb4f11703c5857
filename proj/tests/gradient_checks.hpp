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

// Finite-difference gradient checks shared by the unit tests and the
// acceptance run. Each check draws random points and returns the largest
// relative error between the analytic gradient and central differences.

#ifndef MUSCLEGAIL_TESTS_GRADIENT_CHECKS_HPP_
#define MUSCLEGAIL_TESTS_GRADIENT_CHECKS_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "musclegail/explore.hpp"
#include "musclegail/gail.hpp"
#include "musclegail/mlp.hpp"
#include "musclegail/policy_dist.hpp"
#include "test_util.hpp"

namespace musclegail::testing {

struct FamilyCase {
  std::unique_ptr<PolicyDistribution> dist;
  Vec head;
};

// Random family instance with a random head and random parameters.
// For the Beta families `min_shape` rejects draws with alpha or beta below it.
inline FamilyCase random_family(DistributionKind kind, int dim, Rng& rng,
                                bool unimodal = true, double min_shape = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FamilyCase c;
  switch (kind) {
    case DistributionKind::kGaussian: {
      c.dist = std::make_unique<GaussianDistribution>(dim);
      c.dist->set_params(uniform_vec(dim, std::log(0.1), std::log(2.0), rng));
      c.head = uniform_vec(dim, -2.0, 2.0, rng);
      break;
    }
    case DistributionKind::kSquashedGaussian: {
      const Vec low = uniform_vec(dim, -2.0, 0.0, rng);
      const Vec high = low + uniform_vec(dim, 0.5, 2.0, rng);
      c.dist = std::make_unique<SquashedGaussianDistribution>(ActionBox{low, high});
      c.dist->set_params(uniform_vec(dim, std::log(0.1), std::log(1.2), rng));
      c.head = uniform_vec(dim, -1.5, 1.5, rng);
      break;
    }
    case DistributionKind::kBetaAlphaBeta: {
      const Vec low = uniform_vec(dim, -1.0, 0.0, rng);
      c.dist = std::make_unique<BetaAlphaBetaDistribution>(
          ActionBox{low, low + uniform_vec(dim, 0.5, 2.0, rng)});
      c.head = uniform_vec(2 * dim, -3.0, 3.0, rng);
      break;
    }
    case DistributionKind::kBetaMeanStd: {
      auto d = std::make_unique<BetaMeanStdDistribution>(ActionBox::unit(dim), unimodal);
      // Means away from the kink of the unimodality bound at 0.5, stds
      // clearly inside or clearly outside the bound.
      Vec head(dim), raw(dim);
      for (int i = 0; i < dim; ++i) {
        double mu;
        do mu = 0.05 + 0.9 * u(rng);
        while (std::abs(mu - 0.5) < 0.03);
        head(i) = std::log(mu / (1.0 - mu));
        const double bound = std::sqrt(beta_variance_bound(mu, unimodal));
        const double sigma = u(rng) < 0.75 ? bound * (0.1 + 0.8 * u(rng)) : bound * (1.1 + u(rng));
        raw(i) = softplus_inverse(sigma);
      }
      d->set_params(raw);
      for (int i = 0; i < dim; ++i) {
        const BetaParams bp = d->local(head, i).p;
        if (bp.alpha < min_shape || bp.beta < min_shape)
          return random_family(kind, dim, rng, unimodal, min_shape);
      }
      c.dist = std::move(d);
      c.head = head;
      break;
    }
    case DistributionKind::kLatentGaussian: {
      const int latent = 1 + static_cast<int>(u(rng) * 3.0);
      auto d = std::make_unique<LatentGaussianDistribution>(dim, latent);
      Vec p(d->param_dim());
      p.head(dim * latent) = uniform_vec(dim * latent, -1.0, 1.0, rng);
      p.segment(dim * latent, dim) = uniform_vec(dim, -0.5, 0.5, rng);
      p.tail(dim + latent) = uniform_vec(dim + latent, std::log(0.1), std::log(1.0), rng);
      d->set_params(p);
      c.dist = std::move(d);
      c.head = uniform_vec(latent, -1.0, 1.0, rng);
      break;
    }
  }
  return c;
}

// Latent Gaussian mean and covariance from (head, params), with the weight in
// the covariance frozen at `w_cov`.
struct LatentMoments {
  Vec mean;
  Mat cov;
};

inline LatentMoments latent_moments(int dim, int latent, const Vec& head, const Vec& p,
                                    const Mat& w_cov) {
  Mat w(dim, latent);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < latent; ++j) w(i, j) = p(i * latent + j);
  const Vec b = p.segment(dim * latent, dim);
  const Vec va = (2.0 * p.segment(dim * latent + dim, dim)).array().exp();
  const Vec vx = (2.0 * p.tail(latent)).array().exp();
  LatentMoments m;
  m.mean = w * head + b;
  m.cov = Mat(va.asDiagonal()) + w_cov * vx.asDiagonal() * w_cov.transpose();
  return m;
}

inline double gaussian_log_pdf(const Vec& x, const Vec& mean, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  const Vec r = x - mean;
  const Mat l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * r.dot(llt.solve(r)) - 0.5 * log_det - 0.5 * x.size() * std::log(2.0 * M_PI);
}

inline double gaussian_kl(const Vec& m0, const Mat& c0, const Vec& m1, const Mat& c1) {
  const Eigen::LLT<Mat> l1(c1);
  const Mat lm0 = Eigen::LLT<Mat>(c0).matrixL();
  const Mat lm1 = l1.matrixL();
  const double ld0 = 2.0 * lm0.diagonal().array().log().sum();
  const double ld1 = 2.0 * lm1.diagonal().array().log().sum();
  const Vec dm = m1 - m0;
  return 0.5 * (l1.solve(c0).trace() + dm.dot(l1.solve(dm)) - m0.size() + ld1 - ld0);
}

// Evaluates a scalar of (head, params) packed as one vector.
using PackedFn = std::function<double(const Vec& head, const Vec& params)>;

inline double packed_error(const PackedFn& f, const Vec& head, const Vec& params,
                           const DensityGrad& g) {
  const int nh = static_cast<int>(head.size());
  Vec x(nh + params.size());
  x << head, params;
  const Vec fd = central_difference(
      [&](const Vec& z) { return f(z.head(nh), z.tail(z.size() - nh)); }, x);
  Vec an(x.size());
  an << g.head, g.params;
  return relative_error(an, fd);
}

// log_density_grad and entropy_grad against central differences. Returns the
// larger of the two errors at one random point.
inline double family_gradient_error_at(DistributionKind kind, int dim, Rng& rng,
                                       bool unimodal = true) {
  FamilyCase c = random_family(kind, dim, rng, unimodal);
  const PolicyDistribution& d = *c.dist;
  const Vec action = d.sample(c.head, rng);
  const EntropyNoise noise = standard_normal(dim, 16, rng);
  const Vec p0 = d.params();
  auto with = [&](const Vec& p) {
    auto e = d.clone();
    e->set_params(p);
    return e;
  };
  PackedFn logp, ent;
  if (kind == DistributionKind::kLatentGaussian) {
    const auto& lat = static_cast<const LatentGaussianDistribution&>(d);
    const int latent = lat.latent_dim();
    const Mat w0 = lat.weight();
    logp = [&, latent, w0](const Vec& h, const Vec& p) {
      const LatentMoments m = latent_moments(dim, latent, h, p, w0);
      return gaussian_log_pdf(action, m.mean, m.cov);
    };
    ent = [&, latent, w0](const Vec& h, const Vec& p) {
      const LatentMoments m = latent_moments(dim, latent, h, p, w0);
      const Mat l = Eigen::LLT<Mat>(m.cov).matrixL();
      return l.diagonal().array().log().sum() + 0.5 * dim * (std::log(2.0 * M_PI) + 1.0);
    };
  } else {
    logp = [&](const Vec& h, const Vec& p) { return with(p)->log_density(h, action); };
    ent = [&](const Vec& h, const Vec& p) { return with(p)->entropy(h, noise); };
  }
  const double e1 = packed_error(logp, c.head, p0, d.log_density_grad(c.head, action));
  const double e2 = packed_error(ent, c.head, p0, d.entropy_grad(c.head, noise));
  return std::max(e1, e2);
}

inline double family_gradient_error(DistributionKind kind, int points, Rng& rng,
                                    bool unimodal = true) {
  std::uniform_int_distribution<int> dims(1, 4);
  double worst = 0.0;
  for (int k = 0; k < points; ++k)
    worst = std::max(worst, family_gradient_error_at(kind, dims(rng), rng, unimodal));
  return worst;
}

// Parameter and input gradients of sum <R, f(X)> for random networks.
inline double mlp_gradient_error(int points, Rng& rng) {
  std::uniform_int_distribution<int> width(1, 6);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    std::vector<int> sizes{width(rng), width(rng), width(rng), width(rng)};
    if (coin(rng)) sizes.pop_back();
    const Mlp net(sizes, coin(rng), rng);
    const Mat x = standard_normal(sizes.front(), 3, rng);
    const Mat r = standard_normal(sizes.back(), 3, rng);
    Mat d_input;
    const Vec g = net.backward(net.forward_cache(x), r, &d_input);
    const Vec fd = central_difference(
        [&](const Vec& p) {
          Mlp m = net;
          m.set_params(p);
          return (m.forward(x).array() * r.array()).sum();
        },
        net.params());
    const Vec x_flat = Eigen::Map<const Vec>(x.data(), x.size());
    const Vec fd_in = central_difference(
        [&](const Vec& xv) {
          const Mat xm = Eigen::Map<const Mat>(xv.data(), x.rows(), x.cols());
          return (net.forward(xm).array() * r.array()).sum();
        },
        x_flat);
    const Vec an_in = Eigen::Map<const Vec>(d_input.data(), d_input.size());
    worst = std::max({worst, relative_error(g, fd), relative_error(an_in, fd_in)});
  }
  return worst;
}

inline double discriminator_gradient_error(int points, Rng& rng) {
  std::uniform_int_distribution<int> batch(1, 8);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    Discriminator d(4, {5, 3}, rng());
    const Mat expert = standard_normal(4, batch(rng), rng);
    const Mat policy = standard_normal(4, batch(rng), rng) * 2.0;
    d.normalizer().update(expert);
    const Vec g = discriminator_loss(d, expert, policy).grad;
    const Vec fd = central_difference(
        [&](const Vec& p) {
          Discriminator e = d;
          e.net().set_params(p);
          return discriminator_loss(e, expert, policy, false).value;
        },
        d.net().params());
    worst = std::max(worst, relative_error(g, fd));
  }
  return worst;
}

// Flipped uniform KL loss over a few states for the two unbounded Gaussian
// families, plus the KL's own gradient in (mean, covariance).
inline double flipped_kl_gradient_error(int points, Rng& rng) {
  std::uniform_int_distribution<int> dims(1, 3);
  std::bernoulli_distribution latent_family(0.5);
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const int dim = dims(rng);
    const auto kind =
        latent_family(rng) ? DistributionKind::kLatentGaussian : DistributionKind::kGaussian;
    FamilyCase c = random_family(kind, dim, rng);
    const PolicyDistribution& d = *c.dist;
    ObjectiveConfig cfg;
    cfg.mode = ObjectiveMode::kFlippedKl;
    cfg.lambda_flipped_kl = 0.5;
    const Vec low = uniform_vec(dim, -1.0, 0.5, rng);
    cfg.bounds = ActionBox{low, low + uniform_vec(dim, 0.5, 2.0, rng)};
    Mat heads(d.head_dim(), 3);
    for (int s = 0; s < 3; ++s)
      heads.col(s) = c.head + uniform_vec(d.head_dim(), -0.5, 0.5, rng);
    const FlippedKlLoss an = flipped_kl_loss(d, heads, cfg);
    const int nh = static_cast<int>(heads.size());
    Vec x(nh + d.param_dim());
    x << Eigen::Map<const Vec>(heads.data(), nh), d.params();
    std::function<double(const Vec&)> f;
    if (kind == DistributionKind::kLatentGaussian) {
      const auto& lat = static_cast<const LatentGaussianDistribution&>(d);
      const int latent = lat.latent_dim();
      const Mat w0 = lat.weight();
      f = [&, latent, w0](const Vec& z) {
        double v = 0.0;
        for (int s = 0; s < 3; ++s) {
          const LatentMoments m =
              latent_moments(dim, latent, z.segment(s * latent, latent), z.tail(d.param_dim()), w0);
          v += kl_uniform_to_gaussian(m.mean, m.cov, cfg.bounds) / 3.0;
        }
        return cfg.lambda_flipped_kl * v;
      };
    } else {
      f = [&](const Vec& z) {
        auto e = d.clone();
        e->set_params(z.tail(d.param_dim()));
        const Mat h = Eigen::Map<const Mat>(z.data(), heads.rows(), heads.cols());
        return flipped_kl_loss(*e, h, cfg).value;
      };
    }
    Vec g(x.size());
    g << Eigen::Map<const Vec>(an.d_heads.data(), nh), an.d_params;
    worst = std::max(worst, relative_error(g, central_difference(f, x)));

    // d KL / d(mean, cov) with symmetric covariance perturbations.
    const auto mom = d.gaussian_moments(c.head);
    const KlUniformGaussian kl = kl_uniform_to_gaussian_with_grad(mom->mean, mom->cov, cfg.bounds);
    const Vec fd_mean = central_difference(
        [&](const Vec& m) { return kl_uniform_to_gaussian(m, mom->cov, cfg.bounds); }, mom->mean);
    Vec an_cov(dim * (dim + 1) / 2), fd_cov(dim * (dim + 1) / 2);
    int idx = 0;
    const double h = 1e-6;
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j, ++idx) {
        Mat cp = mom->cov, cm = mom->cov;
        cp(i, j) += h;
        cm(i, j) -= h;
        if (i != j) {
          cp(j, i) += h;
          cm(j, i) -= h;
        }
        fd_cov(idx) = (kl_uniform_to_gaussian(mom->mean, cp, cfg.bounds) -
                       kl_uniform_to_gaussian(mom->mean, cm, cfg.bounds)) /
                      (2.0 * h);
        an_cov(idx) = i == j ? kl.d_cov(i, i) : kl.d_cov(i, j) + kl.d_cov(j, i);
      }
    worst = std::max({worst, relative_error(kl.d_mean, fd_mean), relative_error(an_cov, fd_cov)});
  }
  return worst;
}

}  // namespace musclegail::testing

#endif  // MUSCLEGAIL_TESTS_GRADIENT_CHECKS_HPP_
