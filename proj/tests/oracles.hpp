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

// Numerical oracles shared by the unit tests and the acceptance run:
// quadrature of 1-D densities and Monte-Carlo moment estimates.

#ifndef MUSCLEGAIL_TESTS_ORACLES_HPP_
#define MUSCLEGAIL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "musclegail/expert.hpp"
#include "musclegail/explore.hpp"
#include "musclegail/policy_dist.hpp"

namespace musclegail::testing {

// Integral of g(x) f(x) over the support of a 1-D distribution, f being its
// density at `head`.
template <class G>
double integrate_1d(const PolicyDistribution& d, const Vec& head, G g) {
  auto f = [&](double x) {
    const double lp = d.log_density(head, Vec::Constant(1, x));
    return std::isfinite(lp) ? g(x, lp) * std::exp(lp) : 0.0;
  };
  if (d.kind() == DistributionKind::kSquashedGaussian || d.kind() == DistributionKind::kBetaAlphaBeta ||
      d.kind() == DistributionKind::kBetaMeanStd) {
    const ActionBox& box = d.kind() == DistributionKind::kSquashedGaussian
                               ? static_cast<const SquashedGaussianDistribution&>(d).box()
                               : static_cast<const BetaDistributionBase&>(d).box();
    boost::math::quadrature::tanh_sinh<double> q(15);
    return q.integrate(f, box.low(0), box.high(0));
  }
  const auto m = d.gaussian_moments(head);
  const double mu = m->mean(0);
  const double s = std::sqrt(m->cov(0, 0));
  boost::math::quadrature::sinh_sinh<double> q(15);
  return q.integrate([&](double t) { return s * f(mu + s * t); });
}

inline double density_mass_1d(const PolicyDistribution& d, const Vec& head) {
  return integrate_1d(d, head, [](double, double) { return 1.0; });
}

inline double entropy_quadrature_1d(const PolicyDistribution& d, const Vec& head) {
  return integrate_1d(d, head, [](double, double lp) { return -lp; });
}

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline McEstimate mc_mean(const std::function<double()>& draw, long n) {
  double s = 0.0, s2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double v = draw();
    s += v;
    s2 += v * v;
  }
  McEstimate e;
  e.mean = s / n;
  const double var = std::max(0.0, s2 / n - e.mean * e.mean);
  e.standard_error = std::sqrt(var / n);
  return e;
}

// Monte-Carlo KL(U || N(mean, cov)) = E_U[log u - log N(x)].
inline McEstimate kl_uniform_to_gaussian_mc(const Vec& mean, const Mat& cov, const ActionBox& box,
                                            long n, Rng& rng) {
  const int d = static_cast<int>(mean.size());
  const Eigen::LLT<Mat> llt(cov);
  const Mat l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double log_u = -box.width().array().log().sum();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Vec x(d);
  return mc_mean(
      [&] {
        for (int i = 0; i < d; ++i) x(i) = box.low(i) + box.width()(i) * u01(rng);
        const Vec r = x - mean;
        const double lp = -0.5 * r.dot(llt.solve(r)) - 0.5 * log_det - 0.5 * d * std::log(2.0 * M_PI);
        return log_u - lp;
      },
      n);
}

struct SampleMoments {
  Vec mean;
  Mat cov;
};

inline SampleMoments sample_moments(const PolicyDistribution& d, const Vec& head, long n, Rng& rng) {
  const int k = d.action_dim();
  Vec s = Vec::Zero(k);
  Mat ss = Mat::Zero(k, k);
  for (long i = 0; i < n; ++i) {
    const Vec a = d.sample(head, rng);
    s += a;
    ss.noalias() += a * a.transpose();
  }
  SampleMoments m;
  m.mean = s / n;
  m.cov = ss / n - m.mean * m.mean.transpose();
  return m;
}

// Play-style action matrix from the scripted expert: controls at random
// times plus Gaussian noise, clamped to [0, 1]; |A| x steps.
inline Mat scripted_play_data(long steps, double noise, Rng& rng) {
  const ExpertConfig e = ExpertConfig::default_config();
  std::uniform_real_distribution<double> phase(0.0, e.period);
  std::normal_distribution<double> n01(0.0, noise);
  Mat m(static_cast<Eigen::Index>(e.amplitude.size()), steps);
  for (long k = 0; k < steps; ++k) {
    const Vec u = scripted_expert(phase(rng), e);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, k) = std::clamp(u(i) + n01(rng), 0.0, 1.0);
  }
  return m;
}

struct BssBenchmark {
  Mat sources;  // 2 x t, independent, unit variance
  Mat mixed;    // random 2 x 2 mixing of the sources
};

inline BssBenchmark two_uniform_sources(long t, Rng& rng) {
  std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
  BssBenchmark b;
  b.sources.resize(2, t);
  for (long k = 0; k < t; ++k) {
    b.sources(0, k) = u(rng);
    b.sources(1, k) = u(rng);
  }
  Mat a;
  do a = standard_normal(2, 2, rng);
  while (std::abs(a.determinant()) < 0.3);
  b.mixed = a * b.sources;
  return b;
}

inline double correlation(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  const Eigen::RowVectorXd xc = x.array() - x.mean();
  const Eigen::RowVectorXd yc = y.array() - y.mean();
  return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
}

// m4 / m2^2 (3 for a Gaussian, 1.8 for a uniform).
inline double normalized_kurtosis(const Eigen::RowVectorXd& x) {
  const Eigen::ArrayXd c = (x.array() - x.mean()).transpose();
  const double m2 = c.square().mean();
  return c.square().square().mean() / (m2 * m2);
}

// Largest |correlation| between a recovered signal and a source it was not
// matched to, after matching by absolute correlation.
inline double bss_cross_correlation(const Mat& recovered, const Mat& sources) {
  const double c00 = std::abs(correlation(recovered.row(0), sources.row(0)));
  const double c01 = std::abs(correlation(recovered.row(0), sources.row(1)));
  const double c10 = std::abs(correlation(recovered.row(1), sources.row(0)));
  const double c11 = std::abs(correlation(recovered.row(1), sources.row(1)));
  return c00 + c11 >= c01 + c10 ? std::max(c01, c10) : std::max(c00, c11);
}

}  // namespace musclegail::testing

#endif  // MUSCLEGAIL_TESTS_ORACLES_HPP_
