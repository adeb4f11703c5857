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

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gradient_checks.hpp"
#include "musclegail/errors.hpp"
#include "musclegail/explore.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mg = musclegail;
namespace mt = musclegail::testing;
using mg::Mat;
using mg::Vec;

namespace {

mg::ActionBox box1(double lo, double hi) { return {Vec::Constant(1, lo), Vec::Constant(1, hi)}; }

mg::ObjectiveConfig flipped(const mg::ActionBox& box) {
  mg::ObjectiveConfig c;
  c.mode = mg::ObjectiveMode::kFlippedKl;
  c.bounds = box;
  return c;
}

}  // namespace

TEST(EntropyBonus, Examples) {
  mg::ObjectiveConfig c;
  c.lambda_entropy = 0.0;
  EXPECT_EQ(mg::entropy_bonus(3.0, c), 0.0);
  c.lambda_entropy = 0.001;
  EXPECT_NEAR(mg::entropy_bonus(3.0, c), -0.003, 1e-15);
}

TEST(EntropyBonus, GaussianEntropyRisesWithStd) {
  mg::GaussianDistribution d(3);
  const mg::PolicyDistribution& base = d;
  const auto g = d.entropy_grad(Vec::Zero(3), mg::EntropyNoise());
  EXPECT_TRUE((g.params.array() > 0).all());
  EXPECT_NEAR(base.entropy(Vec::Zero(3)), 3 * (0.5 * std::log(2 * std::numbers::pi * std::numbers::e) + std::log(0.5)), 1e-12);
}

TEST(TargetEntropy, Examples) {
  mg::ObjectiveConfig c;
  c.mode = mg::ObjectiveMode::kTargetEntropy;
  c.lambda_target_entropy = 2.0;
  c.target_entropy = 1.5;
  EXPECT_EQ(mg::target_entropy_loss(1.5, c), 0.0);
  EXPECT_NEAR(mg::target_entropy_loss(1.8, c), 2.0 * 0.09, 1e-12);
  EXPECT_NEAR(mg::target_entropy_loss(1.2, c), 2.0 * 0.09, 1e-12);
  c.target_entropy = 0.0;
  EXPECT_NEAR(mg::target_entropy_loss(-4.0, c), 2.0 * 16.0, 1e-12);
  EXPECT_NEAR(mg::target_entropy_loss_slope(-4.0, c), 2.0 * 2.0 * -4.0, 1e-12);
}

TEST(KlUniformGaussian, UnitIntervalReference) {
  const double v = mg::kl_uniform_to_gaussian(Vec::Zero(1), Mat::Identity(1, 1), box1(-1.0, 1.0));
  const double oracle = std::log(0.5) + 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * 0.5 * 2.0 / 3.0;
  EXPECT_NEAR(v, oracle, 1e-12);
  EXPECT_NEAR(v, 0.3925, 1e-4);
}

TEST(KlUniformGaussian, QuadratureOracle1d) {
  mg::GaussianDistribution d(1);
  mg::Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const double lo = mt::uniform_vec(1, -2.0, 1.0, rng)(0);
    const double hi = lo + mt::uniform_vec(1, 0.2, 3.0, rng)(0);
    const double mu = mt::uniform_vec(1, -2.0, 2.0, rng)(0);
    const double s = mt::uniform_vec(1, 0.2, 2.0, rng)(0);
    d.set_params(Vec::Constant(1, std::log(s)));
    // KL(U || N) = -log(hi - lo) - (1 / (hi - lo)) int_lo^hi log N(x) dx.
    boost::math::quadrature::tanh_sinh<double> q;
    const double integral = q.integrate(
        [&](double x) { return d.log_density(Vec::Constant(1, mu), Vec::Constant(1, x)); }, lo, hi);
    const double oracle = -std::log(hi - lo) - integral / (hi - lo);
    EXPECT_NEAR(mg::kl_uniform_to_gaussian(Vec::Constant(1, mu), Mat::Constant(1, 1, s * s), box1(lo, hi)),
                oracle, 1e-9);
  }
}

TEST(KlUniformGaussian, MinimizedAtFiniteScale) {
  const mg::ActionBox box = box1(-1.0, 1.0);
  std::vector<double> kl;
  for (int i = 0; i < 200; ++i) {
    const double s = std::exp(-4.0 + 8.0 * i / 199.0);
    kl.push_back(mg::kl_uniform_to_gaussian(Vec::Zero(1), Mat::Constant(1, 1, s), box));
  }
  const auto it = std::min_element(kl.begin(), kl.end());
  const auto k = it - kl.begin();
  ASSERT_GT(k, 0);
  ASSERT_LT(k, 199);
  for (auto j = k; j + 1 < static_cast<long>(kl.size()); ++j) EXPECT_LT(kl[j], kl[j + 1]);
  for (auto j = k; j > 0; --j) EXPECT_LT(kl[j], kl[j - 1]);
  // Analytic minimizer of 1/2 log s + E_U[x^2] / (2 s) is s* = E_U[x^2] = 1/3.
  const double s_star = std::exp(-4.0 + 8.0 * k / 199.0);
  EXPECT_NEAR(std::log(s_star), std::log(1.0 / 3.0), 8.0 / 199.0);
}

TEST(KlUniformGaussian, TranslationInvariant) {
  mg::Rng rng(2);
  const Vec mu = mt::uniform_vec(3, -1.0, 1.0, rng);
  const Mat a = mg::standard_normal(3, 3, rng);
  const Mat cov = a * a.transpose() + Mat::Identity(3, 3);
  const mg::ActionBox box{Vec::Constant(3, -0.5), Vec::Constant(3, 1.0)};
  const Vec shift = mt::uniform_vec(3, -3.0, 3.0, rng);
  EXPECT_NEAR(mg::kl_uniform_to_gaussian(mu, cov, box),
              mg::kl_uniform_to_gaussian(mu + shift, cov, mg::ActionBox{box.low + shift, box.high + shift}),
              1e-10);
}

TEST(KlUniformGaussian, MatchesMonteCarlo) {
  mg::Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    const int d = 1 + k % 3;
    const Vec mu = mt::uniform_vec(d, -1.0, 1.0, rng);
    const Mat a = mg::standard_normal(d, d, rng);
    const Mat cov = 0.5 * a * a.transpose() + 0.3 * Mat::Identity(d, d);
    const Vec low = mt::uniform_vec(d, -1.0, 0.0, rng);
    const mg::ActionBox box{low, low + mt::uniform_vec(d, 0.5, 2.0, rng)};
    const auto est = mt::kl_uniform_to_gaussian_mc(mu, cov, box, 200000, rng);
    EXPECT_NEAR(mg::kl_uniform_to_gaussian(mu, cov, box), est.mean, 3.0 * est.standard_error);
  }
}

TEST(FlippedKl, PushesTheMeanTowardTheBox) {
  mg::GaussianDistribution d(1);
  const auto cfg = flipped(mg::ActionBox::unit(1));
  EXPECT_GT(mg::flipped_kl_loss(d, Mat::Constant(1, 1, 3.0), cfg).d_heads(0, 0), 0.0);
  EXPECT_LT(mg::flipped_kl_loss(d, Mat::Constant(1, 1, -2.0), cfg).d_heads(0, 0), 0.0);
}

TEST(FlippedKl, ZeroGradientAtTheCenterOfASymmetricBox) {
  mg::GaussianDistribution d(2);
  const auto cfg = flipped(mg::ActionBox{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)});
  EXPECT_LT(mg::flipped_kl_loss(d, Mat::Zero(2, 1), cfg).d_heads.norm(), 1e-14);
}

TEST(FlippedKl, GradientsMatchFiniteDifferences) {
  mg::Rng rng(4);
  EXPECT_LT(mt::flipped_kl_gradient_error(40, rng), 1e-5);
}

TEST(FlippedKl, RejectsBoundedFamilies) {
  mg::BetaAlphaBetaDistribution d(mg::ActionBox::unit(1));
  EXPECT_THROW(mg::flipped_kl_loss(d, Mat::Zero(2, 1), flipped(mg::ActionBox::unit(1))), mg::ConfigError);
}

TEST(OobPenalty, Examples) {
  const mg::ActionBox unit = mg::ActionBox::unit(3);
  EXPECT_EQ(mg::oob_penalty(Vec::Constant(3, 0.5), unit, 1.0), 0.0);
  Vec a = Vec::Constant(3, 0.5);
  a(1) = 1.2;
  EXPECT_NEAR(mg::oob_penalty(a, unit, 1.0), -0.04, 1e-12);
  a(1) = -0.3;
  EXPECT_NEAR(mg::oob_penalty(a, unit, 2.0), -0.18, 1e-12);
  EXPECT_THROW(mg::oob_penalty(Vec::Zero(2), unit, 1.0), mg::DomainError);
}

TEST(ObjectiveConfig, ModesAndValidation) {
  for (const auto& name : {"entropy", "none", "target_entropy", "flipped_kl", "flipped_kl+target_entropy",
                           "oob_penalty+entropy"})
    EXPECT_EQ(mg::to_string(mg::objective_mode_from_string(name)), name);
  EXPECT_THROW(mg::objective_mode_from_string("bogus"), mg::ConfigError);
  mg::ObjectiveConfig c;
  c.lambda_entropy = -1.0;
  EXPECT_THROW(c.validate(), mg::ConfigError);
  c = mg::ObjectiveConfig{};
  c.bounds = mg::ActionBox{Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)};
  EXPECT_THROW(c.validate(), mg::ConfigError);
}
