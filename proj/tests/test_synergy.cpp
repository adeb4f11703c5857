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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "musclegail/errors.hpp"
#include "musclegail/expert.hpp"
#include "musclegail/play_phase.hpp"
#include "musclegail/synergy.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace mg = musclegail;
namespace mt = musclegail::testing;
using mg::Mat;
using mg::Vec;

namespace {

// Rank-r data in `dims` dimensions with a nonzero mean.
Mat low_rank_data(int dims, int rank, long t, mg::Rng& rng) {
  const Mat basis = mg::standard_normal(dims, rank, rng);
  const Mat coeff = mg::standard_normal(rank, static_cast<int>(t), rng);
  return (basis * coeff).colwise() + mt::uniform_vec(dims, 0.2, 0.8, rng);
}

Mat projector(const Mat& c) { return c * c.transpose(); }

}  // namespace

TEST(Pca, OrthonormalComponentsAndOrderedRatios) {
  mg::Rng rng(1);
  const Mat data = mt::scripted_play_data(5000, 0.05, rng);
  const auto p = mg::fit_pca(data, 5);
  EXPECT_LT((p.components.transpose() * p.components - Mat::Identity(5, 5)).norm(), 1e-8);
  for (Eigen::Index i = 1; i < p.explained_variance_ratio.size(); ++i)
    EXPECT_LE(p.explained_variance_ratio(i), p.explained_variance_ratio(i - 1) + 1e-15);
  EXPECT_LE(p.explained_variance_ratio.sum(), 1.0 + 1e-12);
}

TEST(Pca, IsotropicNoiseHasUniformRatios) {
  mg::Rng rng(2);
  const Mat data = mg::standard_normal(12, 10000, rng);
  const auto p = mg::fit_pca(data, 12);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_NEAR(p.explained_variance_ratio(i), 1.0 / 12, 0.2 / 12);
}

TEST(Pca, ExactSubspaceRecovery) {
  mg::Rng rng(3);
  const Mat data = low_rank_data(8, 2, 500, rng);
  const auto p = mg::fit_pca(data, 2);
  const Mat centered = data.colwise() - p.mean;
  const Mat recon = p.components * (p.components.transpose() * centered);
  EXPECT_LT((recon - centered).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, DuplicatedMuscleKeepsTheRank) {
  mg::Rng rng(4);
  const Mat data = low_rank_data(6, 3, 400, rng);
  Mat dup(7, data.cols());
  dup << data, data.row(2);
  EXPECT_EQ(mg::fit_pca(data, 3).numerical_rank, 3);
  EXPECT_EQ(mg::fit_pca(dup, 3).numerical_rank, 3);
}

TEST(Pca, RankReductionWhenNsynExceedsRank) {
  mg::Rng rng(5);
  const auto p = mg::fit_pca(low_rank_data(6, 2, 400, rng), 4);
  EXPECT_EQ(p.effective_dim, 2);
  EXPECT_EQ(p.components.cols(), 2);
}

TEST(Pca, RejectsTooFewSamples) {
  mg::Rng rng(6);
  try {
    mg::fit_pca(mg::standard_normal(12, 119, rng), 4);
    FAIL() << "expected ConfigError";
  } catch (const mg::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("10 x |A|"), std::string::npos);
  }
  EXPECT_NO_THROW(mg::fit_pca(mg::standard_normal(12, 120, rng), 4));
  EXPECT_THROW(mg::fit_pca(mg::standard_normal(12, 200, rng), 13), mg::ConfigError);
}

TEST(Ica, SeparatesTwoUniformSources) {
  mg::Rng rng(7);
  const auto b = mt::two_uniform_sources(100000, rng);
  const auto r = mg::fit_ica(b.mixed);
  ASSERT_TRUE(r.converged);
  const Mat rec = r.unmixing * (b.mixed.colwise() - r.mean);
  EXPECT_LT(mt::bss_cross_correlation(rec, b.sources), 0.05);
  EXPECT_LT(std::abs(mt::correlation(rec.row(0), rec.row(1))), 0.05);
  for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(mt::normalized_kurtosis(rec.row(i)) - 1.8), 0.1);
}

TEST(Ica, GaussianInputGivesOrthogonalRotation) {
  mg::Rng rng(8);
  const auto r = mg::fit_ica(mg::standard_normal(3, 5000, rng));
  EXPECT_LT((r.rotation * r.rotation.transpose() - Mat::Identity(3, 3)).norm(), 1e-8);
}

TEST(Ica, SampleOrderDoesNotChangeTheSubspace) {
  mg::Rng rng(9);
  const Mat data = mt::scripted_play_data(3000, 0.05, rng);
  std::vector<int> perm(static_cast<std::size_t>(data.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat shuffled(data.rows(), data.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) shuffled.col(static_cast<Eigen::Index>(k)) = data.col(perm[k]);
  const auto a = mg::SynergyMap::fit(data, 4);
  const auto b = mg::SynergyMap::fit(shuffled, 4);
  EXPECT_LT((projector(a.components()) - projector(b.components())).norm(), 1e-8);
}

TEST(Ica, SampleOrderDoesNotChangeIdentifiableSynergies) {
  mg::Rng rng(19);
  const Mat mix = mt::uniform_vec(48, 0.0, 0.1, rng).reshaped(12, 4);
  Mat src(4, 5000);
  for (auto& v : src.reshaped()) v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  const Mat data = ((mix * src).colwise() + Vec::Constant(12, 0.4));
  std::vector<int> perm(static_cast<std::size_t>(data.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat shuffled(data.rows(), data.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) shuffled.col(static_cast<Eigen::Index>(k)) = data.col(perm[k]);
  const auto a = mg::SynergyMap::fit(data, 4);
  const auto b = mg::SynergyMap::fit(shuffled, 4);
  const Mat ma = a.mixing(), mb = b.mixing();
  for (int k = 0; k < 4; ++k) {
    double best = 0.0;
    for (int j = 0; j < 4; ++j)
      best = std::max(best, std::abs(ma.col(k).normalized().dot(mb.col(j).normalized())));
    EXPECT_GT(best, 0.999);
  }
}

TEST(SynergyMap, OriginMapsToTheMeanAction) {
  mg::Rng rng(10);
  const Mat data = mt::scripted_play_data(2000, 0.05, rng);
  const auto m = mg::SynergyMap::fit(data, 4);
  EXPECT_LT((m.to_muscle_space(Vec::Zero(4)) - data.rowwise().mean().cwiseMax(0.0).cwiseMin(1.0)).norm(), 1e-12);
}

TEST(SynergyMap, RoundTripAtFullRank) {
  mg::Rng rng(11);
  const Mat data = low_rank_data(12, 4, 1000, rng);
  const auto m = mg::SynergyMap::fit(data, 4);
  for (int k = 0; k < 20; ++k) {
    const Vec a = data.col(k);
    const Vec back = m.to_muscle_space_unclamped(m.to_synergy(a));
    EXPECT_LT((back - a).norm() / a.norm(), 1e-6);
  }
}

TEST(SynergyMap, FourGroupsExplainMostVariance) {
  mg::Rng rng(12);
  const auto m = mg::SynergyMap::fit(mt::scripted_play_data(20000, 0.05, rng), 4);
  EXPECT_GE(m.explained_variance_ratio().head(4).sum(), 0.85);
}

TEST(SynergyMap, SignNormalization) {
  mg::Rng rng(13);
  const auto m = mg::SynergyMap::fit(mt::scripted_play_data(3000, 0.05, rng), 4);
  const Mat mix = m.mixing();
  for (int k = 0; k < 4; ++k) {
    Eigen::Index arg = 0;
    mix.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(mix(arg, k), 0.0);
  }
}

TEST(SynergyMap, JsonRoundTrip) {
  mg::Rng rng(14);
  const auto m = mg::SynergyMap::fit(mt::scripted_play_data(3000, 0.05, rng), 3);
  const auto path = (mt::scratch_dir("synergy_json") / "map.json").string();
  m.save(path);
  const auto back = mg::SynergyMap::load(path);
  EXPECT_EQ(back.n_syn(), 3);
  EXPECT_LT((back.mean() - m.mean()).norm(), 1e-15);
  EXPECT_LT((back.components() - m.components()).norm(), 1e-15);
  EXPECT_LT((back.unmixing() - m.unmixing()).norm(), 1e-15);
  const Vec s = Vec::LinSpaced(3, -0.5, 0.5);
  EXPECT_LT((back.to_muscle_space(s) - m.to_muscle_space(s)).norm(), 1e-14);
}

TEST(SynergyMap, UnfittedAndMalformed) {
  mg::SynergyMap m;
  EXPECT_THROW(m.to_synergy(Vec::Zero(3)), mg::StateError);
  EXPECT_THROW(mg::SynergyMap::from_json(nlohmann::json{{"format", "other"}}), mg::ConfigError);
  EXPECT_THROW(mg::SynergyMap::load("/nonexistent/map.json"), mg::ConfigError);
}

namespace {

mg::TrainConfig small_train(std::uint64_t seed) {
  mg::TrainConfig t;
  t.seed = seed;
  t.steps_per_iteration = 200;
  t.critic_minibatch = 64;
  t.disc_minibatch = 128;
  return t;
}

const mg::ExpertTrajectory& small_expert() {
  static const mg::ExpertTrajectory e = mg::generate_expert_trajectory(
      mg::LimbConfig::default_config(), mg::ExpertConfig::default_config(), 2, 3, 2);
  return e;
}

}  // namespace

TEST(PlayPhase, RejectsTooFewSteps) {
  EXPECT_THROW(mg::play_phase(mg::LimbConfig::default_config(), small_expert(), 119, small_train(1)),
               mg::ConfigError);
}

TEST(PlayPhase, ShapeAndSeedDependence) {
  const auto env = mg::LimbConfig::default_config();
  const auto a = mg::play_phase(env, small_expert(), 500, small_train(1)).actions;
  const auto b = mg::play_phase(env, small_expert(), 500, small_train(2)).actions;
  ASSERT_EQ(a.rows(), 12);
  ASSERT_EQ(a.cols(), 500);
  ASSERT_EQ(b.rows(), 12);
  ASSERT_EQ(b.cols(), 500);
  EXPECT_TRUE(a.allFinite() && b.allFinite());
  EXPECT_GE(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1.0);
  EXPECT_GT((a - b).norm(), 1e-3);
}
