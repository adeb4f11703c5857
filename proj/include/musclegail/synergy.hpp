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

#ifndef MUSCLEGAIL_SYNERGY_HPP_
#define MUSCLEGAIL_SYNERGY_HPP_

// Synergistic action representation: PCA of play-phase actions followed by
// FastICA on the principal scores, with a sign normalization of the
// resulting components. Action matrices hold one column per timestep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "musclegail/errors.hpp"
#include "musclegail/numeric.hpp"

namespace musclegail {

inline constexpr int kMinSamplesPerAction = 10;

struct PcaResult {
  Vec mean;                  // per-action mean
  Mat components;            // |A| x n, orthonormal columns
  Vec singular_values;       // all min(|A|, t) values, descending
  Vec explained_variance_ratio;  // all |A| ratios, descending, sums to 1
  int effective_dim = 0;     // n after rank reduction
  int numerical_rank = 0;
};

inline void check_action_matrix(const Mat& actions) {
  const auto dims = actions.rows();
  if (dims < 1) throw ConfigError("action matrix has no rows");
  if (actions.cols() < kMinSamplesPerAction * dims)
    throw ConfigError("action matrix has " + std::to_string(actions.cols()) +
                      " samples; at least 10 x |A| = " +
                      std::to_string(kMinSamplesPerAction * dims) + " are required");
  if (!actions.allFinite()) throw ConfigError("action matrix has non-finite entries");
}

// Flips each column so that its largest-magnitude entry is positive.
inline void fix_column_signs(Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index arg = 0;
    m.col(j).cwiseAbs().maxCoeff(&arg);
    if (m(arg, j) < 0) m.col(j) *= -1.0;
  }
}

// Top principal directions of the centered actions by SVD.
inline PcaResult fit_pca(const Mat& actions, int n_syn) {
  check_action_matrix(actions);
  const int dims = static_cast<int>(actions.rows());
  if (n_syn < 1 || n_syn > dims)
    throw ConfigError("N_syn must lie in [1, " + std::to_string(dims) + "]");
  PcaResult r;
  r.mean = actions.rowwise().mean();
  const Mat centered = actions.colwise() - r.mean;
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinU);
  r.singular_values = svd.singularValues();
  const double smax = r.singular_values.size() ? r.singular_values(0) : 0.0;
  const double tol = std::max(centered.rows(), centered.cols()) *
                     std::numeric_limits<double>::epsilon() * smax;
  r.numerical_rank = static_cast<int>((r.singular_values.array() > tol).count());
  const Vec var = r.singular_values.array().square();
  const double total = var.sum();
  r.explained_variance_ratio = Vec::Zero(dims);
  if (total > 0) r.explained_variance_ratio.head(var.size()) = var / total;
  r.effective_dim = n_syn;
  if (n_syn > r.numerical_rank) {
    r.effective_dim = std::max(1, r.numerical_rank);
    spdlog::warn("fit_pca: N_syn = {} exceeds the numerical rank {}; using {} components",
                 n_syn, r.numerical_rank, r.effective_dim);
  }
  r.components = svd.matrixU().leftCols(r.effective_dim);
  fix_column_signs(r.components);
  return r;
}

struct IcaOptions {
  double tolerance = 1e-6;
  int max_iterations = 500;
  std::uint64_t seed = 0;
};

struct IcaResult {
  Mat unmixing;   // n x n, sources = unmixing * (scores - mean)
  Mat whitening;  // n x n
  Mat rotation;   // n x n orthogonal, unmixing = rotation * whitening
  Vec mean;
  bool converged = false;
  int iterations = 0;
};

struct Whitening {
  Vec mean;
  Mat matrix;
};

// Whitening transform with unit sample covariance (normalized by t).
inline Whitening whiten(const Mat& scores) {
  Whitening w;
  w.mean = scores.rowwise().mean();
  const Mat centered = scores.colwise() - w.mean;
  const Mat cov = centered * centered.transpose() / static_cast<double>(scores.cols());
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const Vec vals = eig.eigenvalues();
  if (!(vals.array() > 0).all())
    throw NumericError("fit_ica: scores are rank deficient and cannot be whitened");
  w.matrix = vals.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return w;
}

// (W W^T)^{-1/2} W.
inline Mat symmetric_decorrelation(const Mat& w) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(w * w.transpose());
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose() * w;
}

// FastICA with symmetric orthogonalization and the log-cosh contrast.
// `scores` is n x t (one column per timestep). On non-convergence the last
// iterate is returned with `converged = false`.
inline IcaResult fit_ica(const Mat& scores, const IcaOptions& opt = {}) {
  const int n = static_cast<int>(scores.rows());
  const double t = static_cast<double>(scores.cols());
  if (n < 1 || scores.cols() < 2) throw ConfigError("fit_ica: need at least one row and two samples");
  const Whitening wh = whiten(scores);
  const Mat z = wh.matrix * (scores.colwise() - wh.mean);
  Rng rng(opt.seed);
  Mat w = symmetric_decorrelation(standard_normal(n, n, rng));
  IcaResult r;
  r.mean = wh.mean;
  r.whitening = wh.matrix;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Mat wz = w * z;
    const Mat g = wz.array().tanh().matrix();
    const Vec g_prime_mean = (1.0 - g.array().square()).rowwise().mean();
    const Mat w_new =
        symmetric_decorrelation(g * z.transpose() / t - g_prime_mean.asDiagonal() * w);
    const double lim = ((w_new * w.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    w = w_new;
    r.iterations = it;
    if (lim < opt.tolerance) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged)
    spdlog::warn("fit_ica: no convergence after {} iterations", opt.max_iterations);
  r.rotation = w;
  r.unmixing = w * wh.matrix;
  return r;
}

enum class SynergyNormalization { kSign, kNone };

inline std::string to_string(SynergyNormalization n) {
  return n == SynergyNormalization::kSign ? "sign" : "none";
}

inline SynergyNormalization synergy_normalization_from_string(const std::string& s) {
  if (s == "sign") return SynergyNormalization::kSign;
  if (s == "none") return SynergyNormalization::kNone;
  throw ConfigError("unknown synergy normalization '" + s + "'");
}

// Fitted PCA + ICA pair. Muscle-space controls are
//   u = clamp(mean + components * unmixing^{-1} * s, 0, 1)
// for a synergy action s, and s = unmixing * components^T (u - mean).
class SynergyMap {
 public:
  SynergyMap() = default;

  bool fitted() const { return fitted_; }
  int n_syn() const { return n_syn_; }
  int num_actions() const { return static_cast<int>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Mat& components() const { return components_; }
  const Mat& unmixing() const { return unmixing_; }
  const Vec& explained_variance_ratio() const { return explained_; }
  bool ica_converged() const { return ica_converged_; }

  // Muscle-space direction of each synergy (columns).
  Mat mixing() const {
    require_fitted();
    return components_ * unmixing_inv_;
  }

  Vec to_synergy(const Vec& muscle) const {
    require_fitted();
    check_size(muscle, num_actions());
    return unmixing_ * (components_.transpose() * (muscle - mean_));
  }

  Vec to_muscle_space_unclamped(const Vec& syn) const {
    require_fitted();
    check_size(syn, n_syn_);
    return mean_ + components_ * (unmixing_inv_ * syn);
  }

  Vec to_muscle_space(const Vec& syn) const {
    return to_muscle_space_unclamped(syn).cwiseMax(0.0).cwiseMin(1.0);
  }

  static SynergyMap fit(const Mat& actions, int n_syn,
                        SynergyNormalization norm = SynergyNormalization::kSign,
                        const IcaOptions& ica = {}) {
    const PcaResult pca = fit_pca(actions, n_syn);
    const Mat scores = pca.components.transpose() * (actions.colwise() - pca.mean);
    const IcaResult ic = fit_ica(scores, ica);
    SynergyMap m;
    m.n_syn_ = pca.effective_dim;
    m.mean_ = pca.mean;
    m.components_ = pca.components;
    m.unmixing_ = ic.unmixing;
    m.explained_ = pca.explained_variance_ratio;
    m.ica_converged_ = ic.converged;
    m.normalization_ = norm;
    m.finish();
    return m;
  }

  static SynergyMap from_parts(Vec mean, Mat components, Mat unmixing, Vec explained,
                               SynergyNormalization norm = SynergyNormalization::kNone) {
    if (components.rows() != mean.size() || unmixing.rows() != components.cols() ||
        unmixing.cols() != components.cols())
      throw ConfigError("synergy map parts have inconsistent shapes");
    SynergyMap m;
    m.n_syn_ = static_cast<int>(components.cols());
    m.mean_ = std::move(mean);
    m.components_ = std::move(components);
    m.unmixing_ = std::move(unmixing);
    m.explained_ = std::move(explained);
    m.ica_converged_ = true;
    m.normalization_ = norm;
    m.finish();
    return m;
  }

  nlohmann::json to_json() const {
    require_fitted();
    auto rows = [](const Mat& m) {
      nlohmann::json a = nlohmann::json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        a.push_back(r);
      }
      return a;
    };
    nlohmann::json j;
    j["format"] = "musclegail-synergy-map-v1";
    j["n_syn"] = n_syn_;
    j["num_actions"] = num_actions();
    j["normalization"] = to_string(normalization_);
    j["ica_converged"] = ica_converged_;
    j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
    j["explained_variance_ratio"] =
        std::vector<double>(explained_.data(), explained_.data() + explained_.size());
    j["components"] = rows(components_);
    j["unmixing"] = rows(unmixing_);
    return j;
  }

  static SynergyMap from_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "musclegail-synergy-map-v1")
        throw ConfigError("unsupported synergy map format");
      auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
      };
      auto mat = [](const nlohmann::json& a) {
        const auto rows = a.get<std::vector<std::vector<double>>>();
        Mat m(static_cast<Eigen::Index>(rows.size()),
              rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (static_cast<Eigen::Index>(rows[i].size()) != m.cols())
            throw ConfigError("ragged matrix in synergy map");
          for (std::size_t k = 0; k < rows[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
        return m;
      };
      SynergyMap m = from_parts(vec(j.at("mean")), mat(j.at("components")),
                                mat(j.at("unmixing")), vec(j.at("explained_variance_ratio")),
                                synergy_normalization_from_string(j.at("normalization")));
      m.ica_converged_ = j.at("ica_converged").get<bool>();
      if (m.n_syn_ != j.at("n_syn").get<int>() || m.num_actions() != j.at("num_actions").get<int>())
        throw ConfigError("synergy map header disagrees with its matrices");
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed synergy map: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write synergy map '" + path + "'");
    os << to_json().dump(2) << "\n";
  }

  static SynergyMap load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read synergy map '" + path + "'");
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synergy map '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
  }

 private:
  void finish() {
    Eigen::FullPivLU<Mat> lu(unmixing_);
    if (!lu.isInvertible()) throw NumericError("synergy map: unmixing matrix is singular");
    if (normalization_ == SynergyNormalization::kSign) {
      // Orient every synergy so that its dominant muscle loading is positive.
      const Mat mix = components_ * lu.inverse();
      for (Eigen::Index k = 0; k < mix.cols(); ++k) {
        Eigen::Index arg = 0;
        mix.col(k).cwiseAbs().maxCoeff(&arg);
        if (mix(arg, k) < 0) unmixing_.row(k) *= -1.0;
      }
    }
    unmixing_inv_ = unmixing_.inverse();
    fitted_ = true;
  }

  void require_fitted() const {
    if (!fitted_) throw StateError("synergy map is not fitted");
  }
  static void check_size(const Vec& v, int n) {
    if (v.size() != n)
      throw DomainError("synergy map: vector has " + std::to_string(v.size()) +
                        " entries, expected " + std::to_string(n));
  }

  bool fitted_ = false;
  int n_syn_ = 0;
  Vec mean_;
  Mat components_;
  Mat unmixing_;
  Mat unmixing_inv_;
  Vec explained_;
  bool ica_converged_ = false;
  SynergyNormalization normalization_ = SynergyNormalization::kSign;
};

}  // namespace musclegail

#endif  // MUSCLEGAIL_SYNERGY_HPP_
