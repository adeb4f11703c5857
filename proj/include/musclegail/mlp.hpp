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

#ifndef MUSCLEGAIL_MLP_HPP_
#define MUSCLEGAIL_MLP_HPP_

// Fully connected network with tanh hidden layers. Inputs are batched as
// columns. Parameters form one flat vector laid out per layer as the weight
// matrix (out x in, row major) followed by the bias.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "musclegail/errors.hpp"
#include "musclegail/numeric.hpp"
#include "musclegail/policy_dist.hpp"

namespace musclegail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Mlp {
 public:
  Mlp() = default;

  // `output_scale` multiplies the initial weights of the last layer.
  Mlp(std::vector<int> sizes, bool tanh_output, Rng& rng, double output_scale = 1.0)
      : sizes_(std::move(sizes)), tanh_output_(tanh_output) {
    if (sizes_.size() < 2) throw ParameterError("mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw ParameterError("mlp: layer sizes must be >= 1");
    int n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(n);
      n += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_ = Vec::Zero(n);
    for (int l = 0; l < num_layers(); ++l) {
      const double gain = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      const double scale = (l + 1 == num_layers()) ? gain * output_scale : gain;
      weight(l) = scale * standard_normal(sizes_[l + 1], sizes_[l], rng);
    }
  }

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int param_dim() const { return static_cast<int>(params_.size()); }
  const std::vector<int>& sizes() const { return sizes_; }
  bool tanh_output() const { return tanh_output_; }

  const Vec& params() const { return params_; }
  void set_params(const Vec& p) {
    if (p.size() != params_.size()) throw ParameterError("mlp: parameter vector has wrong size");
    params_ = p;
  }

  std::vector<ParamSegment> layout() const {
    std::vector<ParamSegment> out;
    for (int l = 0; l < num_layers(); ++l) {
      const int nw = sizes_[l + 1] * sizes_[l];
      out.push_back({"layer" + std::to_string(l) + ".weight", offsets_[l], nw});
      out.push_back({"layer" + std::to_string(l) + ".bias", offsets_[l] + nw, sizes_[l + 1]});
    }
    return out;
  }

  Eigen::Map<RowMat> weight(int l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const RowMat> weight(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const Vec> bias(int l) const {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }

  // Layer outputs kept for backward and JVP passes; acts[0] is the input.
  struct Cache {
    std::vector<Mat> acts;
    const Mat& output() const { return acts.back(); }
  };

  Cache forward_cache(const Mat& input) const {
    if (input.rows() != input_dim())
      throw DomainError("mlp: input has " + std::to_string(input.rows()) + " rows, expected " +
                        std::to_string(input_dim()));
    Cache c;
    c.acts.reserve(sizes_.size());
    c.acts.push_back(input);
    for (int l = 0; l < num_layers(); ++l) {
      Mat z = weight(l) * c.acts.back();
      z.colwise() += bias(l);
      if (nonlinear(l)) z = z.array().tanh().matrix();
      c.acts.push_back(std::move(z));
    }
    return c;
  }

  Mat forward(const Mat& input) const { return forward_cache(input).acts.back(); }
  Vec forward(const Vec& input) const { return forward(Mat(input)).col(0); }

  // Gradient of sum_k <d_output_k, output_k> with respect to the parameters.
  // When `d_input` is given it receives the gradient with respect to the input.
  Vec backward(const Cache& c, const Mat& d_output, Mat* d_input = nullptr) const {
    if (d_output.rows() != output_dim() || d_output.cols() != c.acts.back().cols())
      throw DomainError("mlp: output gradient has the wrong shape");
    Vec grad = Vec::Zero(param_dim());
    Mat delta = d_output;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (nonlinear(l)) delta.array() *= 1.0 - c.acts[l + 1].array().square();
      const int nw = sizes_[l + 1] * sizes_[l];
      Eigen::Map<RowMat>(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]) =
          delta * c.acts[l].transpose();
      grad.segment(offsets_[l] + nw, sizes_[l + 1]) = delta.rowwise().sum();
      if (l > 0 || d_input) delta = weight(l).transpose() * delta;
    }
    if (d_input) *d_input = std::move(delta);
    return grad;
  }

  // Directional derivative of the outputs along the parameter tangent `dp`.
  Mat jvp(const Cache& c, const Vec& dp) const {
    if (dp.size() != param_dim()) throw DomainError("mlp: tangent has wrong size");
    Mat t = Mat::Zero(sizes_[0], c.acts[0].cols());
    for (int l = 0; l < num_layers(); ++l) {
      const int nw = sizes_[l + 1] * sizes_[l];
      Eigen::Map<const RowMat> dw(dp.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Mat z = weight(l) * t + dw * c.acts[l];
      z.colwise() += dp.segment(offsets_[l] + nw, sizes_[l + 1]);
      if (nonlinear(l)) z.array() *= 1.0 - c.acts[l + 1].array().square();
      t = std::move(z);
    }
    return t;
  }

 private:
  bool nonlinear(int l) const { return l + 1 < num_layers() || tanh_output_; }

  std::vector<int> sizes_;
  std::vector<int> offsets_;
  bool tanh_output_ = false;
  Vec params_;
};

inline Mat mlp_forward(const Mlp& net, const Mat& input) { return net.forward(input); }

}  // namespace musclegail

#endif  // MUSCLEGAIL_MLP_HPP_
