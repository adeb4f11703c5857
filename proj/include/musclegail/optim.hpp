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

#ifndef MUSCLEGAIL_OPTIM_HPP_
#define MUSCLEGAIL_OPTIM_HPP_

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "musclegail/errors.hpp"
#include "musclegail/numeric.hpp"

namespace musclegail {

class Adam {
 public:
  Adam() = default;
  Adam(int dim, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vec::Zero(dim)), v_(Vec::Zero(dim)) {
    if (!(lr > 0)) throw ConfigError("adam: learning rate must be > 0");
  }

  // One descent step along `grad`, in place.
  void step(Vec& params, const Vec& grad) {
    if (grad.size() != m_.size() || params.size() != m_.size())
      throw DomainError("adam: dimension mismatch");
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  long steps() const { return t_; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  Vec m_, v_;
  long t_ = 0;
};

struct CgResult {
  Vec x;
  int iterations = 0;
  double residual_norm = 0.0;
};

// Conjugate gradient for A x = b with A symmetric positive definite, given
// only through products.
inline CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& apply, const Vec& b,
                                   int iterations, double tolerance = 1e-12) {
  CgResult r;
  r.x = Vec::Zero(b.size());
  Vec res = b;
  Vec p = b;
  double rr = res.squaredNorm();
  for (int k = 0; k < iterations && rr > tolerance * tolerance; ++k) {
    const Vec ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0)) break;
    const double alpha = rr / pap;
    r.x += alpha * p;
    res -= alpha * ap;
    const double rr_new = res.squaredNorm();
    p = res + (rr_new / rr) * p;
    rr = rr_new;
    r.iterations = k + 1;
  }
  r.residual_norm = std::sqrt(rr);
  return r;
}

}  // namespace musclegail

#endif  // MUSCLEGAIL_OPTIM_HPP_
