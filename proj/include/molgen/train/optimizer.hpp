// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "molgen/tensor/tensor.hpp"

namespace molgen {

// Adam with bias correction; moments follow the parameter list order.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  // Scales all gradients so their global L2 norm is at most max_norm.
  void clip_gradients(double max_norm) {
    double total = 0.0;
    for (const Tensor& p : params_) {
      for (double g : p.grad()) total += g * g;
    }
    total = std::sqrt(total);
    if (total <= max_norm) return;
    const double factor = max_norm / total;
    for (Tensor& p : params_) {
      for (double& g : p.grad_mut()) g *= factor;
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& values = params_[i].values_mut();
      const auto& grad = params_[i].grad();
      if (grad.size() != values.size()) {
        throw Error(ErrorCode::ShapeMismatch, "gradient not populated");
      }
      for (std::size_t j = 0; j < values.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * grad[j];
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * grad[j] * grad[j];
        const double m_hat = m_[i][j] / bc1;
        const double v_hat = v_[i][j] / bc2;
        values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  int steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  int t_ = 0;
};

}  // namespace molgen
