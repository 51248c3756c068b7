#pragma once

#include <cmath>
#include <vector>

#include "freshcast/nn/tensor.hpp"

namespace freshcast::train {

template <std::floating_point T>
class Adam {
 public:
  Adam(std::vector<nn::Tensor<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }

  // Frozen parameters (requires_grad off) and parameters without a gradient are skipped.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto* p = params_[k];
      if (!p->requires_grad() || !p->has_grad()) continue;
      const auto g = p->grad();
      auto w = p->mutable_data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long steps() const { return t_; }

 private:
  std::vector<nn::Tensor<T>*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace freshcast::train
