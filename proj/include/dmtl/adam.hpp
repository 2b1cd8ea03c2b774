#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dmtl/error.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed group of Variables.
///
/// The optimizer keeps raw pointers to the Variables it updates; the owner of
/// those Variables must outlive it and must not relocate them.
class Adam {
 public:
  Adam(std::vector<Variable*> params, AdamConfig config = {}) : params_(std::move(params)), config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ArgumentError("adam: learning rate must be positive");
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (const Variable* p : params_) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  /// Applies one update from the current gradients. Gradients are left as they are.
  void step() {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Variable& var = *params_[p];
      auto& m = first_[p].data();
      auto& v = second_[p].data();
      auto& x = var.value.data();
      const auto& g = var.grad.data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        x[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (Variable* p : params_) p->zero_grad();
  }

  std::size_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Variable*>& params() const noexcept { return params_; }
  const Tensor& first_moment(std::size_t i) const { return first_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return second_.at(i); }

 private:
  std::vector<Variable*> params_;
  AdamConfig config_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::size_t steps_ = 0;
};

}  // namespace dmtl
