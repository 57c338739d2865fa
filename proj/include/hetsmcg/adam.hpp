#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hetsmcg/tensor.hpp"

namespace hetsmcg::numkit {

struct AdamConfig {
  double lr = 8e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Standard Adam with bias correction. Moment buffers are zero-initialized
/// and keyed to the parameter list given at construction.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig config = {})
      : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      if (!p.requires_grad()) throw std::invalid_argument("Adam: parameter without grad");
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k].mutable_values();
      const auto& grad = params_[k].grad_data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  long t_ = 0;
};

}  // namespace hetsmcg::numkit
