#pragma once

#include <cstdio>
#include <vector>

#include "grfp/tensor.hpp"

namespace grfp {

// Bias-corrected Adam. step() applies one update across a fixed parameter
// list; a non-finite gradient skips the whole update and reports it.
template <class T>
class Adam {
 public:
  struct Config {
    T lr = T(2e-5);
    T beta1 = T(0.95);
    T beta2 = T(0.99);
    T eps = T(1e-8);
  };

  explicit Adam(Config cfg = {}) : cfg_(cfg) {}

  Config& config() { return cfg_; }

  bool step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads) {
    require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->shape.empty() ? Tensor<T>::scalar(0) : Tensor<T>(p->shape));
        v_.emplace_back(p->shape.empty() ? Tensor<T>::scalar(0) : Tensor<T>(p->shape));
      }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      require(params[k]->shape == grads[k]->shape, "adam_step: shape mismatch at parameter " + std::to_string(k));
      if (!grads[k]->all_finite()) {
        std::fprintf(stderr, "adam_step: non-finite gradient at parameter %zu, update skipped\n", k);
        return false;
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<T>& p = *params[k];
      const Tensor<T>& g = *grads[k];
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        m_[k].data[i] = cfg_.beta1 * m_[k].data[i] + (T(1) - cfg_.beta1) * g.data[i];
        v_[k].data[i] = cfg_.beta2 * v_[k].data[i] + (T(1) - cfg_.beta2) * g.data[i] * g.data[i];
        const T mhat = m_[k].data[i] / bc1;
        const T vhat = v_[k].data[i] / bc2;
        p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    return true;
  }

  long step_count() const { return t_; }

 private:
  Config cfg_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

// Classical momentum: v <- mu v - lr g; p <- p + v.
template <class T>
class SgdMomentum {
 public:
  struct Config {
    T lr = T(1e-7);
    T momentum = T(0.95);
  };

  explicit SgdMomentum(Config cfg = {}) : cfg_(cfg) {}

  Config& config() { return cfg_; }

  bool step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads) {
    require(params.size() == grads.size(), "sgd_momentum_step: parameter/gradient count mismatch");
    if (v_.empty())
      for (auto* p : params) v_.emplace_back(p->shape.empty() ? Tensor<T>::scalar(0) : Tensor<T>(p->shape));
    for (std::size_t k = 0; k < params.size(); ++k) {
      require(params[k]->shape == grads[k]->shape, "sgd_momentum_step: shape mismatch at parameter " + std::to_string(k));
      if (!grads[k]->all_finite()) {
        std::fprintf(stderr, "sgd_momentum_step: non-finite gradient at parameter %zu, update skipped\n", k);
        return false;
      }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<T>& p = *params[k];
      const Tensor<T>& g = *grads[k];
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        v_[k].data[i] = cfg_.momentum * v_[k].data[i] - cfg_.lr * g.data[i];
        p.data[i] += v_[k].data[i];
      }
    }
    return true;
  }

  const std::vector<Tensor<T>>& velocity() const { return v_; }

 private:
  Config cfg_;
  std::vector<Tensor<T>> v_;
};

}  // namespace grfp
