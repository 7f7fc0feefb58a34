#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "loco/tensor.hpp"

namespace loco {

// Adam with bias correction over a fixed parameter list. Moment buffers are
// keyed by position, so the list must not change between steps.
template <class Real>
class AdamT {
  public:
    AdamT(std::vector<TensorT<Real>> params, Real lr, Real beta1 = Real(0.9),
          Real beta2 = Real(0.999), Real eps = Real(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (lr <= Real(0)) throw std::invalid_argument("adam: lr must be positive");
        for (const auto& p : params_) {
            if (!p.grad) throw std::invalid_argument("adam: parameter without grad buffer");
            m_.emplace_back(p.numel(), Real(0));
            v_.emplace_back(p.numel(), Real(0));
        }
    }

    const std::vector<TensorT<Real>>& params() const { return params_; }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    // Scale all gradients so the global L2 norm is at most max_norm.
    // Returns the pre-clip norm.
    Real clip_grad_norm(Real max_norm) {
        Real sq = 0;
        for (const auto& p : params_)
            for (Real g : *p.grad) sq += g * g;
        const Real norm = std::sqrt(sq);
        if (norm > max_norm && norm > Real(0)) {
            const Real s = max_norm / norm;
            for (auto& p : params_)
                for (Real& g : *p.grad) g *= s;
        }
        return norm;
    }

    void step() {
        ++t_;
        const Real bc1 = Real(1) - std::pow(beta1_, Real(t_));
        const Real bc2 = Real(1) - std::pow(beta2_, Real(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Real* w = params_[i].ptr();
            const Real* g = params_[i].grad->data();
            Real* m = m_[i].data();
            Real* v = v_[i].data();
            const int n = params_[i].numel();
            for (int j = 0; j < n; ++j) {
                m[j] = beta1_ * m[j] + (Real(1) - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (Real(1) - beta2_) * g[j] * g[j];
                const Real mhat = m[j] / bc1;
                const Real vhat = v[j] / bc2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    int64_t steps() const { return t_; }

  private:
    std::vector<TensorT<Real>> params_;
    std::vector<std::vector<Real>> m_, v_;
    Real lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace loco
