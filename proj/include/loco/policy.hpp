#pragma once

// Gaussian-tanh actor and value critic over the fused feature h_t.
// Likelihood ratios and entropy are computed on the pre-squash variable;
// tanh is a fixed bijection so the Jacobian cancels in ratios.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "loco/tensor.hpp"

namespace loco {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

struct PolicyConfig {
    int feature_dim = 256;
    int action_dim = 3;
    int hidden = 256;
    std::vector<double> a_max;  // per-dimension bound; defaults to 1.0

    double bound(int i) const {
        if (a_max.empty()) return 1.0;
        return a_max[static_cast<size_t>(i) % a_max.size()];
    }
};

template <class Real>
struct PolicyParams {
    TensorT<Real> aw1, ab1, w_mu, b_mu, w_ls, b_ls;  // actor
    TensorT<Real> vw1, vb1, vw2, vb2;                // critic

    std::vector<TensorT<Real>> actor() const { return {aw1, ab1, w_mu, b_mu, w_ls, b_ls}; }
    std::vector<TensorT<Real>> critic() const { return {vw1, vb1, vw2, vb2}; }
    std::vector<TensorT<Real>> all() const {
        auto v = actor();
        auto c = critic();
        v.insert(v.end(), c.begin(), c.end());
        return v;
    }
    std::vector<std::string> names() const {
        return {"pi.w1", "pi.b1", "pi.w_mu", "pi.b_mu", "pi.w_ls", "pi.b_ls",
                "vf.w1", "vf.b1", "vf.w2", "vf.b2"};
    }
};

template <class Real>
PolicyParams<Real> init_policy(const PolicyConfig& cfg, std::mt19937_64& rng) {
    const int dh = cfg.feature_dim, hd = cfg.hidden, a = cfg.action_dim;
    auto fan = [](int in) { return Real(1) / std::sqrt(Real(in)); };
    PolicyParams<Real> p;
    p.aw1 = gaussian_param<Real>({dh, hd}, fan(dh), rng);
    p.ab1 = TensorT<Real>::param_zeros({hd});
    // small final-layer init keeps the initial policy near its mean
    p.w_mu = gaussian_param<Real>({hd, a}, Real(0.01) * fan(hd), rng);
    p.b_mu = TensorT<Real>::param_zeros({a});
    p.w_ls = gaussian_param<Real>({hd, a}, Real(0.01) * fan(hd), rng);
    p.b_ls = TensorT<Real>::param_zeros({a});
    p.vw1 = gaussian_param<Real>({dh, hd}, fan(dh), rng);
    p.vb1 = TensorT<Real>::param_zeros({hd});
    p.vw2 = gaussian_param<Real>({hd, 1}, fan(hd), rng);
    p.vb2 = TensorT<Real>::param_zeros({1});
    return p;
}

template <class Real>
struct ActionSample {
    std::vector<Real> a_tilde;  // pre-squash
    std::vector<Real> a;        // squashed, |a_i| < a_max_i
    Real logp = 0;              // log-density of a_tilde under N(mu, diag sigma^2)
};

template <class Real>
struct ActorOut {
    TensorT<Real> mu, log_std;  // S x A each
};

template <class Real>
ActorOut<Real> actor_forward(TapeT<Real>* tape, const TensorT<Real>& h,
                             const PolicyParams<Real>& p) {
    TensorT<Real> z = relu(tape, add(tape, matmul(tape, h, p.aw1), p.ab1));
    TensorT<Real> mu = add(tape, matmul(tape, z, p.w_mu), p.b_mu);
    TensorT<Real> ls =
        clamp(tape, add(tape, matmul(tape, z, p.w_ls), p.b_ls), Real(kLogStdMin), Real(kLogStdMax));
    return {mu, ls};
}

template <class Real>
TensorT<Real> critic_forward(TapeT<Real>* tape, const TensorT<Real>& h,
                             const PolicyParams<Real>& p) {
    TensorT<Real> z = relu(tape, add(tape, matmul(tape, h, p.vw1), p.vb1));
    return add(tape, matmul(tape, z, p.vw2), p.vb2);  // S x 1
}

// Rollout-time sampling for a batch of features (no tape).
template <class Real>
std::vector<ActionSample<Real>> act(const TensorT<Real>& h, const PolicyParams<Real>& p,
                                    const PolicyConfig& cfg, std::mt19937_64& rng,
                                    bool deterministic) {
    ActorOut<Real> ao = actor_forward<Real>(nullptr, h, p);
    const int s_count = ao.mu.rows(), a_dim = ao.mu.cols();
    std::normal_distribution<double> nd;
    std::vector<ActionSample<Real>> out(static_cast<size_t>(s_count));
    for (int s = 0; s < s_count; ++s) {
        auto& as = out[static_cast<size_t>(s)];
        as.a_tilde.resize(static_cast<size_t>(a_dim));
        as.a.resize(static_cast<size_t>(a_dim));
        Real logp = 0;
        for (int i = 0; i < a_dim; ++i) {
            const Real mu = ao.mu[s * a_dim + i];
            const Real ls = ao.log_std[s * a_dim + i];
            if (!std::isfinite(mu) || !std::isfinite(ls))
                throw std::runtime_error("act: non-finite policy output");
            const Real sigma = std::exp(ls);
            const Real at = deterministic ? mu : mu + sigma * Real(nd(rng));
            as.a_tilde[static_cast<size_t>(i)] = at;
            as.a[static_cast<size_t>(i)] = Real(cfg.bound(i)) * std::tanh(at);
            const Real z = (at - mu) / sigma;
            logp += Real(-0.5) * z * z - ls - Real(kHalfLog2Pi);
        }
        as.logp = logp;
    }
    return out;
}

template <class Real>
struct Evaluation {
    TensorT<Real> logp;     // S x 1
    TensorT<Real> entropy;  // S x 1, closed-form diagonal Gaussian
    TensorT<Real> value;    // S x 1
};

// Differentiable evaluation of stored pre-squash actions under the current
// parameters.
template <class Real>
Evaluation<Real> evaluate(TapeT<Real>* tape, const TensorT<Real>& h, const TensorT<Real>& a_tilde,
                          const PolicyParams<Real>& p) {
    ActorOut<Real> ao = actor_forward(tape, h, p);
    if (a_tilde.rows() != ao.mu.rows() || a_tilde.cols() != ao.mu.cols())
        throw std::invalid_argument("evaluate: action dimension mismatch");
    TensorT<Real> inv_sigma = uexp(tape, neg(tape, ao.log_std));
    TensorT<Real> z = mul(tape, sub(tape, a_tilde, ao.mu), inv_sigma);
    TensorT<Real> per_dim = sub(tape, scale(tape, square(tape, z), Real(-0.5)), ao.log_std);
    TensorT<Real> logp =
        add_scalar(tape, reduce_sum(tape, per_dim, 1), Real(-kHalfLog2Pi * ao.mu.cols()));
    TensorT<Real> entropy = add_scalar(tape, reduce_sum(tape, ao.log_std, 1),
                                       Real((0.5 + kHalfLog2Pi) * ao.mu.cols()));
    return {logp, entropy, critic_forward(tape, h, p)};
}

}  // namespace loco
