#pragma once

// Clipped-surrogate policy optimization: generalized advantage estimation,
// the combined actor/critic/entropy loss, and the minibatch update loop.
// The feature extractor is passed in as a callback so the same update code
// serves every model variant.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "loco/adam.hpp"
#include "loco/policy.hpp"
#include "loco/tensor.hpp"

namespace loco {

struct PpoConfig {
    double gamma = 0.99;
    double lam = 0.95;
    double clip = 0.2;
    double entropy_coef = 0.005;
    double value_coef = 0.5;
    double lr = 2e-4;
    int epochs = 3;
    int minibatch = 1024;
    double max_grad_norm = 0.5;
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;  // advantage + value
};

// Standard reverse recursion. dones[t] marks a terminal transition at step t;
// the final value bootstraps truncated (non-terminal) rollouts.
inline GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                             const std::vector<char>& dones, double bootstrap_value, double gamma,
                             double lam) {
    const size_t n = rewards.size();
    if (values.size() != n || dones.size() != n)
        throw std::invalid_argument("compute_gae: length mismatch");
    GaeResult out;
    out.advantages.resize(n);
    out.returns.resize(n);
    double adv = 0;
    for (size_t i = n; i-- > 0;) {
        const double cont = dones[i] ? 0.0 : 1.0;
        const double v_next = (i + 1 < n && !dones[i]) ? values[i + 1]
                              : dones[i]               ? 0.0
                                                       : bootstrap_value;
        const double delta = rewards[i] + gamma * v_next - values[i];
        adv = delta + gamma * lam * cont * adv;
        out.advantages[i] = adv;
        out.returns[i] = adv + values[i];
    }
    return out;
}

inline void normalize_advantages(std::vector<double>& adv) {
    if (adv.empty()) throw std::invalid_argument("normalize_advantages: empty batch");
    const double n = static_cast<double>(adv.size());
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n) + 1e-8;
    for (double& a : adv) a = (a - mean) / sd;
}

template <class Real>
struct PpoLosses {
    TensorT<Real> total;  // scalar on the tape: -L_clip + c_v*L_V - c_H*H
    double loss_clip = 0, loss_value = 0, entropy = 0;
    double approx_kl = 0, clip_frac = 0;
};

// logp_new / logp_old / adv / entropy have shape {S}; value / ret {S,1}.
template <class Real>
PpoLosses<Real> ppo_losses(TapeT<Real>* tape, const TensorT<Real>& logp_new,
                           const TensorT<Real>& logp_old, const TensorT<Real>& adv,
                           const TensorT<Real>& entropy, const TensorT<Real>& value,
                           const TensorT<Real>& ret, const PpoConfig& cfg) {
    const int s = logp_new.numel();
    if (s == 0) throw std::invalid_argument("ppo_losses: empty batch");
    if (logp_old.numel() != s || adv.numel() != s || entropy.numel() != s ||
        value.numel() != s || ret.numel() != s)
        throw std::invalid_argument("ppo_losses: batch size mismatch");

    TensorT<Real> ratio = uexp(tape, sub(tape, logp_new, logp_old));
    TensorT<Real> surr1 = mul(tape, ratio, adv);
    TensorT<Real> surr2 =
        mul(tape, clamp(tape, ratio, Real(1.0 - cfg.clip), Real(1.0 + cfg.clip)), adv);
    TensorT<Real> l_clip = reduce_mean(tape, minimum(tape, surr1, surr2));
    TensorT<Real> l_value = reduce_mean(tape, square(tape, sub(tape, value, ret)));
    TensorT<Real> h = reduce_mean(tape, entropy);

    PpoLosses<Real> out;
    out.total = add(tape,
                    add(tape, scale(tape, l_clip, Real(-1)),
                        scale(tape, l_value, Real(cfg.value_coef))),
                    scale(tape, h, Real(-cfg.entropy_coef)));
    out.loss_clip = double((*l_clip.data)[0]);
    out.loss_value = double((*l_value.data)[0]);
    out.entropy = double((*h.data)[0]);
    double kl = 0, clipped = 0;
    for (int i = 0; i < s; ++i) {
        kl += double((*logp_old.data)[i] - (*logp_new.data)[i]);
        if (std::abs(double((*ratio.data)[i]) - 1.0) > cfg.clip) clipped += 1;
    }
    out.approx_kl = kl / s;
    out.clip_frac = clipped / s;
    if (!std::isfinite(out.loss_clip) || !std::isfinite(out.loss_value) ||
        !std::isfinite(out.entropy))
        throw std::runtime_error("ppo_losses: non-finite loss");
    return out;
}

// Flat rollout batch; rows indexed 0..size-1.
template <class Real>
struct RolloutBatch {
    int action_dim = 0;
    std::vector<Real> a_tilde;    // T x A, row-major
    std::vector<Real> logp_old;   // T
    std::vector<double> adv;      // T, normalized before the update
    std::vector<double> returns;  // T

    int size() const {
        return action_dim > 0 ? static_cast<int>(a_tilde.size()) / action_dim : 0;
    }
};

struct UpdateStats {
    double loss_clip = 0, loss_value = 0, entropy = 0;
    double approx_kl = 0, clip_frac = 0, grad_norm = 0;
    int minibatches = 0;
};

// One optimization phase over a collected batch. `features(tape, idx)` must
// return the fused feature rows for the given sample indices, with gradients
// reaching every upstream parameter owned by `opt`.
template <class Real, class FeatureFn>
UpdateStats ppo_update(FeatureFn&& features, RolloutBatch<Real>& batch,
                       const PolicyParams<Real>& policy, AdamT<Real>& opt, const PpoConfig& cfg,
                       std::mt19937_64& rng) {
    const int n = batch.size();
    if (n == 0) throw std::invalid_argument("ppo_update: empty batch");
    if (static_cast<int>(batch.logp_old.size()) != n ||
        static_cast<int>(batch.adv.size()) != n ||
        static_cast<int>(batch.returns.size()) != n)
        throw std::invalid_argument("ppo_update: field length mismatch");
    normalize_advantages(batch.adv);

    const int a_dim = batch.action_dim;
    const int mb = std::min(cfg.minibatch, n);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    UpdateStats agg;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start + mb <= n; start += mb) {
            std::vector<int> idx(order.begin() + start, order.begin() + start + mb);
            std::vector<Real> at(static_cast<size_t>(mb) * a_dim);
            std::vector<Real> lo(static_cast<size_t>(mb));
            std::vector<Real> ad(static_cast<size_t>(mb));
            std::vector<Real> rt(static_cast<size_t>(mb));
            for (int r = 0; r < mb; ++r) {
                const int i = idx[static_cast<size_t>(r)];
                for (int j = 0; j < a_dim; ++j)
                    at[size_t(r) * a_dim + j] = batch.a_tilde[size_t(i) * a_dim + j];
                lo[static_cast<size_t>(r)] = batch.logp_old[static_cast<size_t>(i)];
                ad[static_cast<size_t>(r)] = Real(batch.adv[static_cast<size_t>(i)]);
                rt[static_cast<size_t>(r)] = Real(batch.returns[static_cast<size_t>(i)]);
            }
            TapeT<Real> tape;
            TensorT<Real> h = features(&tape, idx);
            if (h.rows() != mb) throw std::runtime_error("ppo_update: feature batch mismatch");
            TensorT<Real> at_t = TensorT<Real>::from({mb, a_dim}, std::move(at));
            Evaluation<Real> ev = evaluate(&tape, h, at_t, policy);
            PpoLosses<Real> losses = ppo_losses(
                &tape, ev.logp, TensorT<Real>::from({mb}, std::move(lo)),
                TensorT<Real>::from({mb}, std::move(ad)), ev.entropy, ev.value,
                TensorT<Real>::from({mb, 1}, std::move(rt)), cfg);
            opt.zero_grad();
            tape.backward(losses.total);
            agg.grad_norm += opt.clip_grad_norm(Real(cfg.max_grad_norm));
            opt.step();
            agg.loss_clip += losses.loss_clip;
            agg.loss_value += losses.loss_value;
            agg.entropy += losses.entropy;
            agg.approx_kl += losses.approx_kl;
            agg.clip_frac += losses.clip_frac;
            ++agg.minibatches;
        }
    }
    if (agg.minibatches > 0) {
        const double m = agg.minibatches;
        agg.loss_clip /= m;
        agg.loss_value /= m;
        agg.entropy /= m;
        agg.approx_kl /= m;
        agg.clip_frac /= m;
        agg.grad_norm /= m;
    }
    return agg;
}

}  // namespace loco
