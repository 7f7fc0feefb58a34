#pragma once

// Selective state-space fusion backbone: per-token input-gated recurrence
// with cross-step state carry, stacked residual layers, and the pooling head.
//
// Per token u (width d), with per-channel state size h:
//   delta = softplus(affine(u))        (d)
//   B, C  = affine(u)                  (h each)
//   abar  = exp(delta (x) A),  A = -exp(A_log) < 0
//   x     = abar (x) x + delta*B*u
//   y_c   = sum_s C_s x_{c,s} + D_c u_c     (y reads the updated state)
// The affine slices live in one shared in-projection of width d+2h (+d when
// the input-gated D variant is enabled).

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "loco/scan.hpp"
#include "loco/tensor.hpp"

namespace loco {

struct SsmConfig {
    int token_width = 128;  // d, must match the encoder
    int state_dim = 8;      // h
    int layers = 2;
    bool gated_d = false;   // token-dependent D term
    int head_hidden = 256;
    int feature_dim = 256;  // d_h
};

template <class Real>
struct SsmLayerParams {
    TensorT<Real> w_in, b_in;  // d -> d + 2h (+ d)
    TensorT<Real> a_log;       // d x h
    TensorT<Real> d_skip;      // d
    TensorT<Real> ln_gain, ln_bias;
};

template <class Real>
struct BackboneParams {
    SsmConfig cfg;
    std::vector<SsmLayerParams<Real>> layers;
    TensorT<Real> head_w1, head_b1, head_w2, head_b2;  // [2d -> hidden -> d_h]

    std::vector<TensorT<Real>> all() const {
        std::vector<TensorT<Real>> v;
        for (const auto& l : layers) {
            v.push_back(l.w_in);
            v.push_back(l.b_in);
            v.push_back(l.a_log);
            v.push_back(l.d_skip);
            v.push_back(l.ln_gain);
            v.push_back(l.ln_bias);
        }
        v.push_back(head_w1);
        v.push_back(head_b1);
        v.push_back(head_w2);
        v.push_back(head_b2);
        return v;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> v;
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string p = "ssm." + std::to_string(i) + ".";
            for (const char* n : {"w_in", "b_in", "a_log", "d_skip", "ln_gain", "ln_bias"})
                v.push_back(p + n);
        }
        v.insert(v.end(), {"ssm.head_w1", "ssm.head_b1", "ssm.head_w2", "ssm.head_b2"});
        return v;
    }
};

// Carried recurrent state of one rollout stream: layers * d * h values.
template <class Real>
struct CarriedState {
    std::vector<Real> x;
    static CarriedState zero(const SsmConfig& cfg) {
        return {std::vector<Real>(size_t(cfg.layers) * cfg.token_width * cfg.state_dim, Real(0))};
    }
    Real* layer(const SsmConfig& cfg, int l) {
        return x.data() + size_t(l) * cfg.token_width * cfg.state_dim;
    }
    const Real* layer(const SsmConfig& cfg, int l) const {
        return x.data() + size_t(l) * cfg.token_width * cfg.state_dim;
    }
};

template <class Real>
SsmLayerParams<Real> init_ssm_layer(const SsmConfig& cfg, std::mt19937_64& rng) {
    const int d = cfg.token_width, h = cfg.state_dim;
    const int gw = d + 2 * h + (cfg.gated_d ? d : 0);
    SsmLayerParams<Real> p;
    p.w_in = gaussian_param<Real>({d, gw}, Real(1) / std::sqrt(Real(d)), rng);
    // delta bias so softplus(b) ~ 0.1 at init
    std::vector<Real> bin(static_cast<size_t>(gw), Real(0));
    const Real delta_bias = Real(std::log(std::exp(0.1) - 1.0));
    for (int c = 0; c < d; ++c) bin[static_cast<size_t>(c)] = delta_bias;
    p.b_in = TensorT<Real>::param({gw}, std::move(bin));
    // decay timescales spread over [1, h] per channel (S4-style)
    std::vector<Real> al(size_t(d) * h);
    for (int c = 0; c < d; ++c)
        for (int s = 0; s < h; ++s) al[size_t(c) * h + s] = Real(std::log(double(s + 1)));
    p.a_log = TensorT<Real>::param({d, h}, std::move(al));
    p.d_skip = TensorT<Real>::param({d}, std::vector<Real>(static_cast<size_t>(d), Real(1)));
    p.ln_gain = TensorT<Real>::param({d}, std::vector<Real>(static_cast<size_t>(d), Real(1)));
    p.ln_bias = TensorT<Real>::param_zeros({d});
    return p;
}

template <class Real>
BackboneParams<Real> init_backbone(const SsmConfig& cfg, std::mt19937_64& rng) {
    BackboneParams<Real> p;
    p.cfg = cfg;
    for (int l = 0; l < cfg.layers; ++l) p.layers.push_back(init_ssm_layer<Real>(cfg, rng));
    const int d2 = 2 * cfg.token_width;
    p.head_w1 = gaussian_param<Real>({d2, cfg.head_hidden}, Real(1) / std::sqrt(Real(d2)), rng);
    p.head_b1 = TensorT<Real>::param_zeros({cfg.head_hidden});
    p.head_w2 = gaussian_param<Real>({cfg.head_hidden, cfg.feature_dim},
                                     Real(1) / std::sqrt(Real(cfg.head_hidden)), rng);
    p.head_b2 = TensorT<Real>::param_zeros({cfg.feature_dim});
    return p;
}

enum class ScanBackend { Sequential, Parallel };

// Selective scan as one tape op with a hand-written reverse pass.
//   u:  (S*K x d) tokens
//   g:  (S*K x d+2h[+d]) shared affine output; cols [0,d) delta-pre,
//       [d,d+h) B, [d+h,d+2h) C, [d+2h,d+2h+d) gated-D
//   x0: per-sample incoming states (S*d*h), not differentiated (truncated
//       BPTT at step granularity)
// Returns y (S*K x d); final states are written to x_out (S*d*h) if given.
template <class Real>
TensorT<Real> selective_scan(TapeT<Real>* tape, const TensorT<Real>& u, const TensorT<Real>& g,
                             const TensorT<Real>& a_log, const TensorT<Real>& d_skip,
                             const SsmConfig& cfg, int batch, const std::vector<Real>& x0,
                             std::vector<Real>* x_out = nullptr,
                             ScanBackend backend = ScanBackend::Sequential) {
    const int d = cfg.token_width, h = cfg.state_dim;
    const int gw = d + 2 * h + (cfg.gated_d ? d : 0);
    if (u.cols() != d || g.cols() != gw || u.rows() != g.rows() || u.rows() % batch != 0)
        throw std::invalid_argument("selective_scan: shape mismatch");
    if (static_cast<int>(x0.size()) != batch * d * h)
        throw std::invalid_argument("selective_scan: state size mismatch");
    const int k_tokens = u.rows() / batch;
    const int lanes = d * h;

    const bool ng = detail::tracked(tape, u) || detail::tracked(tape, g) ||
                    detail::tracked(tape, a_log) || detail::tracked(tape, d_skip);
    TensorT<Real> y = detail::make_output(tape, {batch * k_tokens, d}, ng);

    // saved activations
    auto delta = std::make_shared<std::vector<Real>>(size_t(batch) * k_tokens * d);
    auto abar = std::make_shared<std::vector<Real>>(size_t(batch) * k_tokens * lanes);
    auto states = std::make_shared<std::vector<Real>>(size_t(batch) * k_tokens * lanes);
    auto amat = std::make_shared<std::vector<Real>>(size_t(lanes));  // A = -exp(a_log)
    for (int i = 0; i < lanes; ++i) (*amat)[size_t(i)] = -std::exp((*a_log.data)[i]);

#pragma omp parallel for schedule(static)
    for (int s = 0; s < batch; ++s) {
        const Real* us = u.ptr() + int64_t(s) * k_tokens * d;
        const Real* gs = g.ptr() + int64_t(s) * k_tokens * gw;
        Real* ds = delta->data() + size_t(s) * k_tokens * d;
        Real* as = abar->data() + size_t(s) * k_tokens * lanes;
        std::vector<Real> binc(size_t(k_tokens) * lanes);
        for (int k = 0; k < k_tokens; ++k) {
            const Real* gk = gs + int64_t(k) * gw;
            const Real* uk = us + int64_t(k) * d;
            Real* dk = ds + size_t(k) * d;
            for (int c = 0; c < d; ++c) {
                const Real pre = gk[c];
                const Real dl = pre > Real(20) ? pre : std::log1p(std::exp(pre));
                if (!std::isfinite(dl))
                    throw std::runtime_error("selective_scan: non-finite delta (parameter blow-up)");
                dk[c] = dl;
                for (int st = 0; st < h; ++st) {
                    const size_t lane = size_t(c) * h + st;
                    as[size_t(k) * lanes + lane] = std::exp(dl * (*amat)[lane]);
                    binc[size_t(k) * lanes + lane] = dl * gk[d + st] * uk[c];
                }
            }
        }
        Real* xs = states->data() + size_t(s) * k_tokens * lanes;
        const Real* x0s = x0.data() + size_t(s) * lanes;
        if (backend == ScanBackend::Sequential)
            scan_sequential(as, binc.data(), x0s, xs, k_tokens, lanes);
        else
            scan_parallel(as, binc.data(), x0s, xs, k_tokens, lanes);
        // outputs read the updated state
        Real* ys = y.ptr() + int64_t(s) * k_tokens * d;
        for (int k = 0; k < k_tokens; ++k) {
            const Real* gk = gs + int64_t(k) * gw;
            const Real* uk = us + int64_t(k) * d;
            const Real* xk = xs + size_t(k) * lanes;
            for (int c = 0; c < d; ++c) {
                Real acc = 0;
                for (int st = 0; st < h; ++st) acc += gk[d + h + st] * xk[size_t(c) * h + st];
                Real dc = (*d_skip.data)[c];
                if (cfg.gated_d) dc += gk[d + 2 * h + c];
                ys[int64_t(k) * d + c] = acc + dc * uk[c];
            }
        }
        if (x_out)
            std::copy_n(xs + size_t(k_tokens - 1) * lanes, lanes, x_out->data() + size_t(s) * lanes);
    }
    check_finite(y, "selective_scan");

    if (ng) {
        const std::vector<Real> x0c = x0;
        tape->record([u, g, a_log, d_skip, y, cfg, batch, k_tokens, delta, abar, states, amat,
                      x0c]() {
            const int d = cfg.token_width, h = cfg.state_dim;
            const int gw = d + 2 * h + (cfg.gated_d ? d : 0);
            const int lanes = d * h;
            std::vector<Real> g_alog(size_t(lanes), Real(0));
            std::vector<Real> g_dskip(static_cast<size_t>(d), Real(0));
            for (int s = 0; s < batch; ++s) {
                const Real* us = u.ptr() + int64_t(s) * k_tokens * d;
                const Real* gs = g.ptr() + int64_t(s) * k_tokens * gw;
                const Real* gy = y.grad->data() + int64_t(s) * k_tokens * d;
                const Real* ds = delta->data() + size_t(s) * k_tokens * d;
                const Real* as = abar->data() + size_t(s) * k_tokens * lanes;
                const Real* xs = states->data() + size_t(s) * k_tokens * lanes;
                Real* gu = u.grad ? u.grad->data() + int64_t(s) * k_tokens * d : nullptr;
                Real* gg = g.grad ? g.grad->data() + int64_t(s) * k_tokens * gw : nullptr;
                std::vector<Real> dx(size_t(lanes), Real(0));  // adjoint of x_k
                for (int k = k_tokens - 1; k >= 0; --k) {
                    const Real* gk = gs + int64_t(k) * gw;
                    const Real* uk = us + int64_t(k) * d;
                    const Real* xk = xs + size_t(k) * lanes;
                    const Real* xprev =
                        k == 0 ? x0c.data() + size_t(s) * lanes : xs + size_t(k - 1) * lanes;
                    const Real* gyk = gy + int64_t(k) * d;
                    for (int c = 0; c < d; ++c) {
                        const Real gyc = gyk[c];
                        Real dc = (*d_skip.data)[c];
                        if (cfg.gated_d) dc += gk[d + 2 * h + c];
                        g_dskip[static_cast<size_t>(c)] += gyc * uk[c];
                        if (gg && cfg.gated_d) gg[int64_t(k) * gw + d + 2 * h + c] += gyc * uk[c];
                        Real guc = gyc * dc;
                        Real gdelta = 0;
                        const Real dl = ds[size_t(k) * d + c];
                        for (int st = 0; st < h; ++st) {
                            const size_t lane = size_t(c) * h + st;
                            // y -> x and recurrence carry from k+1
                            Real dxl = gyc * gk[d + h + st] + dx[lane];
                            if (gg) gg[int64_t(k) * gw + d + h + st] += gyc * xk[lane];
                            // x_k = abar*x_{k-1} + delta*B*u
                            const Real ab = as[size_t(k) * lanes + lane];
                            const Real gabar = dxl * xprev[lane];
                            g_alog[lane] += gabar * dl * ab * (*amat)[lane];
                            gdelta += gabar * (*amat)[lane] * ab + dxl * gk[d + st] * uk[c];
                            if (gg) gg[int64_t(k) * gw + d + st] += dxl * dl * uk[c];
                            guc += dxl * dl * gk[d + st];
                            // pass adjoint to x_{k-1}
                            dx[lane] = dxl * ab;
                        }
                        if (gu) gu[int64_t(k) * d + c] += guc;
                        if (gg) {
                            const Real pre = gk[c];
                            const Real sig = Real(1) / (Real(1) + std::exp(-pre));
                            gg[int64_t(k) * gw + c] += gdelta * sig;
                        }
                    }
                }
            }
            if (a_log.grad)
                for (int i = 0; i < lanes; ++i) (*a_log.grad)[i] += g_alog[size_t(i)];
            if (d_skip.grad)
                for (int c = 0; c < d; ++c) (*d_skip.grad)[c] += g_dskip[static_cast<size_t>(c)];
        });
    }
    return y;
}

// Modality-aware pooling: per sample, [token 0 ; mean of tokens 1..K-1].
template <class Real>
TensorT<Real> pool_tokens(TapeT<Real>* tape, const TensorT<Real>& y, int batch, int k_tokens) {
    const int d = y.cols();
    if (y.rows() != batch * k_tokens || k_tokens < 2)
        throw std::invalid_argument("pool_tokens: shape mismatch");
    const int nvis = k_tokens - 1;
    const bool ng = detail::tracked(tape, y);
    TensorT<Real> out = detail::make_output(tape, {batch, 2 * d}, ng);
    for (int s = 0; s < batch; ++s) {
        const Real* ys = y.ptr() + int64_t(s) * k_tokens * d;
        Real* os = out.ptr() + int64_t(s) * 2 * d;
        for (int j = 0; j < d; ++j) os[j] = ys[j];
        for (int j = 0; j < d; ++j) {
            Real acc = 0;
            for (int i = 1; i < k_tokens; ++i) acc += ys[int64_t(i) * d + j];
            os[d + j] = acc / Real(nvis);
        }
    }
    if (ng) {
        tape->record([y, out, batch, k_tokens, d, nvis]() {
            const Real* go = out.grad->data();
            Real* gy = y.grad->data();
            for (int s = 0; s < batch; ++s) {
                const Real* gs = go + int64_t(s) * 2 * d;
                Real* gys = gy + int64_t(s) * k_tokens * d;
                for (int j = 0; j < d; ++j) gys[j] += gs[j];
                for (int j = 0; j < d; ++j)
                    for (int i = 1; i < k_tokens; ++i)
                        gys[int64_t(i) * d + j] += gs[d + j] / Real(nvis);
            }
        });
    }
    return out;
}

// Pooling head shared by the SSM backbone and the attention baseline.
template <class Real>
TensorT<Real> projection_head(TapeT<Real>* tape, const TensorT<Real>& pooled,
                              const BackboneParams<Real>& p) {
    TensorT<Real> h1 = relu(tape, add(tape, matmul(tape, pooled, p.head_w1), p.head_b1));
    return add(tape, matmul(tape, h1, p.head_w2), p.head_b2);
}

// Full backbone over a batch of token sequences (S*K x d) with per-sample
// carried states. new_states, when given, receives the final per-layer
// states for each sample.
template <class Real>
TensorT<Real> backbone_forward(TapeT<Real>* tape, const TensorT<Real>& tokens,
                               const BackboneParams<Real>& p, int batch,
                               const std::vector<const CarriedState<Real>*>& carried,
                               std::vector<CarriedState<Real>>* new_states = nullptr,
                               ScanBackend backend = ScanBackend::Sequential) {
    const SsmConfig& cfg = p.cfg;
    const int d = cfg.token_width;
    if (static_cast<int>(carried.size()) != batch)
        throw std::invalid_argument("backbone_forward: carried state count mismatch");
    if (tokens.rows() % batch != 0) throw std::invalid_argument("backbone_forward: batch mismatch");
    const int k_tokens = tokens.rows() / batch;
    const int lanes = d * cfg.state_dim;
    if (new_states) {
        new_states->clear();
        for (int s = 0; s < batch; ++s) new_states->push_back(CarriedState<Real>::zero(cfg));
    }
    TensorT<Real> h = tokens;
    for (int l = 0; l < cfg.layers; ++l) {
        const auto& lp = p.layers[static_cast<size_t>(l)];
        std::vector<Real> x0(size_t(batch) * lanes);
        for (int s = 0; s < batch; ++s)
            std::copy_n(carried[static_cast<size_t>(s)]->layer(cfg, l), lanes,
                        x0.data() + size_t(s) * lanes);
        TensorT<Real> g = add(tape, matmul(tape, h, lp.w_in), lp.b_in);
        std::vector<Real> xf(size_t(batch) * lanes);
        TensorT<Real> y =
            selective_scan(tape, h, g, lp.a_log, lp.d_skip, cfg, batch, x0, &xf, backend);
        if (new_states)
            for (int s = 0; s < batch; ++s)
                std::copy_n(xf.data() + size_t(s) * lanes, lanes,
                            (*new_states)[static_cast<size_t>(s)].layer(cfg, l));
        h = layernorm(tape, add(tape, y, h), lp.ln_gain, lp.ln_bias);
    }
    TensorT<Real> pooled = pool_tokens(tape, h, batch, k_tokens);
    return projection_head(tape, pooled, p);
}

}  // namespace loco
