#pragma once

// Plain self-attention fusion baseline: softmax(QK^T/sqrt(d_head))V with
// residual+LN and a feed-forward block, stacked to mirror the SSM backbone
// depth. No recurrent carry, no masking, no dropout.

#include <random>
#include <stdexcept>
#include <vector>

#include "loco/ssm.hpp"
#include "loco/tensor.hpp"

namespace loco {

struct AttnConfig {
    int token_width = 128;
    int heads = 2;
    int layers = 2;
    int ff_hidden = 256;
};

template <class Real>
struct AttnLayerParams {
    TensorT<Real> wq, wk, wv, wo;  // d x d
    TensorT<Real> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    TensorT<Real> ff_w1, ff_b1, ff_w2, ff_b2;  // d -> ff -> d
};

template <class Real>
struct AttnParams {
    AttnConfig cfg;
    std::vector<AttnLayerParams<Real>> layers;

    std::vector<TensorT<Real>> all() const {
        std::vector<TensorT<Real>> v;
        for (const auto& l : layers)
            for (const auto& t : {l.wq, l.wk, l.wv, l.wo, l.ln1_gain, l.ln1_bias, l.ln2_gain,
                                  l.ln2_bias, l.ff_w1, l.ff_b1, l.ff_w2, l.ff_b2})
                v.push_back(t);
        return v;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> v;
        for (size_t i = 0; i < layers.size(); ++i)
            for (const char* n : {"wq", "wk", "wv", "wo", "ln1_gain", "ln1_bias", "ln2_gain",
                                  "ln2_bias", "ff_w1", "ff_b1", "ff_w2", "ff_b2"})
                v.push_back("attn." + std::to_string(i) + "." + n);
        return v;
    }
};

template <class Real>
AttnParams<Real> init_attn(const AttnConfig& cfg, std::mt19937_64& rng) {
    if (cfg.token_width % cfg.heads != 0)
        throw std::invalid_argument("attn: head count must divide token width");
    const int d = cfg.token_width;
    const Real s = Real(1) / std::sqrt(Real(d));
    AttnParams<Real> p;
    p.cfg = cfg;
    for (int l = 0; l < cfg.layers; ++l) {
        AttnLayerParams<Real> lp;
        lp.wq = gaussian_param<Real>({d, d}, s, rng);
        lp.wk = gaussian_param<Real>({d, d}, s, rng);
        lp.wv = gaussian_param<Real>({d, d}, s, rng);
        lp.wo = gaussian_param<Real>({d, d}, s, rng);
        lp.ln1_gain = TensorT<Real>::param({d}, std::vector<Real>(static_cast<size_t>(d), Real(1)));
        lp.ln1_bias = TensorT<Real>::param_zeros({d});
        lp.ln2_gain = TensorT<Real>::param({d}, std::vector<Real>(static_cast<size_t>(d), Real(1)));
        lp.ln2_bias = TensorT<Real>::param_zeros({d});
        lp.ff_w1 = gaussian_param<Real>({d, cfg.ff_hidden}, s, rng);
        lp.ff_b1 = TensorT<Real>::param_zeros({cfg.ff_hidden});
        lp.ff_w2 = gaussian_param<Real>({cfg.ff_hidden, d},
                                        Real(1) / std::sqrt(Real(cfg.ff_hidden)), rng);
        lp.ff_b2 = TensorT<Real>::param_zeros({d});
        p.layers.push_back(std::move(lp));
    }
    return p;
}

// Reorder (S*K x d) rows into head-major (S*heads*K x dh) blocks and back.
template <class Real>
TensorT<Real> split_heads(TapeT<Real>* tape, const TensorT<Real>& x, int batch, int k_tokens,
                          int heads) {
    const int d = x.cols();
    const int dh = d / heads;
    const bool ng = detail::tracked(tape, x);
    TensorT<Real> out = detail::make_output(tape, {batch * heads * k_tokens, dh}, ng);
    for (int s = 0; s < batch; ++s)
        for (int hh = 0; hh < heads; ++hh)
            for (int k = 0; k < k_tokens; ++k)
                std::copy_n(x.ptr() + (int64_t(s) * k_tokens + k) * d + hh * dh, dh,
                            out.ptr() + ((int64_t(s) * heads + hh) * k_tokens + k) * dh);
    if (ng) {
        tape->record([x, out, batch, k_tokens, heads, d, dh]() {
            for (int s = 0; s < batch; ++s)
                for (int hh = 0; hh < heads; ++hh)
                    for (int k = 0; k < k_tokens; ++k) {
                        const Real* go =
                            out.grad->data() + ((int64_t(s) * heads + hh) * k_tokens + k) * dh;
                        Real* gx = x.grad->data() + (int64_t(s) * k_tokens + k) * d + hh * dh;
                        for (int j = 0; j < dh; ++j) gx[j] += go[j];
                    }
        });
    }
    return out;
}

template <class Real>
TensorT<Real> merge_heads(TapeT<Real>* tape, const TensorT<Real>& x, int batch, int k_tokens,
                          int heads) {
    const int dh = x.cols();
    const int d = dh * heads;
    const bool ng = detail::tracked(tape, x);
    TensorT<Real> out = detail::make_output(tape, {batch * k_tokens, d}, ng);
    for (int s = 0; s < batch; ++s)
        for (int hh = 0; hh < heads; ++hh)
            for (int k = 0; k < k_tokens; ++k)
                std::copy_n(x.ptr() + ((int64_t(s) * heads + hh) * k_tokens + k) * dh, dh,
                            out.ptr() + (int64_t(s) * k_tokens + k) * d + hh * dh);
    if (ng) {
        tape->record([x, out, batch, k_tokens, heads, d, dh]() {
            for (int s = 0; s < batch; ++s)
                for (int hh = 0; hh < heads; ++hh)
                    for (int k = 0; k < k_tokens; ++k) {
                        const Real* go = out.grad->data() + (int64_t(s) * k_tokens + k) * d + hh * dh;
                        Real* gx =
                            x.grad->data() + ((int64_t(s) * heads + hh) * k_tokens + k) * dh;
                        for (int j = 0; j < dh; ++j) gx[j] += go[j];
                    }
        });
    }
    return out;
}

// Rough FLOP count of the attention mixing for the scaling benchmark.
inline int64_t attn_flops(int k_tokens, int d, int heads) {
    const int64_t dh = d / heads;
    const int64_t qkv = 4LL * k_tokens * d * d * 2;                  // Q,K,V,O projections
    const int64_t scores = int64_t(heads) * k_tokens * k_tokens * dh * 2;
    const int64_t mix = int64_t(heads) * k_tokens * k_tokens * dh * 2;
    return qkv + scores + mix;
}

// One attention layer over (S*K x d) tokens. attn_probs, when given,
// receives the row-stochastic attention matrices (S*heads*K x K).
template <class Real>
TensorT<Real> attn_layer(TapeT<Real>* tape, const TensorT<Real>& tokens,
                         const AttnLayerParams<Real>& lp, const AttnConfig& cfg, int batch,
                         TensorT<Real>* attn_probs = nullptr) {
    const int d = cfg.token_width;
    if (tokens.cols() != d || tokens.rows() % batch != 0)
        throw std::invalid_argument("attn_layer: shape mismatch");
    const int k_tokens = tokens.rows() / batch;
    const int heads = cfg.heads;
    const int dh = d / heads;

    TensorT<Real> q = split_heads(tape, matmul(tape, tokens, lp.wq), batch, k_tokens, heads);
    TensorT<Real> k = split_heads(tape, matmul(tape, tokens, lp.wk), batch, k_tokens, heads);
    TensorT<Real> v = split_heads(tape, matmul(tape, tokens, lp.wv), batch, k_tokens, heads);

    TensorT<Real> scores = bmm(tape, q, k, batch * heads, k_tokens, dh, k_tokens, true);
    scores = scale(tape, scores, Real(1) / std::sqrt(Real(dh)));
    TensorT<Real> probs = softmax_rows(tape, scores);
    if (attn_probs) *attn_probs = probs;
    TensorT<Real> mixed = bmm(tape, probs, v, batch * heads, k_tokens, k_tokens, dh, false);
    TensorT<Real> merged = merge_heads(tape, mixed, batch, k_tokens, heads);
    TensorT<Real> attn_out = matmul(tape, merged, lp.wo);

    TensorT<Real> h1 = layernorm(tape, add(tape, attn_out, tokens), lp.ln1_gain, lp.ln1_bias);
    TensorT<Real> ff = add(tape, matmul(tape, relu(tape, add(tape, matmul(tape, h1, lp.ff_w1),
                                                             lp.ff_b1)),
                                        lp.ff_w2),
                           lp.ff_b2);
    return layernorm(tape, add(tape, ff, h1), lp.ln2_gain, lp.ln2_bias);
}

// Stateless attention fusion: stacked layers then the shared pooling head.
template <class Real>
TensorT<Real> attention_fusion_forward(TapeT<Real>* tape, const TensorT<Real>& tokens,
                                       const AttnParams<Real>& p,
                                       const BackboneParams<Real>& head, int batch) {
    TensorT<Real> h = tokens;
    for (const auto& lp : p.layers) h = attn_layer(tape, h, lp, p.cfg, batch);
    const int k_tokens = h.rows() / batch;
    TensorT<Real> pooled = pool_tokens(tape, h, batch, k_tokens);
    return projection_head(tape, pooled, head);
}

}  // namespace loco
