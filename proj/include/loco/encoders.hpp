#pragma once

// Observation -> normalized cross-modal token sequence.
// Token row 0 is the proprioceptive token, rows 1..N the depth-patch tokens
// in raster order. The four depth frames enter as channels of a single
// patchify convolution, so the token count depends only on (H/P)*(W/P).

#include <random>
#include <stdexcept>
#include <vector>

#include "loco/tensor.hpp"

namespace loco {

struct EncoderConfig {
    int proprio_dim = 93;
    int frames = 4;
    int height = 64;
    int width = 64;
    int patch = 8;
    int token_width = 128;  // common width d; d_p = d_v = d
    int mlp_hidden = 256;
    double max_range = 5.0;

    int n_visual() const {
        if (patch <= 0 || height % patch != 0 || width % patch != 0)
            throw std::invalid_argument("encoder: H and W must be divisible by patch size");
        return (height / patch) * (width / patch);
    }
    int n_tokens() const { return 1 + n_visual(); }
    int patch_dim() const { return frames * patch * patch; }
};

template <class Real>
struct Observation {
    std::vector<Real> proprio;      // D_p
    std::vector<Real> depth_stack;  // F*H*W, oldest frame first, values in [0, max_range]
};

template <class Real>
struct EncoderParams {
    // proprio MLP: D_p -> hidden -> hidden -> d
    TensorT<Real> w1, b1, w2, b2, w3, b3;
    // patchify: conv (kernel = stride = P, frames as channels) then linear
    TensorT<Real> conv_w, conv_b;  // (F*P*P x d), (d)
    TensorT<Real> lin_w, lin_b;    // (d x d), (d)
    // common-width projections
    TensorT<Real> proj_p, proj_v;  // (d x d)
    // positional / modality codes and final per-token LN
    TensorT<Real> e_pos;  // (1+N x d)
    TensorT<Real> e_mod;  // (2 x d): row 0 proprio, row 1 shared by all visual tokens
    TensorT<Real> ln_gain, ln_bias;

    std::vector<TensorT<Real>> all() const {
        return {w1, b1, w2, b2, w3, b3, conv_w, conv_b, lin_w, lin_b,
                proj_p, proj_v, e_pos, e_mod, ln_gain, ln_bias};
    }
    std::vector<std::string> names() const {
        return {"enc.w1", "enc.b1", "enc.w2", "enc.b2", "enc.w3", "enc.b3",
                "enc.conv_w", "enc.conv_b", "enc.lin_w", "enc.lin_b",
                "enc.proj_p", "enc.proj_v", "enc.e_pos", "enc.e_mod",
                "enc.ln_gain", "enc.ln_bias"};
    }
};

template <class Real>
EncoderParams<Real> init_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
    const int d = cfg.token_width;
    const int h = cfg.mlp_hidden;
    const int pd = cfg.patch_dim();
    auto fan = [](int in) { return Real(1) / std::sqrt(Real(in)); };
    EncoderParams<Real> p;
    p.w1 = gaussian_param<Real>({cfg.proprio_dim, h}, fan(cfg.proprio_dim), rng);
    p.b1 = TensorT<Real>::param_zeros({h});
    p.w2 = gaussian_param<Real>({h, h}, fan(h), rng);
    p.b2 = TensorT<Real>::param_zeros({h});
    p.w3 = gaussian_param<Real>({h, d}, fan(h), rng);
    p.b3 = TensorT<Real>::param_zeros({d});
    p.conv_w = gaussian_param<Real>({pd, d}, fan(pd), rng);
    p.conv_b = TensorT<Real>::param_zeros({d});
    p.lin_w = gaussian_param<Real>({d, d}, fan(d), rng);
    p.lin_b = TensorT<Real>::param_zeros({d});
    p.proj_p = gaussian_param<Real>({d, d}, fan(d), rng);
    p.proj_v = gaussian_param<Real>({d, d}, fan(d), rng);
    p.e_pos = gaussian_param<Real>({cfg.n_tokens(), d}, Real(0.02), rng);
    p.e_mod = gaussian_param<Real>({2, d}, Real(0.02), rng);
    p.ln_gain = TensorT<Real>::param({d}, std::vector<Real>(static_cast<size_t>(d), Real(1)));
    p.ln_bias = TensorT<Real>::param_zeros({d});
    return p;
}

// z_prop for a batch of proprio rows (S x D_p).
template <class Real>
TensorT<Real> encode_proprio(TapeT<Real>* tape, const TensorT<Real>& x,
                             const EncoderParams<Real>& p, const EncoderConfig& cfg) {
    if (x.cols() != cfg.proprio_dim)
        throw std::invalid_argument("encode_proprio: dimension mismatch");
    TensorT<Real> h1 = relu(tape, add(tape, matmul(tape, x, p.w1), p.b1));
    TensorT<Real> h2 = relu(tape, add(tape, matmul(tape, h1, p.w2), p.b2));
    return add(tape, matmul(tape, h2, p.w3), p.b3);
}

// Rearranges one depth stack into its N x (F*P*P) patch matrix, raster order,
// depth normalized into [0,1]. Pure preprocessing: observations carry no grad.
template <class Real>
std::vector<Real> extract_patches(const std::vector<Real>& depth_stack, const EncoderConfig& cfg) {
    const int F = cfg.frames, H = cfg.height, W = cfg.width, P = cfg.patch;
    if (static_cast<int>(depth_stack.size()) != F * H * W)
        throw std::invalid_argument("extract_patches: depth stack size mismatch");
    const int nh = H / P, nw = W / P;
    std::vector<Real> out(static_cast<size_t>(nh * nw * F * P * P));
    const Real inv = Real(1) / Real(cfg.max_range);
    size_t o = 0;
    for (int py = 0; py < nh; ++py)
        for (int px = 0; px < nw; ++px)
            for (int f = 0; f < F; ++f)
                for (int iy = 0; iy < P; ++iy)
                    for (int ix = 0; ix < P; ++ix)
                        out[o++] = depth_stack[size_t(f) * H * W + size_t(py * P + iy) * W +
                                               size_t(px * P + ix)] * inv;
    return out;
}

// patches: (S*N x F*P*P) -> visual tokens (S*N x d_v).
template <class Real>
TensorT<Real> patchify_depth(TapeT<Real>* tape, const TensorT<Real>& patches,
                             const EncoderParams<Real>& p, const EncoderConfig& cfg) {
    if (patches.cols() != cfg.patch_dim())
        throw std::invalid_argument("patchify_depth: patch dimension mismatch");
    TensorT<Real> c = add(tape, matmul(tape, patches, p.conv_w), p.conv_b);
    return add(tape, matmul(tape, c, p.lin_w), p.lin_b);
}

// Builds LN(U + E_pos + E_mod) for a batch; output (S*(1+N) x d).
template <class Real>
TensorT<Real> project_and_assemble(TapeT<Real>* tape, const TensorT<Real>& z_prop,
                                   const TensorT<Real>& z_vis, const EncoderParams<Real>& p,
                                   const EncoderConfig& cfg, int batch) {
    const int n = cfg.n_visual();
    const int k = cfg.n_tokens();
    if (z_prop.rows() != batch || z_vis.rows() != batch * n)
        throw std::invalid_argument("project_and_assemble: batch/token count mismatch");
    if (p.e_pos.rows() != k) throw std::invalid_argument("project_and_assemble: table size mismatch");
    TensorT<Real> tp = matmul(tape, z_prop, p.proj_p);  // S x d
    TensorT<Real> tv = matmul(tape, z_vis, p.proj_v);   // S*N x d

    // interleave into rows s*(1+N)+k
    std::vector<int> order(static_cast<size_t>(batch * k));
    for (int s = 0; s < batch; ++s) {
        order[size_t(s) * k] = s;  // proprio row from tp (offset after concat below)
        for (int i = 0; i < n; ++i) order[size_t(s) * k + 1 + i] = batch + s * n + i;
    }
    TensorT<Real> stacked = concat_rows(tape, tp, tv);
    TensorT<Real> u = gather_rows(tape, stacked, order);

    // modality rows: 0 for proprio token, 1 for visual tokens
    std::vector<int> mod(static_cast<size_t>(k), 1);
    mod[0] = 0;
    TensorT<Real> e_mod_rows = gather_rows(tape, p.e_mod, mod);
    TensorT<Real> codes = add(tape, p.e_pos, e_mod_rows);  // (1+N) x d
    TensorT<Real> u2 = add(tape, u, tile_rows(tape, codes, batch));
    return layernorm(tape, u2, p.ln_gain, p.ln_bias);
}

// Full observation batch -> token sequence (S*(1+N) x d).
template <class Real>
TensorT<Real> encode_observations(TapeT<Real>* tape, const std::vector<Observation<Real>>& obs,
                                  const EncoderParams<Real>& p, const EncoderConfig& cfg) {
    const int batch = static_cast<int>(obs.size());
    const int n = cfg.n_visual();
    std::vector<Real> prop;
    std::vector<Real> patches;
    prop.reserve(size_t(batch) * cfg.proprio_dim);
    patches.reserve(size_t(batch) * n * cfg.patch_dim());
    for (const auto& o : obs) {
        if (static_cast<int>(o.proprio.size()) != cfg.proprio_dim)
            throw std::invalid_argument("encode_observations: proprio dim mismatch");
        prop.insert(prop.end(), o.proprio.begin(), o.proprio.end());
        auto pm = extract_patches(o.depth_stack, cfg);
        patches.insert(patches.end(), pm.begin(), pm.end());
    }
    TensorT<Real> xp = TensorT<Real>::from({batch, cfg.proprio_dim}, std::move(prop));
    TensorT<Real> xv = TensorT<Real>::from({batch * n, cfg.patch_dim()}, std::move(patches));
    TensorT<Real> zp = encode_proprio(tape, xp, p, cfg);
    TensorT<Real> zv = patchify_depth(tape, xv, p, cfg);
    return project_and_assemble(tape, zp, zv, p, cfg, batch);
}

// Salt-noise perturbation: K ~ U{3..30} distinct pixels set to max_range.
template <class Real>
void perturb_depth(std::vector<Real>& depth, int height, int width, Real max_range,
                   std::mt19937_64& rng) {
    const int n = height * width;
    std::uniform_int_distribution<int> kd(3, 30);
    const int k = std::min(kd(rng), n);
    std::uniform_int_distribution<int> pd(0, n - 1);
    std::vector<char> hit(static_cast<size_t>(n), 0);
    int placed = 0;
    while (placed < k) {
        const int i = pd(rng);
        if (!hit[static_cast<size_t>(i)]) {
            hit[static_cast<size_t>(i)] = 1;
            depth[static_cast<size_t>(i)] = max_range;
            ++placed;
        }
    }
}

}  // namespace loco
