#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "loco/encoders.hpp"
#include "loco/gradcheck.hpp"

using loco::EncoderConfig;
using loco::TensorT;
using Td = TensorT<double>;
using Tape = loco::TapeT<double>;

namespace {

EncoderConfig small_cfg() {
    EncoderConfig cfg;
    cfg.proprio_dim = 7;
    cfg.frames = 2;
    cfg.height = cfg.width = 8;
    cfg.patch = 4;
    cfg.token_width = 6;
    cfg.mlp_hidden = 5;
    cfg.max_range = 5.0;
    return cfg;
}

loco::Observation<double> random_obs(const EncoderConfig& cfg, std::mt19937_64& rng) {
    loco::Observation<double> o;
    std::uniform_real_distribution<double> up(-1, 1), ud(0, cfg.max_range);
    o.proprio.resize(static_cast<size_t>(cfg.proprio_dim));
    for (auto& v : o.proprio) v = up(rng);
    o.depth_stack.resize(static_cast<size_t>(cfg.frames * cfg.height * cfg.width));
    for (auto& v : o.depth_stack) v = ud(rng);
    return o;
}

}  // namespace

TEST_CASE("token count law") {
    EncoderConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.patch = 4;
    CHECK(cfg.n_visual() == 16);
    cfg.height = cfg.width = 64;
    cfg.patch = 8;
    CHECK(cfg.n_visual() == 64);
    cfg.patch = 5;  // 64 % 5 != 0
    CHECK_THROWS(cfg.n_visual());
}

TEST_CASE("zero proprio input with zero biases gives zero token") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(1);
    auto p = loco::init_encoder<double>(cfg, rng);
    Td x = Td::zeros({1, cfg.proprio_dim});
    Td z = loco::encode_proprio<double>(nullptr, x, p, cfg);
    CHECK(z.rows() == 1);
    CHECK(z.cols() == cfg.token_width);
    for (int i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("proprio encoder gradcheck") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(2);
    auto p = loco::init_encoder<double>(cfg, rng);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> xv(static_cast<size_t>(cfg.proprio_dim));
    for (auto& v : xv) v = nd(rng);
    Td x = Td::from({1, cfg.proprio_dim}, xv);
    auto res = loco::gradcheck(
        [&](Tape& t) {
            Td z = loco::encode_proprio(&t, x, p, cfg);
            return loco::reduce_sum(&t, loco::square(&t, z));
        },
        {p.w1, p.b1, p.w2, p.b2, p.w3, p.b3});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("patchify produces N tokens and zero maps to zero") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(3);
    auto p = loco::init_encoder<double>(cfg, rng);
    std::vector<double> depth(static_cast<size_t>(cfg.frames * cfg.height * cfg.width), 0.0);
    auto patches = loco::extract_patches(depth, cfg);
    Td x = Td::from({cfg.n_visual(), cfg.patch_dim()}, patches);
    Td z = loco::patchify_depth<double>(nullptr, x, p, cfg);
    CHECK(z.rows() == cfg.n_visual());
    for (int i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);  // zero biases at init
}

TEST_CASE("assembled tokens are row-normalized") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(4);
    auto p = loco::init_encoder<double>(cfg, rng);
    // unit-scale codes so pre-LN row variance is O(1); with tiny rows the
    // LN eps dominates and the normalized variance is var/(var+eps)
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : *p.e_pos.data) v = nd(rng);
    auto obs = random_obs(cfg, rng);
    Td tokens = loco::encode_observations<double>(nullptr, {obs}, p, cfg);
    const int k = cfg.n_tokens(), d = cfg.token_width;
    CHECK(tokens.rows() == k);
    for (int r = 0; r < k; ++r) {
        double mean = 0, var = 0;
        for (int j = 0; j < d; ++j) mean += tokens[r * d + j];
        mean /= d;
        for (int j = 0; j < d; ++j) var += (tokens[r * d + j] - mean) * (tokens[r * d + j] - mean);
        var /= d;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("layernorm idempotent on zero-mean unit-variance rows with zero codes") {
    EncoderConfig cfg = small_cfg();
    const int d = cfg.token_width;
    std::mt19937_64 rng(5);
    Td g = Td::from({d}, std::vector<double>(static_cast<size_t>(d), 1.0));
    Td b = Td::zeros({d});
    std::vector<double> row(static_cast<size_t>(d));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : row) v = nd(rng);
    double mean = 0;
    for (double v : row) mean += v;
    mean /= d;
    double var = 0;
    for (double& v : row) {
        v -= mean;
        var += v * v;
    }
    var /= d;
    for (double& v : row) v /= std::sqrt(var);
    Td x = Td::from({1, d}, row);
    Td y = loco::layernorm<double>(nullptr, x, g, b, 1e-12);
    for (int j = 0; j < d; ++j) CHECK(y[j] == doctest::Approx(row[static_cast<size_t>(j)]).epsilon(1e-6));
}

TEST_CASE("modality code has exactly two distinct row values") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(6);
    auto p = loco::init_encoder<double>(cfg, rng);
    CHECK(p.e_mod.rows() == 2);
    bool differs = false;
    for (int j = 0; j < cfg.token_width; ++j)
        if (p.e_mod[j] != p.e_mod[cfg.token_width + j]) differs = true;
    CHECK(differs);
}

TEST_CASE("permuting visual tokens permutes output rows correspondingly") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(7);
    auto p = loco::init_encoder<double>(cfg, rng);
    // make positional codes uniform across visual tokens so the only
    // difference between visual rows is the content itself
    for (int i = 1; i < cfg.n_tokens(); ++i)
        for (int j = 0; j < cfg.token_width; ++j)
            (*p.e_pos.data)[i * cfg.token_width + j] = (*p.e_pos.data)[cfg.token_width + j];

    auto obs = random_obs(cfg, rng);
    const int n = cfg.n_visual(), d = cfg.token_width;

    auto patches = loco::extract_patches(obs.depth_stack, cfg);
    auto run = [&](const std::vector<double>& pm) {
        Td xv = Td::from({n, cfg.patch_dim()}, pm);
        Td xp = Td::from({1, cfg.proprio_dim}, obs.proprio);
        Td zp = loco::encode_proprio<double>(nullptr, xp, p, cfg);
        Td zv = loco::patchify_depth<double>(nullptr, xv, p, cfg);
        return loco::project_and_assemble<double>(nullptr, zp, zv, p, cfg, 1);
    };
    Td base = run(patches);
    // swap patches 0 and 1
    std::vector<double> swapped = patches;
    for (int j = 0; j < cfg.patch_dim(); ++j)
        std::swap(swapped[static_cast<size_t>(j)], swapped[static_cast<size_t>(cfg.patch_dim() + j)]);
    Td perm = run(swapped);
    for (int j = 0; j < d; ++j) {
        CHECK(perm[(1) * d + j] == doctest::Approx(base[2 * d + j]));
        CHECK(perm[(2) * d + j] == doctest::Approx(base[1 * d + j]));
        CHECK(perm[0 * d + j] == doctest::Approx(base[0 * d + j]));
    }
}

TEST_CASE("encode order independence") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(8);
    auto p = loco::init_encoder<double>(cfg, rng);
    auto obs = random_obs(cfg, rng);
    const int n = cfg.n_visual();
    Td xp = Td::from({1, cfg.proprio_dim}, obs.proprio);
    Td xv = Td::from({n, cfg.patch_dim()}, loco::extract_patches(obs.depth_stack, cfg));
    // proprio first
    Td zp1 = loco::encode_proprio<double>(nullptr, xp, p, cfg);
    Td zv1 = loco::patchify_depth<double>(nullptr, xv, p, cfg);
    Td a = loco::project_and_assemble<double>(nullptr, zp1, zv1, p, cfg, 1);
    // depth first
    Td zv2 = loco::patchify_depth<double>(nullptr, xv, p, cfg);
    Td zp2 = loco::encode_proprio<double>(nullptr, xp, p, cfg);
    Td b = loco::project_and_assemble<double>(nullptr, zp2, zv2, p, cfg, 1);
    for (int i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("full encoder gradcheck through assembly") {
    EncoderConfig cfg = small_cfg();
    std::mt19937_64 rng(9);
    auto p = loco::init_encoder<double>(cfg, rng);
    auto obs = random_obs(cfg, rng);
    auto res = loco::gradcheck(
        [&](Tape& t) {
            Td tokens = loco::encode_observations(&t, {obs}, p, cfg);
            return loco::reduce_sum(&t, loco::square(&t, tokens));
        },
        p.all(), p.names());
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("perturb_depth salt noise properties") {
    const int h = 16, w = 16;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> ud(0.0, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> depth(h * w);
        for (auto& v : depth) v = ud(rng);
        std::vector<double> orig = depth;
        std::mt19937_64 prng(static_cast<uint64_t>(trial));
        loco::perturb_depth(depth, h, w, 5.0, prng);
        int changed = 0;
        for (int i = 0; i < h * w; ++i) {
            if (depth[static_cast<size_t>(i)] != orig[static_cast<size_t>(i)]) {
                ++changed;
                CHECK(depth[static_cast<size_t>(i)] == 5.0);
            }
        }
        CHECK(changed >= 3);
        CHECK(changed <= 30);
        // determinism under the same seed
        std::vector<double> depth2 = orig;
        std::mt19937_64 prng2(static_cast<uint64_t>(trial));
        loco::perturb_depth(depth2, h, w, 5.0, prng2);
        CHECK(depth == depth2);
    }
}
