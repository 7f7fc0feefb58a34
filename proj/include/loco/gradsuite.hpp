#pragma once

// Named finite-difference battery over every differentiable primitive plus
// the composite forward paths. Shared by the CLI `gradcheck` command and the
// acceptance suite.
//
// Central differences are undefined within one step of a kink (relu, clamp,
// min), and random inputs occasionally land there. Each case may therefore be
// redrawn up to kMaxDraws times: a genuine backward-pass bug fails on every
// draw, while a kink-proximity artifact disappears under fresh inputs.

#include <random>
#include <string>
#include <vector>

#include "loco/attention.hpp"
#include "loco/encoders.hpp"
#include "loco/gradcheck.hpp"
#include "loco/policy.hpp"
#include "loco/ssm.hpp"

namespace loco {

struct SuiteEntry {
    std::string name;
    double tol = 1e-6;
    double max_rel_err = 0;
    std::string worst;
    int draws = 1;
    bool pass = false;
};

namespace gradsuite_detail {

constexpr int kMaxDraws = 3;

inline TensorT<double> randn(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    int n = 1;
    for (int d : shape) n *= d;
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = nd(rng);
    TensorT<double> t = TensorT<double>::param(std::move(shape), std::move(v));
    return t;
}

using Fn = std::function<TensorT<double>(TapeT<double>&)>;

inline SuiteEntry run_one(const std::string& name, double tol, const Fn& fn,
                          std::vector<TensorT<double>> params,
                          std::vector<std::string> names) {
    SuiteEntry e;
    e.name = name;
    e.tol = tol;
    auto r = gradcheck(fn, std::move(params), names);
    e.max_rel_err = r.max_rel_err;
    e.worst = r.worst;
    e.pass = r.ok(tol);
    return e;
}

template <class Case>
void run_case(std::vector<SuiteEntry>& out, std::mt19937_64& rng, const Case& c) {
    SuiteEntry e;
    for (int draw = 1; draw <= kMaxDraws; ++draw) {
        e = c(rng);
        e.draws = draw;
        if (e.pass) break;
    }
    out.push_back(e);
}

}  // namespace gradsuite_detail

inline std::vector<SuiteEntry> run_gradcheck_suite(uint64_t seed) {
    using namespace gradsuite_detail;
    std::mt19937_64 rng(seed);
    std::vector<SuiteEntry> out;
    using Td = TensorT<double>;
    using Tape = TapeT<double>;
    using Rng = std::mt19937_64;

    auto ssq = [](Tape& t, const Td& x) { return reduce_sum(&t, square(&t, x)); };

    run_case(out, rng, [&](Rng& r) {
        Td a = randn({3, 4}, r), b = randn({4, 2}, r);
        return run_one("matmul", 1e-6, [&](Tape& t) { return ssq(t, matmul(&t, a, b)); }, {a, b},
                       {"a", "b"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td a = randn({2, 3, 4}, r), b = randn({2, 4, 2}, r);
        return run_one("bmm", 1e-6,
                       [&](Tape& t) { return ssq(t, bmm(&t, a, b, 2, 3, 4, 2, false)); }, {a, b},
                       {"a", "b"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td a = randn({2, 3, 4}, r), c = randn({2, 2, 4}, r);
        return run_one("bmm_transposed", 1e-6,
                       [&](Tape& t) { return ssq(t, bmm(&t, a, c, 2, 3, 4, 2, true)); }, {a, c},
                       {"a", "c"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td a = randn({3, 4}, r), b = randn({4}, r);
        return run_one("broadcast_add_mul", 1e-6,
                       [&](Tape& t) { return ssq(t, mul(&t, add(&t, a, b), sub(&t, a, b))); },
                       {a, b}, {"a", "b"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({3, 5}, r);
        return run_one("unary_chain", 1e-6,
                       [&](Tape& t) {
                           Td y = utanh(&t, softplus(&t, sigmoid(&t, scale(&t, x, 0.7))));
                           return reduce_sum(&t, uexp(&t, neg(&t, square(&t, y))));
                       },
                       {x}, {"x"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({3, 5}, r);
        return run_one("relu_clamp_min", 1e-6,
                       [&](Tape& t) {
                           Td y = relu(&t, add_scalar(&t, x, 0.1));
                           Td z = clamp(&t, x, -1.0, 1.0);
                           return reduce_sum(&t, minimum(&t, y, z));
                       },
                       {x}, {"x"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({4, 6}, r);
        return run_one("reductions", 1e-6,
                       [&](Tape& t) {
                           Td s = reduce_sum(&t, x, 1);
                           return reduce_mean(&t, square(&t, s));
                       },
                       {x}, {"x"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({3, 6}, r), g = randn({6}, r, 0.5), b = randn({6}, r, 0.5);
        return run_one("layernorm", 1e-6,
                       [&](Tape& t) { return ssq(t, layernorm(&t, x, g, b)); }, {x, g, b},
                       {"x", "g", "b"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({3, 6}, r);
        return run_one("softmax", 1e-6,
                       [&](Tape& t) {
                           Td s = softmax_rows(&t, x);
                           return reduce_sum(&t, mul(&t, s, x));
                       },
                       {x}, {"x"});
    });
    run_case(out, rng, [&](Rng& r) {
        Td x = randn({4, 3}, r), y = randn({2, 3}, r);
        return run_one("structural_ops", 1e-6,
                       [&](Tape& t) {
                           Td cat = concat_rows(&t, x, y);
                           Td g = gather_rows(&t, cat, {5, 0, 2, 2});
                           Td wide = concat_cols(&t, g, g);
                           return ssq(t, tile_rows(&t, wide, 2));
                       },
                       {x, y}, {"x", "y"});
    });
    for (bool gated : {false, true}) {
        run_case(out, rng, [&](Rng& r) {
            SsmConfig sc;
            sc.token_width = 3;
            sc.state_dim = 2;
            sc.layers = 1;
            sc.gated_d = gated;
            const int cols = sc.token_width + 2 * sc.state_dim + (gated ? sc.token_width : 0);
            Td u = randn({5, sc.token_width}, r, 0.5);
            Td g = randn({5, cols}, r, 0.5);
            Td a_log = randn({sc.token_width, sc.state_dim}, r, 0.3);
            Td d_skip = randn({sc.token_width}, r, 0.5);
            std::vector<double> x0(size_t(sc.token_width) * sc.state_dim, 0.1);
            return run_one(gated ? "selective_scan_gated" : "selective_scan", 1e-6,
                           [&, sc, x0](Tape& t) {
                               Td y = selective_scan(&t, u, g, a_log, d_skip, sc, 1, x0);
                               return reduce_sum(&t, square(&t, y));
                           },
                           {u, g, a_log, d_skip}, {"u", "g", "a_log", "d_skip"});
        });
    }
    run_case(out, rng, [&](Rng& r) {
        AttnConfig ac;
        ac.token_width = 4;
        ac.heads = 2;
        ac.layers = 1;
        ac.ff_hidden = 5;
        auto p = init_attn<double>(ac, r);
        Td tokens = randn({3, ac.token_width}, r);
        auto params = p.all();
        params.push_back(tokens);
        auto names = p.names();
        names.push_back("tokens");
        return run_one("attention_layer", 1e-6,
                       [&](Tape& t) { return ssq(t, attn_layer(&t, tokens, p.layers[0], ac, 1)); },
                       params, names);
    });
    run_case(out, rng, [&](Rng& r) {
        PolicyConfig pc;
        pc.feature_dim = 4;
        pc.action_dim = 2;
        pc.hidden = 6;
        auto p = init_policy<double>(pc, r);
        Td h = randn({3, pc.feature_dim}, r);
        Td at = randn({3, pc.action_dim}, r);
        auto params = p.all();
        params.push_back(h);
        auto names = p.names();
        names.push_back("h");
        return run_one("policy_evaluate", 1e-6,
                       [&](Tape& t) {
                           auto ev = evaluate(&t, h, at, p);
                           Td s = add(&t, reduce_sum(&t, ev.logp), reduce_sum(&t, ev.entropy));
                           return add(&t, s, reduce_sum(&t, square(&t, ev.value)));
                       },
                       params, names);
    });
    run_case(out, rng, [&](Rng& r) {
        // full pipeline: observation encoding -> SSM backbone -> scalar
        EncoderConfig ec;
        ec.proprio_dim = 5;
        ec.frames = 2;
        ec.height = 4;
        ec.width = 4;
        ec.patch = 2;
        ec.token_width = 6;
        ec.mlp_hidden = 7;
        SsmConfig sc;
        sc.token_width = ec.token_width;
        sc.state_dim = 2;
        sc.layers = 2;
        sc.head_hidden = 5;
        sc.feature_dim = 3;
        auto enc = init_encoder<double>(ec, r);
        auto bb = init_backbone<double>(sc, r);
        std::uniform_real_distribution<double> ud(0.0, 5.0);
        std::vector<Observation<double>> obs(2);
        std::normal_distribution<double> nd;
        for (auto& o : obs) {
            o.proprio.resize(size_t(ec.proprio_dim));
            for (auto& v : o.proprio) v = nd(r);
            o.depth_stack.resize(size_t(ec.frames) * ec.height * ec.width);
            for (auto& v : o.depth_stack) v = ud(r);
        }
        std::vector<CarriedState<double>> states(2, CarriedState<double>::zero(sc));
        std::vector<const CarriedState<double>*> carried = {&states[0], &states[1]};
        auto params = enc.all();
        auto names = enc.names();
        auto bp = bb.all();
        auto bn = bb.names();
        params.insert(params.end(), bp.begin(), bp.end());
        names.insert(names.end(), bn.begin(), bn.end());
        return run_one("full_pipeline", 1e-4,
                       [&](Tape& t) {
                           Td tokens = encode_observations(&t, obs, enc, ec);
                           Td h = backbone_forward(&t, tokens, bb, 2, carried);
                           return reduce_sum(&t, square(&t, h));
                       },
                       params, names);
    });
    return out;
}

}  // namespace loco
