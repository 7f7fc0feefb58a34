#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "loco/gradcheck.hpp"
#include "loco/policy.hpp"

using loco::PolicyConfig;
using loco::TensorT;
using Td = TensorT<double>;
using Tape = loco::TapeT<double>;

namespace {

PolicyConfig small_cfg() {
    PolicyConfig c;
    c.feature_dim = 6;
    c.action_dim = 2;
    c.hidden = 8;
    c.a_max = {0.5, 1.5};
    return c;
}

Td random_features(int s, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::vector<double> v(size_t(s) * d);
    for (auto& x : v) x = nd(rng);
    return Td::from({s, d}, std::move(v));
}

}  // namespace

TEST_CASE("deterministic action is the squashed mean") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(1);
    auto p = loco::init_policy<double>(cfg, rng);
    Td h = random_features(3, cfg.feature_dim, rng);
    auto out = loco::act(h, p, cfg, rng, true);
    auto ao = loco::actor_forward<double>(nullptr, h, p);
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < cfg.action_dim; ++i) {
            const double mu = ao.mu[s * cfg.action_dim + i];
            CHECK(out[size_t(s)].a_tilde[size_t(i)] == doctest::Approx(mu));
            CHECK(out[size_t(s)].a[size_t(i)] ==
                  doctest::Approx(cfg.a_max[size_t(i)] * std::tanh(mu)));
        }
}

TEST_CASE("sampled actions always respect the per-dimension bound") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(2);
    auto p = loco::init_policy<double>(cfg, rng);
    // widen the distribution so the bound is actually exercised
    std::fill(p.b_ls.data->begin(), p.b_ls.data->end(), 1.5);
    const int S = 100000;
    Td h = random_features(S, cfg.feature_dim, rng);
    auto out = loco::act(h, p, cfg, rng, false);
    // tanh < 1 mathematically but rounds to 1.0 for large inputs, so the
    // realized bound is closed
    for (const auto& as : out)
        for (int i = 0; i < cfg.action_dim; ++i)
            CHECK(std::abs(as.a[size_t(i)]) <= cfg.a_max[size_t(i)]);
}

TEST_CASE("sampling logp matches the differentiable evaluation") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(3);
    auto p = loco::init_policy<double>(cfg, rng);
    const int S = 16;
    Td h = random_features(S, cfg.feature_dim, rng);
    auto out = loco::act(h, p, cfg, rng, false);
    std::vector<double> at;
    for (const auto& as : out) at.insert(at.end(), as.a_tilde.begin(), as.a_tilde.end());
    Td at_t = Td::from({S, cfg.action_dim}, std::move(at));
    auto ev = loco::evaluate<double>(nullptr, h, at_t, p);
    for (int s = 0; s < S; ++s)
        CHECK(ev.logp[s] == doctest::Approx(out[size_t(s)].logp).epsilon(1e-10));
}

TEST_CASE("unit-variance entropy equals the closed form and doubling sigma adds A ln 2") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(4);
    auto p = loco::init_policy<double>(cfg, rng);
    std::fill(p.w_ls.data->begin(), p.w_ls.data->end(), 0.0);
    std::fill(p.b_ls.data->begin(), p.b_ls.data->end(), 0.0);  // sigma = 1
    const int S = 4, A = cfg.action_dim;
    Td h = random_features(S, cfg.feature_dim, rng);
    Td at = Td::zeros({S, A});
    auto ev = loco::evaluate<double>(nullptr, h, at, p);
    const double per_dim = 0.5 * std::log(2.0 * M_PI * M_E);
    for (int s = 0; s < S; ++s) CHECK(ev.entropy[s] == doctest::Approx(A * per_dim));
    CHECK(2 * per_dim == doctest::Approx(2.8378770664).epsilon(1e-9));

    std::fill(p.b_ls.data->begin(), p.b_ls.data->end(), std::log(2.0));
    auto ev2 = loco::evaluate<double>(nullptr, h, at, p);
    for (int s = 0; s < S; ++s)
        CHECK(ev2.entropy[s] - ev.entropy[s] == doctest::Approx(A * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log-std head saturates at the clamp limits") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(5);
    auto p = loco::init_policy<double>(cfg, rng);
    std::fill(p.b_ls.data->begin(), p.b_ls.data->end(), 100.0);
    Td h = random_features(2, cfg.feature_dim, rng);
    auto hi = loco::actor_forward<double>(nullptr, h, p);
    for (int i = 0; i < hi.log_std.numel(); ++i) CHECK(hi.log_std[i] == loco::kLogStdMax);
    std::fill(p.b_ls.data->begin(), p.b_ls.data->end(), -100.0);
    auto lo = loco::actor_forward<double>(nullptr, h, p);
    for (int i = 0; i < lo.log_std.numel(); ++i) CHECK(lo.log_std[i] == loco::kLogStdMin);
}

TEST_CASE("zero-mean policy produces symmetric actions") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(6);
    auto p = loco::init_policy<double>(cfg, rng);
    std::fill(p.w_mu.data->begin(), p.w_mu.data->end(), 0.0);
    std::fill(p.b_mu.data->begin(), p.b_mu.data->end(), 0.0);
    const int S = 200000;
    Td h = random_features(S, cfg.feature_dim, rng);
    auto out = loco::act(h, p, cfg, rng, false);
    std::vector<double> mean(size_t(cfg.action_dim), 0.0);
    for (const auto& as : out)
        for (int i = 0; i < cfg.action_dim; ++i) mean[size_t(i)] += as.a[size_t(i)];
    for (int i = 0; i < cfg.action_dim; ++i) {
        mean[size_t(i)] /= S;
        CHECK(std::abs(mean[size_t(i)]) < 5e-3);
    }
}

TEST_CASE("log-density peaks at the mean") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(7);
    auto p = loco::init_policy<double>(cfg, rng);
    Td h = random_features(1, cfg.feature_dim, rng);
    auto ao = loco::actor_forward<double>(nullptr, h, p);
    std::vector<double> at_mean(ao.mu.data->begin(), ao.mu.data->end());
    auto ev_mean = loco::evaluate<double>(nullptr, h,
                                          Td::from({1, cfg.action_dim}, at_mean), p);
    for (double delta : {0.01, 0.1, 1.0}) {
        auto shifted = at_mean;
        shifted[0] += delta;
        auto ev = loco::evaluate<double>(nullptr, h,
                                         Td::from({1, cfg.action_dim}, shifted), p);
        CHECK(ev.logp[0] < ev_mean.logp[0]);
    }
}

TEST_CASE("evaluation gradcheck through actor and critic") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(8);
    auto p = loco::init_policy<double>(cfg, rng);
    const int S = 3;
    Td h = random_features(S, cfg.feature_dim, rng);
    h.requires_grad = true;
    h.grad = std::make_shared<std::vector<double>>(h.data->size(), 0.0);
    Td at = random_features(S, cfg.action_dim, rng);
    auto params = p.all();
    params.push_back(h);
    auto names = p.names();
    names.push_back("h");
    auto res = loco::gradcheck(
        [&](Tape& t) {
            auto ev = loco::evaluate(&t, h, at, p);
            Td s1 = loco::reduce_sum(&t, ev.logp);
            Td s2 = loco::reduce_sum(&t, ev.entropy);
            Td s3 = loco::reduce_sum(&t, loco::square(&t, ev.value));
            return loco::add(&t, loco::add(&t, s1, s2), s3);
        },
        params, names);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("mismatched action width is rejected") {
    PolicyConfig cfg = small_cfg();
    std::mt19937_64 rng(9);
    auto p = loco::init_policy<double>(cfg, rng);
    Td h = random_features(2, cfg.feature_dim, rng);
    Td bad = random_features(2, cfg.action_dim + 1, rng);
    CHECK_THROWS_AS(loco::evaluate<double>(nullptr, h, bad, p), std::invalid_argument);
}
