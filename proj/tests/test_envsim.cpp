#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "loco/envsim.hpp"

using loco::CorridorEnv;
using loco::EnvConfig;
using loco::Scenario;

namespace {

EnvConfig desk_cfg() {
    EnvConfig c;
    c.proprio_dim = 15;  // exactly the used layout for action_dim 3
    c.depth_height = 16;
    c.depth_width = 16;
    c.horizon = 200;
    return c;
}

}  // namespace

TEST_CASE("scenario names round-trip and bad names throw") {
    for (auto s : {Scenario::Thin, Scenario::Rugged, Scenario::Dynamic})
        CHECK(loco::parse_scenario(loco::scenario_name(s)) == s);
    CHECK_THROWS_AS(loco::parse_scenario("moon"), std::invalid_argument);
}

TEST_CASE("zero density yields an empty arena") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 7);
    CHECK(env.world().obstacles.empty());
    CHECK_THROWS_AS(env.reset(1.5, 7), std::invalid_argument);
    CHECK_THROWS_AS(env.reset(-0.1, 7), std::invalid_argument);
}

TEST_CASE("same seed and density reproduce layout and draw") {
    for (auto s : {Scenario::Thin, Scenario::Dynamic, Scenario::Rugged}) {
        CorridorEnv a(desk_cfg(), s), b(desk_cfg(), s);
        a.reset(0.8, 42);
        b.reset(0.8, 42);
        REQUIRE(a.world().obstacles.size() == b.world().obstacles.size());
        for (size_t i = 0; i < a.world().obstacles.size(); ++i) {
            CHECK(a.world().obstacles[i].cx == b.world().obstacles[i].cx);
            CHECK(a.world().obstacles[i].cy == b.world().obstacles[i].cy);
        }
        CHECK(a.world().height == b.world().height);
        CHECK(a.draw().action_gain == b.draw().action_gain);
        CHECK(a.draw().sensor_latency == b.draw().sensor_latency);
    }
}

TEST_CASE("only the dynamic scenario moves its obstacles") {
    CorridorEnv dyn(desk_cfg(), Scenario::Dynamic);
    dyn.reset(1.0, 3);
    REQUIRE(!dyn.world().obstacles.empty());
    for (const auto& o : dyn.world().obstacles) CHECK(std::abs(o.vy) > 0);
    auto before = dyn.world().obstacles;
    dyn.step({0, 0, 0});
    bool moved = false;
    for (size_t i = 0; i < before.size(); ++i)
        if (dyn.world().obstacles[i].cy != before[i].cy) moved = true;
    CHECK(moved);

    CorridorEnv thin(desk_cfg(), Scenario::Thin);
    thin.reset(1.0, 3);
    for (const auto& o : thin.world().obstacles) CHECK(o.vy == 0);
    auto tb = thin.world().obstacles;
    thin.step({0.5, 0.1, 0});
    for (size_t i = 0; i < tb.size(); ++i) {
        CHECK(thin.world().obstacles[i].cx == tb[i].cx);
        CHECK(thin.world().obstacles[i].cy == tb[i].cy);
    }
}

TEST_CASE("randomization draws stay inside their ranges") {
    std::mt19937_64 rng(0);
    for (int i = 0; i < 200; ++i) {
        auto d = loco::sample_randomization(rng);
        CHECK(d.action_gain >= 40.0); CHECK(d.action_gain <= 90.0);
        CHECK(d.damping >= 0.4); CHECK(d.damping <= 0.8);
        CHECK(d.inertia_scale >= 0.5); CHECK(d.inertia_scale <= 1.5);
        CHECK(d.friction >= 0.5); CHECK(d.friction <= 1.25);
        CHECK(d.mass_scale >= 0.8); CHECK(d.mass_scale <= 1.2);
        CHECK(d.motor_friction >= 0.0); CHECK(d.motor_friction <= 0.05);
        CHECK(d.motor_strength >= 0.8); CHECK(d.motor_strength <= 1.2);
        CHECK(d.sensor_latency >= 0.0); CHECK(d.sensor_latency <= 0.04);
    }
}

TEST_CASE("reward arithmetic matches the closed forms") {
    EnvConfig cfg = desk_cfg();
    // v = (0.5, 0), tau = 0, alive: R = 1*0.5 + 0.005*0 + 0.1*1 = 0.6
    auto terms = loco::reward_terms(cfg, 0.5, 0.0, {0, 0, 0}, true);
    CHECK(loco::reward_total(cfg, terms) == doctest::Approx(0.6).epsilon(1e-12));
    // stationary, zero action: alive term only
    terms = loco::reward_terms(cfg, 0.0, 0.0, {0, 0, 0}, true);
    CHECK(loco::reward_total(cfg, terms) == doctest::Approx(0.1).epsilon(1e-12));
    // backward motion makes the forward term negative
    terms = loco::reward_terms(cfg, -1.0, 0.0, {0, 0, 0}, true);
    CHECK(terms.r_fwd == doctest::Approx(-1.0));
    // energy is never positive
    terms = loco::reward_terms(cfg, 0.0, 0.0, {0.5, -1.0, 0.2}, true);
    CHECK(terms.r_energy == doctest::Approx(-(0.25 + 1.0 + 0.04)).epsilon(1e-12));
    CHECK(terms.r_energy <= 0);
}

TEST_CASE("step reward always recomposes from the logged terms") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.5, 11);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 50; ++t) {
        auto res = env.step({u(rng), u(rng), u(rng)});
        const auto& c = env.config();
        CHECK(res.reward == doctest::Approx(c.alpha_fwd * res.info.r_fwd +
                                            c.alpha_energy * res.info.r_energy +
                                            c.alpha_alive * res.info.r_alive)
                                .epsilon(1e-12));
        CHECK(res.info.r_energy <= 0);
        if (res.done) break;
        CHECK(res.info.r_alive == 1.0);
    }
}

TEST_CASE("bad actions are rejected") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 1);
    CHECK_THROWS_AS(env.step({0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(env.step({0, 0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("excessive speed terminates as a fall with no alive reward") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 2);
    env.world().speed = 10.0;  // 5x nominal is 5.0
    auto res = env.step({0, 0, -1});
    CHECK(res.done);
    CHECK(res.info.done_reason == "fall");
    CHECK(res.info.r_alive == 0.0);
}

TEST_CASE("episode ends at the horizon") {
    EnvConfig cfg = desk_cfg();
    cfg.horizon = 5;
    CorridorEnv env(cfg, Scenario::Thin);
    env.reset(0.0, 3);
    loco::StepResult res;
    for (int t = 0; t < 5; ++t) res = env.step({0, 0, 0});
    CHECK(res.done);
    CHECK(res.info.done_reason == "horizon");
    CHECK_THROWS_AS(env.step({0, 0, 0}), std::logic_error);
}

TEST_CASE("empty arena renders max_range everywhere") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 4);
    for (double v : env.render_depth()) CHECK(v == env.config().max_range);
}

TEST_CASE("a box dead ahead reads its distance at the image center") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 5);
    auto& w = env.world();
    loco::Obstacle o;
    o.hx = 0.1;
    o.hy = 0.6;
    o.cx = w.x + 2.0 + o.hx;  // front face exactly 2 m ahead
    o.cy = w.y;
    w.obstacles.push_back(o);
    auto img = env.render_depth();
    const int H = env.config().depth_height, W = env.config().depth_width;
    for (int i : {H / 2 - 1, H / 2})
        for (int j : {W / 2 - 1, W / 2}) {
            const double d = img[size_t(i) * W + j];
            CHECK(d >= 2.0);
            CHECK(d <= 2.05);  // one ray-quantization step of slack
        }
    // turning away from the only obstacle clears the whole image
    w.heading = M_PI;
    for (double v : env.render_depth()) CHECK(v == env.config().max_range);
}

TEST_CASE("depth stays in range and rugged terrain shows in the lower rows") {
    CorridorEnv env(desk_cfg(), Scenario::Rugged);
    env.reset(0.0, 6);
    auto img = env.render_depth();
    const int H = env.config().depth_height, W = env.config().depth_width;
    for (double v : img) {
        CHECK(v >= 0.0);
        CHECK(v <= env.config().max_range);
    }
    // bottom row looks steeply down and must hit terrain well inside max_range
    for (int j = 0; j < W; ++j) CHECK(img[size_t(H - 1) * W + j] < env.config().max_range);
    // top row looks up and sees nothing
    for (int j = 0; j < W; ++j) CHECK(img[size_t(0) * W + j] == env.config().max_range);
}

TEST_CASE("initial observation repeats the first frame and pads proprio") {
    EnvConfig cfg = desk_cfg();
    cfg.proprio_dim = 20;  // force padding
    CorridorEnv env(cfg, Scenario::Thin);
    auto obs = env.reset(0.5, 8);
    const int hw = cfg.depth_height * cfg.depth_width;
    REQUIRE(static_cast<int>(obs.depth_stack.size()) == cfg.frames * hw);
    for (int f = 1; f < cfg.frames; ++f)
        for (int i = 0; i < hw; ++i)
            CHECK(obs.depth_stack[size_t(f) * hw + i] == obs.depth_stack[size_t(i)]);
    REQUIRE(static_cast<int>(obs.proprio.size()) == 20);
    for (int i = cfg.proprio_used(); i < 20; ++i) CHECK(obs.proprio[size_t(i)] == 0.0);
}

TEST_CASE("sensor latency delays the observation by ceil(latency/dt) steps") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 9);
    loco::RandomizationDraw d = env.draw();

    d.sensor_latency = 0.0;
    env.set_draw(d);
    CHECK(env.latency_steps() == 0);
    auto res = env.step({1.0, 0, -1});
    CHECK(res.obs.proprio[0] == doctest::Approx(env.world().vx()));  // current state

    d.sensor_latency = 0.04;  // dt = 0.02 -> 2 steps
    env.set_draw(d);
    CHECK(env.latency_steps() == 2);
    env.reset(0.0, 9);
    env.set_draw(d);
    res = env.step({1.0, 0, -1});
    CHECK(env.world().vx() > 0);
    CHECK(res.obs.proprio[0] == 0.0);  // still sees the pre-step state
    res = env.step({1.0, 0, -1});
    CHECK(res.obs.proprio[0] == 0.0);
    res = env.step({1.0, 0, -1});
    CHECK(res.obs.proprio[0] > 0.0);  // first post-reset snapshot arrives
}

TEST_CASE("identical seeds give identical rollouts") {
    CorridorEnv a(desk_cfg(), Scenario::Dynamic), b(desk_cfg(), Scenario::Dynamic);
    a.reset(0.7, 123);
    b.reset(0.7, 123);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> act = {u(rng), u(rng), u(rng)};
        auto ra = a.step(act);
        auto rb = b.step(act);
        CHECK(ra.reward == rb.reward);
        CHECK(ra.obs.proprio == rb.obs.proprio);
        CHECK(ra.obs.depth_stack == rb.obs.depth_stack);
        if (ra.done) break;
    }
}

TEST_CASE("grazing contact is logged but does not end the episode") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 10);
    auto& w = env.world();
    loco::Obstacle o;
    o.hx = 0.1;
    o.hy = 0.6;
    // overlap only the corner of the inflated box: small penetration
    o.cx = w.x + o.hx + env.config().agent_radius - 0.01;
    o.cy = w.y;
    w.obstacles.push_back(o);
    auto res = env.step({0, 0, 0});
    CHECK(res.info.collision);
    CHECK(!res.done);
}

TEST_CASE("deep penetration terminates the episode") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 12);
    auto& w = env.world();
    loco::Obstacle o;
    o.hx = 0.5;
    o.hy = 0.5;
    o.cx = w.x;  // agent inside the box center
    o.cy = w.y;
    w.obstacles.push_back(o);
    auto res = env.step({0, 0, 0});
    CHECK(res.done);
    CHECK(res.info.done_reason == "collision");
}

TEST_CASE("curriculum ramps linearly and saturates") {
    loco::CurriculumSchedule s;
    s.start_density = 0.2;
    s.target_density = 1.0;
    s.ramp_iters = 40;
    CHECK(loco::curriculum_density(s, 0) == doctest::Approx(0.2));
    CHECK(loco::curriculum_density(s, 20) == doctest::Approx(0.6));
    CHECK(loco::curriculum_density(s, 40) == doctest::Approx(1.0));
    CHECK(loco::curriculum_density(s, 400) == doctest::Approx(1.0));
    double prev = -1;
    for (int i = 0; i < 60; ++i) {
        const double d = loco::curriculum_density(s, i);
        CHECK(d >= prev);
        prev = d;
    }
}

TEST_CASE("eval metrics aggregate episodes and hide collisions off-obstacle scenarios") {
    std::vector<loco::EpisodeSummary> eps(3);
    eps[0] = {12.0, 10.0, 0, 100, "horizon"};
    eps[1] = {6.0, 5.0, 4, 80, "horizon"};
    eps[2] = {9.0, 7.5, 1, 90, "fall"};
    auto m = loco::eval_metrics(eps, Scenario::Thin);
    CHECK(m.mean_return == doctest::Approx(9.0));
    CHECK(m.mean_distance == doctest::Approx(7.5));
    CHECK(m.collision_times == 5);
    CHECK(m.collisions_reported);
    auto r = loco::eval_metrics(eps, Scenario::Rugged);
    CHECK(!r.collisions_reported);
    CHECK(r.collision_times == 0);
    CHECK_THROWS_AS(loco::eval_metrics({}, Scenario::Thin), std::invalid_argument);
}

TEST_CASE("driving forward accumulates x displacement") {
    CorridorEnv env(desk_cfg(), Scenario::Thin);
    env.reset(0.0, 13);
    const double x0 = env.world().x;
    for (int t = 0; t < 100; ++t) env.step({1.0, 0, -1});
    CHECK(env.world().x > x0 + 0.5);
    CHECK(std::abs(env.world().speed) < 5.0);  // plant stays stable
}
