#include "loco/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace loco {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Scenario parse_scenario(const std::string& name) {
    if (name == "thin") return Scenario::Thin;
    if (name == "rugged") return Scenario::Rugged;
    if (name == "dynamic") return Scenario::Dynamic;
    throw std::invalid_argument("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Thin: return "thin";
        case Scenario::Rugged: return "rugged";
        case Scenario::Dynamic: return "dynamic";
    }
    throw std::logic_error("bad scenario");
}

RandomizationDraw sample_randomization(std::mt19937_64& rng) {
    auto u = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    RandomizationDraw d;
    d.action_gain = u(40.0, 90.0);
    d.damping = u(0.4, 0.8);
    d.inertia_scale = u(0.5, 1.5);
    d.friction = u(0.5, 1.25);
    d.mass_scale = u(0.8, 1.2);
    d.motor_friction = u(0.0, 0.05);
    d.motor_strength = u(0.8, 1.2);
    d.sensor_latency = u(0.0, 0.04);
    return d;
}

double curriculum_density(const CurriculumSchedule& s, int iter) {
    if (s.ramp_iters <= 0) return s.target_density;
    const double f = std::min(1.0, std::max(0.0, double(iter) / double(s.ramp_iters)));
    return s.start_density + (s.target_density - s.start_density) * f;
}

double WorldState::vx() const { return speed * std::cos(heading); }
double WorldState::vy() const { return speed * std::sin(heading); }

StepInfo reward_terms(const EnvConfig& cfg, double vx, double vy,
                      const std::vector<double>& tau, bool alive) {
    (void)vy;  // forward direction is e_x
    StepInfo info;
    info.r_fwd = vx;
    double e = 0;
    for (double t : tau) e += t * t;
    info.r_energy = -e;
    info.r_alive = alive ? 1.0 : 0.0;
    (void)cfg;
    return info;
}

double reward_total(const EnvConfig& cfg, const StepInfo& info) {
    return cfg.alpha_fwd * info.r_fwd + cfg.alpha_energy * info.r_energy +
           cfg.alpha_alive * info.r_alive;
}

// ---------------------------------------------------------------------------

CorridorEnv::CorridorEnv(EnvConfig cfg, Scenario scenario)
    : cfg_(std::move(cfg)), scenario_(scenario) {
    if (cfg_.action_dim < 3) throw std::invalid_argument("env: action_dim must be >= 3");
    if (cfg_.proprio_dim < cfg_.proprio_used())
        throw std::invalid_argument("env: proprio_dim too small for the configured layout");
}

Observation<double> CorridorEnv::reset(double density, uint64_t seed) {
    if (density < 0.0 || density > 1.0)
        throw std::invalid_argument("reset: density outside [0,1]");
    rng_.seed(seed);
    draw_ = sample_randomization(rng_);
    lag_ = static_cast<int>(std::ceil(draw_.sensor_latency / cfg_.dt - 1e-12));

    state_ = WorldState{};
    state_.x = 1.0;
    state_.y = 0.0;

    if (scenario_has_obstacles(scenario_)) {
        const int count = static_cast<int>(std::lround(density * cfg_.max_obstacles));
        // spawn from just ahead of the start pose so short episodes still
        // traverse the obstacle field
        std::uniform_real_distribution<double> ux(2.5, cfg_.arena_length - 2.0);
        std::uniform_real_distribution<double> uy(-cfg_.arena_half_width + 0.6,
                                                  cfg_.arena_half_width - 0.6);
        std::uniform_real_distribution<double> uh(0.3, 0.8);
        std::uniform_real_distribution<double> uv(0.1, cfg_.obstacle_speed);
        std::bernoulli_distribution flip(0.5);
        for (int i = 0; i < count; ++i) {
            Obstacle o;
            o.cx = ux(rng_);
            o.cy = uy(rng_);
            o.hx = 0.1;  // thin boxes
            o.hy = uh(rng_);
            if (scenario_ == Scenario::Dynamic) {
                o.vy = uv(rng_) * (flip(rng_) ? 1.0 : -1.0);
            }
            state_.obstacles.push_back(o);
        }
    }
    if (scenario_ == Scenario::Rugged) {
        state_.height_rows = 32;
        state_.height_cols = 160;
        std::uniform_real_distribution<double> uh(0.0, cfg_.height_amplitude);
        state_.height.resize(size_t(state_.height_rows) * state_.height_cols);
        for (auto& h : state_.height) h = uh(rng_);
    }

    terminated_ = false;
    last_actions_.assign(3, std::vector<double>(static_cast<size_t>(cfg_.action_dim), 0.0));
    history_.clear();
    history_.push_back(snapshot());
    return assemble_observation();
}

void CorridorEnv::set_draw(const RandomizationDraw& d) {
    draw_ = d;
    lag_ = static_cast<int>(std::ceil(d.sensor_latency / cfg_.dt - 1e-12));
}

double CorridorEnv::terrain_height(double x, double y) const {
    if (state_.height.empty()) return 0.0;
    const double gx = (x / cfg_.arena_length) * (state_.height_cols - 1);
    const double gy = ((y + cfg_.arena_half_width) / (2.0 * cfg_.arena_half_width)) *
                      (state_.height_rows - 1);
    const int cx = std::clamp(int(gx), 0, state_.height_cols - 2);
    const int cy = std::clamp(int(gy), 0, state_.height_rows - 2);
    const double fx = std::clamp(gx - cx, 0.0, 1.0);
    const double fy = std::clamp(gy - cy, 0.0, 1.0);
    auto h = [&](int r, int c) { return state_.height[size_t(r) * state_.height_cols + c]; };
    return (1 - fy) * ((1 - fx) * h(cy, cx) + fx * h(cy, cx + 1)) +
           fy * ((1 - fx) * h(cy + 1, cx) + fx * h(cy + 1, cx + 1));
}

double CorridorEnv::terrain_factor() const {
    if (state_.height.empty()) return 1.0;
    const double eps = 0.05;
    const double gx =
        (terrain_height(state_.x + eps, state_.y) - terrain_height(state_.x - eps, state_.y)) /
        (2 * eps);
    const double gy =
        (terrain_height(state_.x, state_.y + eps) - terrain_height(state_.x, state_.y - eps)) /
        (2 * eps);
    return 1.0 / (1.0 + 8.0 * std::hypot(gx, gy));
}

void CorridorEnv::resolve_collisions(double prev_x, double prev_y, StepInfo& info, bool& fatal) {
    fatal = false;
    const double r = cfg_.agent_radius;
    for (const Obstacle& o : state_.obstacles) {
        const double dx = std::abs(state_.x - o.cx);
        const double dy = std::abs(state_.y - o.cy);
        if (dx < o.hx + r && dy < o.hy + r) {
            info.collision = true;
            const double pen = std::min(o.hx + r - dx, o.hy + r - dy);
            if (pen > 0.5 * std::min(o.hx, o.hy)) {
                fatal = true;  // unrecoverable penetration
                return;
            }
            // grazing contact: back out and bleed speed, episode continues
            state_.x = prev_x;
            state_.y = prev_y;
            state_.speed *= 0.5;
        }
    }
    // arena side walls: slide along, flag contact
    const double wall = cfg_.arena_half_width - r;
    if (std::abs(state_.y) > wall) {
        state_.y = std::clamp(state_.y, -wall, wall);
        state_.contact = true;
    }
}

StepResult CorridorEnv::step(const std::vector<double>& action) {
    if (static_cast<int>(action.size()) != cfg_.action_dim)
        throw std::invalid_argument("step: action dimension mismatch");
    for (double a : action)
        if (!std::isfinite(a)) throw std::invalid_argument("step: NaN action");
    if (terminated_) throw std::logic_error("step: episode already terminated");

    const RandomizationDraw& d = draw_;
    const double dt = cfg_.dt;
    const double gain = d.action_gain / 65.0;  // normalized K_P analogue
    const double brake = 0.5 * (std::clamp(action[2], -1.0, 1.0) + 1.0);

    // forward dynamics: driven first-order plant with damping and friction
    const double drive = gain * action[0] * 2.0 - d.damping * state_.speed -
                         d.motor_friction * (state_.speed > 0 ? 1.0 : state_.speed < 0 ? -1.0 : 0.0);
    state_.speed += dt * drive / d.mass_scale;
    state_.speed *= std::max(0.0, 1.0 - d.friction * dt);
    state_.speed *= 1.0 - 0.9 * brake * dt;

    const double turn = gain * action[1] * 3.0 - d.damping * state_.omega;
    state_.omega += dt * turn / d.inertia_scale;
    state_.heading += dt * state_.omega;

    const double prev_x = state_.x, prev_y = state_.y;
    const double eff = state_.speed * terrain_factor();
    state_.x += dt * eff * std::cos(state_.heading);
    state_.y += dt * eff * std::sin(state_.heading);
    if (scenario_ == Scenario::Dynamic) {
        for (Obstacle& o : state_.obstacles) {
            o.cx += dt * o.vx;
            o.cy += dt * o.vy;
            const double lim = cfg_.arena_half_width - o.hy;
            if (o.cy > lim || o.cy < -lim) {  // reflect at the walls
                o.cy = std::clamp(o.cy, -lim, lim);
                o.vy = -o.vy;
            }
        }
    }
    state_.t += 1;
    state_.contact = false;

    StepInfo info;
    bool fatal = false;
    resolve_collisions(prev_x, prev_y, info, fatal);
    state_.contact = state_.contact || info.collision;

    const bool fall = std::abs(state_.speed) > 5.0 * cfg_.nominal_speed;
    bool done = false;
    if (fall) {
        done = true;
        info.done_reason = "fall";
    } else if (fatal) {
        done = true;
        info.done_reason = "collision";
    } else if (state_.t >= cfg_.horizon) {
        done = true;
        info.done_reason = "horizon";
    }

    std::vector<double> tau(action.size());
    for (size_t i = 0; i < action.size(); ++i) tau[i] = action[i] * d.motor_strength;
    const bool alive = !(fall || fatal);
    StepInfo terms = reward_terms(cfg_, state_.vx(), state_.vy(), tau, alive);
    info.r_fwd = terms.r_fwd;
    info.r_energy = terms.r_energy;
    info.r_alive = terms.r_alive;

    // shift the action history (newest first)
    last_actions_[2] = last_actions_[1];
    last_actions_[1] = last_actions_[0];
    last_actions_[0] = action;

    history_.push_back(snapshot());
    const size_t keep = static_cast<size_t>(lag_ + cfg_.frames + 1);
    while (history_.size() > keep) history_.pop_front();

    StepResult res;
    res.obs = assemble_observation();
    res.info = info;
    res.reward = reward_total(cfg_, info);
    res.done = done;
    terminated_ = done;
    return res;
}

std::vector<double> CorridorEnv::render_depth() const {
    const int H = cfg_.depth_height, W = cfg_.depth_width;
    const double fov_h = cfg_.fov_h_deg * kPi / 180.0;
    const double fov_v = cfg_.fov_v_deg * kPi / 180.0;
    std::vector<double> img(size_t(H) * W, cfg_.max_range);
    for (int i = 0; i < H; ++i) {
        const double elev = fov_v / 2 - fov_v * (i + 0.5) / H;  // top rows look up
        const double ce = std::cos(elev), se = std::sin(elev);
        for (int j = 0; j < W; ++j) {
            const double az = state_.heading - fov_h / 2 + fov_h * (j + 0.5) / W;
            const double dx = std::cos(az), dy = std::sin(az);
            double best = cfg_.max_range;

            // terrain hit for downward rays; a flat featureless ground plane is
            // not rendered, so obstacle-free scenes read max_range everywhere
            if (se < -1e-9 && !state_.height.empty()) {
                double s = cfg_.camera_height / (-se);
                const double hx = state_.x + s * ce * dx, hy = state_.y + s * ce * dy;
                const double ht = terrain_height(hx, hy);
                s = (cfg_.camera_height - ht) / (-se);
                if (s > 0) best = std::min(best, s);
            }

            // axis-aligned box slab test in the horizontal plane
            for (const Obstacle& o : state_.obstacles) {
                double t0 = 0, t1 = best * ce + 1.0;
                bool miss = false;
                const double ox[2] = {o.cx - o.hx, o.cx + o.hx};
                const double oy[2] = {o.cy - o.hy, o.cy + o.hy};
                const double ro[2] = {state_.x, state_.y};
                const double rd[2] = {dx, dy};
                const double lo[2] = {ox[0], oy[0]}, hi[2] = {ox[1], oy[1]};
                for (int k = 0; k < 2; ++k) {
                    if (std::abs(rd[k]) < 1e-12) {
                        if (ro[k] < lo[k] || ro[k] > hi[k]) { miss = true; break; }
                    } else {
                        double a = (lo[k] - ro[k]) / rd[k];
                        double b = (hi[k] - ro[k]) / rd[k];
                        if (a > b) std::swap(a, b);
                        t0 = std::max(t0, a);
                        t1 = std::min(t1, b);
                        if (t0 > t1) { miss = true; break; }
                    }
                }
                if (miss || t0 <= 0) continue;
                const double s = (ce > 1e-9) ? t0 / ce : cfg_.max_range;  // 3D distance
                const double z = cfg_.camera_height + s * se;
                if (z >= 0.0 && z <= cfg_.obstacle_height) best = std::min(best, s);
            }
            img[size_t(i) * W + j] = std::clamp(best, 0.0, cfg_.max_range);
        }
    }
    return img;
}

CorridorEnv::Snapshot CorridorEnv::snapshot() const {
    Snapshot s;
    s.proprio_core = {state_.vx(), state_.vy(), state_.omega,
                      std::sin(state_.heading), std::cos(state_.heading),
                      state_.contact ? 1.0 : 0.0};
    for (const auto& a : last_actions_)
        s.proprio_core.insert(s.proprio_core.end(), a.begin(), a.end());
    s.depth = render_depth();
    return s;
}

Observation<double> CorridorEnv::assemble_observation() const {
    // sensor latency: deliver the snapshot recorded lag_ steps ago
    const int n = static_cast<int>(history_.size());
    const int delivered = std::max(0, n - 1 - lag_);
    Observation<double> obs;
    obs.proprio.assign(static_cast<size_t>(cfg_.proprio_dim), 0.0);
    const auto& core = history_[static_cast<size_t>(delivered)].proprio_core;
    std::copy(core.begin(), core.end(), obs.proprio.begin());
    // stack of 4 delivered frames, oldest first; warm-up repeats the first
    obs.depth_stack.reserve(size_t(cfg_.frames) * cfg_.depth_height * cfg_.depth_width);
    for (int k = cfg_.frames - 1; k >= 0; --k) {
        const int idx = std::max(0, delivered - k);
        const auto& f = history_[static_cast<size_t>(idx)].depth;
        obs.depth_stack.insert(obs.depth_stack.end(), f.begin(), f.end());
    }
    return obs;
}

RunMetrics eval_metrics(const std::vector<EpisodeSummary>& episodes, Scenario scenario) {
    if (episodes.empty()) throw std::invalid_argument("eval_metrics: no episodes");
    RunMetrics m;
    for (const auto& e : episodes) {
        m.mean_return += e.ep_return;
        m.mean_distance += e.distance;
        m.collision_times += e.collision_steps;
    }
    const double n = static_cast<double>(episodes.size());
    m.mean_return /= n;
    m.mean_distance /= n;
    double var = 0;
    for (const auto& e : episodes)
        var += (e.ep_return - m.mean_return) * (e.ep_return - m.mean_return);
    m.std_return = std::sqrt(var / n);
    m.collisions_reported = scenario_has_obstacles(scenario);
    if (!m.collisions_reported) m.collision_times = 0;
    return m;
}

}  // namespace loco
