#pragma once

// Kinematic corridor world: a unicycle-style agent driving down a long arena
// with thin box obstacles, an optional rugged height field, and optionally
// moving obstacles. Reproduces the observation / reward / termination
// structure of the locomotion task without rigid-body physics.

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "loco/encoders.hpp"  // Observation

namespace loco {

enum class Scenario { Thin, Rugged, Dynamic };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);
inline bool scenario_has_obstacles(Scenario s) { return s != Scenario::Rugged; }

struct EnvConfig {
    int action_dim = 3;  // forward drive, turn, brake; extra dims only enter the energy term
    int proprio_dim = 93;
    int frames = 4;
    int depth_height = 16;
    int depth_width = 16;
    double fov_h_deg = 90.0;
    double fov_v_deg = 60.0;
    double max_range = 5.0;
    double dt = 0.02;
    int horizon = 999;

    double arena_length = 40.0;
    double arena_half_width = 4.0;
    int max_obstacles = 12;          // obstacle count at curriculum density 1
    double obstacle_speed = 0.5;     // dynamic scenario lateral speed bound
    double height_amplitude = 0.05;  // rugged scenario, meters
    double nominal_speed = 1.0;
    double agent_radius = 0.2;
    double camera_height = 0.5;
    double obstacle_height = 1.5;

    double alpha_fwd = 1.0;
    double alpha_energy = 0.005;
    double alpha_alive = 0.1;

    int proprio_used() const { return 6 + 3 * action_dim; }
};

struct RandomizationDraw {
    double action_gain = 65.0;       // K_P analogue, [40, 90]
    double damping = 0.6;            // K_D analogue, [0.4, 0.8]
    double inertia_scale = 1.0;      // [0.5, 1.5]
    double friction = 0.875;         // velocity-decay analogue of lateral friction, [0.5, 1.25]
    double mass_scale = 1.0;         // [0.8, 1.2]
    double motor_friction = 0.025;   // [0, 0.05]
    double motor_strength = 1.0;     // [0.8, 1.2]
    double sensor_latency = 0.02;    // seconds, [0, 0.04]
};

RandomizationDraw sample_randomization(std::mt19937_64& rng);

struct CurriculumSchedule {
    double start_density = 0.0;
    double target_density = 1.0;
    int ramp_iters = 100;
};

double curriculum_density(const CurriculumSchedule& s, int iter);

struct Obstacle {
    double cx = 0, cy = 0;  // center
    double hx = 0, hy = 0;  // half extents
    double vx = 0, vy = 0;  // velocity (dynamic scenario only)
};

struct WorldState {
    double x = 0, y = 0, heading = 0;
    double speed = 0;  // forward speed along heading
    double omega = 0;  // angular velocity
    std::vector<Obstacle> obstacles;
    std::vector<double> height;  // rugged grid, row-major height_cells x width_cells
    int height_rows = 0, height_cols = 0;
    int t = 0;
    bool contact = false;

    // planar velocity vector v_t
    double vx() const;
    double vy() const;
};

struct StepInfo {
    double r_fwd = 0, r_energy = 0, r_alive = 0;
    bool collision = false;
    std::string done_reason;  // empty | "horizon" | "fall" | "collision"
};

struct StepResult {
    Observation<double> obs;
    double reward = 0;
    bool done = false;
    StepInfo info;
};

// Eq.-level reward recomposition, exposed so tests can oracle it directly.
double reward_total(const EnvConfig& cfg, const StepInfo& info);
StepInfo reward_terms(const EnvConfig& cfg, double vx, double vy,
                      const std::vector<double>& tau, bool alive);

class CorridorEnv {
 public:
    CorridorEnv(EnvConfig cfg, Scenario scenario);

    Observation<double> reset(double density, uint64_t seed);
    StepResult step(const std::vector<double>& action);

    std::vector<double> render_depth() const;  // H*W, current true state

    const WorldState& world() const { return state_; }
    WorldState& world() { return state_; }  // tests pose the agent directly
    const RandomizationDraw& draw() const { return draw_; }
    void set_draw(const RandomizationDraw& d);  // tests pin latency etc.
    const EnvConfig& config() const { return cfg_; }
    Scenario scenario() const { return scenario_; }
    int latency_steps() const { return lag_; }

 private:
    struct Snapshot {
        std::vector<double> proprio_core;  // unpadded
        std::vector<double> depth;         // one frame
    };

    Snapshot snapshot() const;
    Observation<double> assemble_observation() const;
    double terrain_height(double x, double y) const;
    double terrain_factor() const;
    void resolve_collisions(double prev_x, double prev_y, StepInfo& info, bool& fatal);

    EnvConfig cfg_;
    Scenario scenario_;
    WorldState state_;
    RandomizationDraw draw_;
    std::mt19937_64 rng_;
    int lag_ = 0;
    std::deque<Snapshot> history_;            // most recent last
    std::vector<std::vector<double>> last_actions_;  // newest first, size 3
    bool terminated_ = false;
};

struct EpisodeSummary {
    double ep_return = 0;
    double distance = 0;  // displacement along e_x
    int collision_steps = 0;
    int length = 0;
    std::string done_reason;
};

struct RunMetrics {
    double mean_return = 0;
    double std_return = 0;
    double mean_distance = 0;
    int collision_times = 0;     // summed colliding control steps
    bool collisions_reported = false;  // only for obstacle-bearing scenarios
};

RunMetrics eval_metrics(const std::vector<EpisodeSummary>& episodes, Scenario scenario);

}  // namespace loco
