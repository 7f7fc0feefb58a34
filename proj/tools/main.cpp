// Command-line front end: train / eval / bench / gradcheck / stats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "loco/bench.hpp"
#include "loco/config.hpp"
#include "loco/gradsuite.hpp"
#include "loco/harness.hpp"
#include "loco/stats.hpp"

namespace {

using loco::RunConfig;

void apply_config_file(RunConfig& c, const loco::KeyValueConfig& kv) {
    c.scenario = loco::parse_scenario(kv.get("run.scenario", scenario_name(c.scenario)));
    c.variant = loco::parse_variant(kv.get("run.variant", variant_name(c.variant)));
    c.iterations = kv.get("run.iterations", c.iterations);
    c.samples_per_iter = kv.get("run.samples_per_iter", c.samples_per_iter);
    c.n_envs = kv.get("run.n_envs", c.n_envs);
    c.eval_every = kv.get("run.eval_every", c.eval_every);
    c.eval_repeats = kv.get("run.eval_repeats", c.eval_repeats);
    c.eval_episodes = kv.get("run.eval_episodes", c.eval_episodes);
    c.salt_noise = kv.get("run.salt_noise", c.salt_noise);

    c.env.depth_height = kv.get("env.depth_height", c.env.depth_height);
    c.env.depth_width = kv.get("env.depth_width", c.env.depth_width);
    c.env.proprio_dim = kv.get("env.proprio_dim", c.env.proprio_dim);
    c.env.horizon = kv.get("env.horizon", c.env.horizon);
    c.env.action_dim = kv.get("env.action_dim", c.env.action_dim);
    c.env.arena_length = kv.get("env.arena_length", c.env.arena_length);
    c.env.arena_half_width = kv.get("env.arena_half_width", c.env.arena_half_width);
    c.env.max_obstacles = kv.get("env.max_obstacles", c.env.max_obstacles);
    c.env.obstacle_speed = kv.get("env.obstacle_speed", c.env.obstacle_speed);
    c.env.height_amplitude = kv.get("env.height_amplitude", c.env.height_amplitude);

    c.enc.patch = kv.get("encoder.patch", c.enc.patch);
    c.enc.token_width = kv.get("encoder.token_width", c.enc.token_width);
    c.enc.mlp_hidden = kv.get("encoder.mlp_hidden", c.enc.mlp_hidden);

    c.ssm.state_dim = kv.get("ssm.state_dim", c.ssm.state_dim);
    c.ssm.layers = kv.get("ssm.layers", c.ssm.layers);
    c.ssm.gated_d = kv.get("ssm.gated_d", c.ssm.gated_d);
    c.ssm.head_hidden = kv.get("ssm.head_hidden", c.ssm.head_hidden);
    c.ssm.feature_dim = kv.get("ssm.feature_dim", c.ssm.feature_dim);

    c.attn.heads = kv.get("attention.heads", c.attn.heads);
    c.attn.layers = kv.get("attention.layers", c.attn.layers);
    c.attn.ff_hidden = kv.get("attention.ff_hidden", c.attn.ff_hidden);

    c.policy.hidden = kv.get("policy.hidden", c.policy.hidden);

    c.ppo.gamma = kv.get("ppo.gamma", c.ppo.gamma);
    c.ppo.lam = kv.get("ppo.lambda", c.ppo.lam);
    c.ppo.clip = kv.get("ppo.clip", c.ppo.clip);
    c.ppo.entropy_coef = kv.get("ppo.entropy_coef", c.ppo.entropy_coef);
    c.ppo.value_coef = kv.get("ppo.value_coef", c.ppo.value_coef);
    c.ppo.lr = kv.get("ppo.lr", c.ppo.lr);
    c.ppo.epochs = kv.get("ppo.epochs", c.ppo.epochs);
    c.ppo.minibatch = kv.get("ppo.minibatch", c.ppo.minibatch);

    c.curriculum.start_density = kv.get("curriculum.start_density", c.curriculum.start_density);
    c.curriculum.target_density = kv.get("curriculum.target_density", c.curriculum.target_density);
    c.curriculum.ramp_iters = kv.get("curriculum.ramp_iters", c.curriculum.ramp_iters);

    c.validate_and_sync();
}

std::vector<double> read_csv_column(const std::string& path, const std::string& column) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("stats: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("stats: empty file");
    std::vector<std::string> cols;
    std::stringstream hs(header);
    std::string item;
    while (std::getline(hs, item, ',')) cols.push_back(item);
    int target = -1;
    for (size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == column) target = static_cast<int>(i);
    if (target < 0) throw std::runtime_error("stats: column not found: " + column);
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ls(line);
        int i = 0;
        while (std::getline(ls, item, ',')) {
            if (i == target) values.push_back(std::stod(item));
            ++i;
        }
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"corridor-world locomotion: selective-state-space fusion trained with PPO"};
    app.require_subcommand(1);

    std::string config_path, variant = "ssm-fusion", scenario = "thin", out = "runs/out";
    std::string seed_list = "1";
    bool paper = false, desk = false;
    int iterations = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key/value config file");
        sub->add_option("--variant", variant, "model variant");
        sub->add_option("--scenario", scenario, "thin | rugged | dynamic");
        sub->add_option("--seed", seed_list, "comma-separated seed list");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--paper-config", paper, "64x64 depth, d=128 settings");
        sub->add_flag("--desk", desk, "16x16 reduced settings (default)");
    };

    auto* train_cmd = app.add_subcommand("train", "train a policy");
    add_common(train_cmd);
    train_cmd->add_option("--iters", iterations, "override iteration count");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    std::string checkpoint;
    int episodes = 3;
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--episodes", episodes, "episodes per seed");

    auto* bench_cmd = app.add_subcommand("bench", "scan vs attention scaling benchmark");
    std::string bench_out = "bench.csv";
    int repeats = 7;
    bench_cmd->add_option("--out", bench_out, "benchmark CSV path");
    bench_cmd->add_option("--repeats", repeats, "timing repeats per point");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference verification");
    uint64_t grad_seed = 1;
    grad_cmd->add_option("--seed", grad_seed, "suite seed");

    auto* stats_cmd = app.add_subcommand("stats", "training-curve analytics from a CSV");
    std::string stats_csv, stats_column = "mean_return";
    int cov_window = 200, early_window = 120;
    stats_cmd->add_option("--csv", stats_csv, "input CSV")->required();
    stats_cmd->add_option("--column", stats_column, "column to analyze");
    stats_cmd->add_option("--window", cov_window, "CoV trailing window");
    stats_cmd->add_option("--early-window", early_window, "early-slope window");

    CLI11_PARSE(app, argc, argv);

    try {
        auto make_config = [&]() {
            RunConfig c = loco::desk_config();
            if (paper) loco::apply_paper_scale(c);
            c.variant = loco::parse_variant(variant);
            c.scenario = loco::parse_scenario(scenario);
            if (!config_path.empty()) apply_config_file(c, loco::KeyValueConfig::load(config_path));
            if (iterations > 0) c.iterations = iterations;
            c.validate_and_sync();
            return c;
        };

        if (train_cmd->parsed()) {
            const auto seeds = loco::parse_seed_list(seed_list);
            for (uint64_t seed : seeds) {
                RunConfig c = make_config();
                c.seed = seed;
                c.out_dir = seeds.size() == 1 ? out : out + "/seed" + std::to_string(seed);
                loco::Model m = loco::build_model(c, seed);
                auto res = loco::train(c, m, &std::cout);
                std::cout << "checkpoint: " << res.checkpoint_path << '\n';
            }
        } else if (eval_cmd->parsed()) {
            RunConfig c = make_config();
            loco::Model m = loco::build_model(c, 0);
            loco::load_model(m, checkpoint);
            if (m.cfg.scenario != c.scenario)
                std::cerr << "note: evaluating zero-shot on a scenario the checkpoint was not "
                             "trained on\n";
            std::filesystem::create_directories(out);
            const auto seeds = loco::parse_seed_list(seed_list);
            std::ofstream csv(out + "/eval.csv");
            csv << "seed,scenario,variant,mean_return,std_return,mean_distance,collisions\n";
            for (uint64_t seed : seeds) {
                auto metrics = loco::evaluate_model(m, c.scenario, episodes, seed, nullptr,
                                                    out + "/episodes_seed" + std::to_string(seed) +
                                                        ".csv");
                csv << seed << ',' << scenario_name(c.scenario) << ',' << variant_name(c.variant)
                    << ',' << metrics.mean_return << ',' << metrics.std_return << ','
                    << metrics.mean_distance << ',';
                if (metrics.collisions_reported && !loco::masks_proprio(c.variant))
                    csv << metrics.collision_times;
                else
                    csv << "absent";
                csv << '\n';
                std::cout << "seed " << seed << ": return " << metrics.mean_return << " distance "
                          << metrics.mean_distance << '\n';
            }
        } else if (bench_cmd->parsed()) {
            loco::BenchConfig bc;
            bc.repeats = repeats;
            auto rep = loco::bench_scan(bc);
            loco::write_bench_csv(bench_out, rep);
            std::printf("time slopes: scan_seq=%.3f scan_par=%.3f attention=%.3f\n",
                        rep.slope_scan_seq, rep.slope_scan_par, rep.slope_attention);
            std::printf("memory slopes: scan=%.3f attention=%.3f\n", rep.mem_slope_scan,
                        rep.mem_slope_attention);
        } else if (grad_cmd->parsed()) {
            auto entries = loco::run_gradcheck_suite(grad_seed);
            bool ok = true;
            for (const auto& e : entries) {
                std::printf("%-22s max_rel_err %.3e (tol %.0e) %s  %s\n", e.name.c_str(),
                            e.max_rel_err, e.tol, e.pass ? "PASS" : "FAIL", e.worst.c_str());
                ok = ok && e.pass;
            }
            return ok ? 0 : 1;
        } else if (stats_cmd->parsed()) {
            auto series = read_csv_column(stats_csv, stats_column);
            std::printf("n=%zu\n", series.size());
            if (static_cast<int>(series.size()) >= cov_window) {
                auto cov = loco::stability_cov(series, cov_window);
                if (cov.defined)
                    std::printf("cov[%d]=%.6g\n", cov_window, cov.cov);
                else
                    std::printf("cov[%d]=undefined (near-zero mean)\n", cov_window);
            }
            if (static_cast<int>(series.size()) > early_window) {
                auto eff = loco::efficiency_stats(series, early_window);
                std::printf("final_reward=%.6g early_slope=%.6g learning_efficiency=%.6g "
                            "auc_per_epoch=%.6g\n",
                            eff.final_reward, eff.early_slope, eff.learning_efficiency,
                            eff.auc_per_epoch);
            }
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
