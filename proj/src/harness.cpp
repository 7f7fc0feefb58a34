#include "loco/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "loco/checkpoint.hpp"

namespace loco {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

uint64_t episode_seed(uint64_t run_seed, int env_idx, int episode_idx) {
    uint64_t s = run_seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(env_idx + 1));
    s += 0x100000001b3ULL * uint64_t(episode_idx + 1);
    return s;
}

}  // namespace

Variant parse_variant(const std::string& name) {
    if (name == "proprio-only") return Variant::ProprioOnly;
    if (name == "vision-only-ssm") return Variant::VisionOnlySsm;
    if (name == "vision-only-attn") return Variant::VisionOnlyAttn;
    if (name == "concat") return Variant::Concat;
    if (name == "ssm-fusion") return Variant::SsmFusion;
    if (name == "attn-fusion") return Variant::AttnFusion;
    throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ProprioOnly: return "proprio-only";
        case Variant::VisionOnlySsm: return "vision-only-ssm";
        case Variant::VisionOnlyAttn: return "vision-only-attn";
        case Variant::Concat: return "concat";
        case Variant::SsmFusion: return "ssm-fusion";
        case Variant::AttnFusion: return "attn-fusion";
    }
    throw std::logic_error("bad variant");
}

FusionBackend backend_of(Variant v) {
    switch (v) {
        case Variant::VisionOnlyAttn:
        case Variant::AttnFusion: return FusionBackend::Attn;
        case Variant::Concat: return FusionBackend::Concat;
        default: return FusionBackend::Ssm;
    }
}

bool masks_proprio(Variant v) {
    return v == Variant::VisionOnlySsm || v == Variant::VisionOnlyAttn;
}

bool masks_depth(Variant v) { return v == Variant::ProprioOnly; }

void RunConfig::validate_and_sync() {
    enc.proprio_dim = env.proprio_dim;
    enc.frames = env.frames;
    enc.height = env.depth_height;
    enc.width = env.depth_width;
    enc.max_range = env.max_range;
    ssm.token_width = enc.token_width;
    attn.token_width = enc.token_width;
    attn.ff_hidden = std::max(attn.ff_hidden, 1);
    policy.feature_dim = ssm.feature_dim;
    policy.action_dim = env.action_dim;
    enc.n_visual();  // throws when patch does not divide H/W
    if (enc.token_width % attn.heads != 0)
        throw std::invalid_argument("run config: attention heads must divide token width");
    if (iterations <= 0 || samples_per_iter <= 0 || n_envs <= 0)
        throw std::invalid_argument("run config: iterations/samples/envs must be positive");
    if (eval_repeats <= 0 || eval_episodes <= 0)
        throw std::invalid_argument("run config: eval settings must be positive");
}

RunConfig desk_config() {
    RunConfig c;
    c.env.depth_height = 16;
    c.env.depth_width = 16;
    c.env.proprio_dim = 16;
    c.env.horizon = 200;
    c.env.arena_length = 12.0;  // short course: obstacles reachable inside the desk horizon
    c.enc.patch = 4;
    c.enc.token_width = 32;
    c.enc.mlp_hidden = 64;
    c.ssm.state_dim = 8;
    c.ssm.layers = 2;
    c.ssm.head_hidden = 64;
    c.ssm.feature_dim = 64;
    c.attn.heads = 2;
    c.attn.layers = 2;
    c.attn.ff_hidden = 64;
    c.policy.hidden = 64;
    c.ppo.minibatch = 128;
    c.ppo.lr = 1e-3;  // reduced-scale setting; full-scale uses 2e-4
    c.curriculum.start_density = 0.1;
    c.curriculum.target_density = 1.0;
    c.curriculum.ramp_iters = 150;
    c.validate_and_sync();
    return c;
}

void apply_paper_scale(RunConfig& c) {
    c.env.depth_height = 64;
    c.env.depth_width = 64;
    c.env.proprio_dim = 93;
    c.env.horizon = 999;
    c.env.arena_length = 40.0;
    c.enc.patch = 8;
    c.enc.token_width = 128;
    c.enc.mlp_hidden = 256;
    c.ssm.state_dim = 8;
    c.ssm.layers = 2;
    c.ssm.head_hidden = 256;
    c.ssm.feature_dim = 256;
    c.attn.ff_hidden = 256;
    c.policy.hidden = 256;
    c.ppo.minibatch = 1024;
    c.ppo.lr = 2e-4;
    c.samples_per_iter = 16384;
    c.eval_repeats = 10;
    c.validate_and_sync();
}

Model build_model(const RunConfig& cfg, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.cfg.validate_and_sync();
    std::mt19937_64 rng(seed);
    m.enc = init_encoder<HReal>(m.cfg.enc, rng);
    m.ssm = init_backbone<HReal>(m.cfg.ssm, rng);
    m.attn = init_attn<HReal>(m.cfg.attn, rng);
    m.policy = init_policy<HReal>(m.cfg.policy, rng);
    return m;
}

std::vector<TensorT<HReal>> Model::trainable() const {
    std::vector<TensorT<HReal>> v = enc.all();
    const FusionBackend b = backend_of(cfg.variant);
    if (b == FusionBackend::Ssm) {
        auto s = ssm.all();
        v.insert(v.end(), s.begin(), s.end());
    } else {
        if (b == FusionBackend::Attn) {
            auto a = attn.all();
            v.insert(v.end(), a.begin(), a.end());
        }
        // pooling/projection head is shared with the SSM backbone structure
        v.insert(v.end(), {ssm.head_w1, ssm.head_b1, ssm.head_w2, ssm.head_b2});
    }
    auto p = policy.all();
    v.insert(v.end(), p.begin(), p.end());
    return v;
}

std::vector<std::string> Model::trainable_names() const {
    std::vector<std::string> v = enc.names();
    const FusionBackend b = backend_of(cfg.variant);
    if (b == FusionBackend::Ssm) {
        auto s = ssm.names();
        v.insert(v.end(), s.begin(), s.end());
    } else {
        if (b == FusionBackend::Attn) {
            auto a = attn.names();
            v.insert(v.end(), a.begin(), a.end());
        }
        v.insert(v.end(), {"head.w1", "head.b1", "head.w2", "head.b2"});
    }
    auto p = policy.names();
    v.insert(v.end(), p.begin(), p.end());
    return v;
}

Observation<HReal> convert_observation(const Observation<double>& obs, Variant v) {
    Observation<HReal> out;
    out.proprio.resize(obs.proprio.size());
    out.depth_stack.resize(obs.depth_stack.size());
    const bool zp = masks_proprio(v), zd = masks_depth(v);
    for (size_t i = 0; i < obs.proprio.size(); ++i)
        out.proprio[i] = zp ? HReal(0) : HReal(obs.proprio[i]);
    for (size_t i = 0; i < obs.depth_stack.size(); ++i)
        out.depth_stack[i] = zd ? HReal(0) : HReal(obs.depth_stack[i]);
    return out;
}

TensorT<HReal> model_features(TapeT<HReal>* tape, const Model& m,
                              const std::vector<Observation<HReal>>& obs,
                              const std::vector<const CarriedState<HReal>*>& carried,
                              std::vector<CarriedState<HReal>>* new_states) {
    const int s_count = static_cast<int>(obs.size());
    TensorT<HReal> tokens = encode_observations(tape, obs, m.enc, m.cfg.enc);
    switch (backend_of(m.cfg.variant)) {
        case FusionBackend::Ssm: {
            if (carried.empty()) {
                std::vector<CarriedState<HReal>> zeros(
                    static_cast<size_t>(s_count), CarriedState<HReal>::zero(m.cfg.ssm));
                std::vector<const CarriedState<HReal>*> ptrs;
                for (const auto& z : zeros) ptrs.push_back(&z);
                return backbone_forward(tape, tokens, m.ssm, s_count, ptrs, new_states);
            }
            return backbone_forward(tape, tokens, m.ssm, s_count, carried, new_states);
        }
        case FusionBackend::Attn:
            return attention_fusion_forward(tape, tokens, m.attn, m.ssm, s_count);
        case FusionBackend::Concat: {
            TensorT<HReal> pooled = pool_tokens(tape, tokens, s_count, m.cfg.enc.n_tokens());
            return projection_head(tape, pooled, m.ssm);
        }
    }
    throw std::logic_error("bad backend");
}

void save_model(const Model& m, const std::string& path) {
    Checkpoint<HReal> ck;
    const auto params = m.trainable();
    const auto names = m.trainable_names();
    for (size_t i = 0; i < params.size(); ++i) ck.params.emplace_back(names[i], params[i]);
    ck.meta["variant"] = variant_name(m.cfg.variant);
    ck.meta["scenario"] = scenario_name(m.cfg.scenario);
    save_checkpoint(path, ck);
}

void load_model(Model& m, const std::string& path) {
    Checkpoint<HReal> ck = load_checkpoint<HReal>(path);
    auto params = m.trainable();
    auto names = m.trainable_names();
    if (ck.params.size() != params.size())
        throw std::runtime_error("load_model: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (ck.params[i].first != names[i])
            throw std::runtime_error("load_model: parameter name mismatch at " + names[i]);
        if (ck.params[i].second.shape != params[i].shape)
            throw std::runtime_error("load_model: shape mismatch for " + names[i]);
        *params[i].data = *ck.params[i].second.data;
    }
}

// ---------------------------------------------------------------------------
// rollout collection and training

namespace {

struct Transition {
    Observation<HReal> obs;
    std::vector<HReal> carried;  // empty for non-SSM backends
    std::vector<HReal> a_tilde;
    HReal logp = 0;
    double value = 0;
    double reward = 0;
    bool terminal = false;
};

struct EnvStream {
    CorridorEnv env;
    Observation<HReal> cur_obs;
    CarriedState<HReal> carried;
    std::vector<Transition> traj;
    double ep_return = 0;
    int episodes_started = 0;

    explicit EnvStream(const EnvConfig& ec, Scenario s)
        : env(ec, s), carried{CarriedState<HReal>{}} {}
};

void apply_salt(Observation<HReal>& obs, const EncoderConfig& enc, std::mt19937_64& rng) {
    // perturb the newest frame only; older frames were salted when current
    const int hw = enc.height * enc.width;
    std::vector<HReal> frame(obs.depth_stack.end() - hw, obs.depth_stack.end());
    perturb_depth(frame, enc.height, enc.width, HReal(enc.max_range), rng);
    std::copy(frame.begin(), frame.end(), obs.depth_stack.end() - hw);
}

}  // namespace

TrainResult train(const RunConfig& cfg_in, Model& model, std::ostream* log) {
    RunConfig cfg = cfg_in;
    cfg.validate_and_sync();
    model.cfg.validate_and_sync();
    const bool use_carry = backend_of(cfg.variant) == FusionBackend::Ssm;

    std::filesystem::create_directories(cfg.out_dir);
    TrainResult result;
    result.train_csv_path = cfg.out_dir + "/train_stats.csv";
    result.eval_csv_path = cfg.out_dir + "/eval_stats.csv";
    result.checkpoint_path = cfg.out_dir + "/model.ckpt";
    std::ofstream train_csv(result.train_csv_path);
    std::ofstream eval_csv(result.eval_csv_path);
    if (!train_csv || !eval_csv)
        throw std::runtime_error("train: cannot write logs in " + cfg.out_dir);
    train_csv << "iter,density,samples,episodes,mean_return,loss_clip,loss_value,entropy,"
                 "approx_kl,clip_frac,grad_norm,mean_abs_adv\n";
    eval_csv << "iter,scenario,variant,mean_return,std_return,mean_distance,collisions\n";

    std::mt19937_64 act_rng(cfg.seed + 1);
    std::mt19937_64 shuffle_rng(cfg.seed + 2);
    std::mt19937_64 noise_rng(cfg.seed + 3);

    auto params = model.trainable();
    AdamT<HReal> opt(params, HReal(cfg.ppo.lr));

    std::vector<EnvStream> streams;
    streams.reserve(static_cast<size_t>(cfg.n_envs));
    for (int e = 0; e < cfg.n_envs; ++e) streams.emplace_back(cfg.env, cfg.scenario);

    auto reset_stream = [&](EnvStream& st, int env_idx, double density) {
        auto obs = st.env.reset(density, episode_seed(cfg.seed, env_idx, st.episodes_started));
        st.episodes_started += 1;
        st.cur_obs = convert_observation(obs, cfg.variant);
        if (cfg.salt_noise) apply_salt(st.cur_obs, cfg.enc, noise_rng);
        st.carried = CarriedState<HReal>::zero(cfg.ssm);
        st.ep_return = 0;
    };

    double last_mean_return = 0;
    const bool collisions_informative =
        scenario_has_obstacles(cfg.scenario) && !masks_proprio(cfg.variant);

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double density = curriculum_density(cfg.curriculum, iter);
        if (iter == 0)
            for (int e = 0; e < cfg.n_envs; ++e) reset_stream(streams[size_t(e)], e, density);

        for (auto& st : streams) st.traj.clear();
        std::vector<double> completed_returns;

        int samples = 0;
        while (samples < cfg.samples_per_iter) {
            std::vector<Observation<HReal>> batch;
            std::vector<const CarriedState<HReal>*> carried;
            for (auto& st : streams) {
                batch.push_back(st.cur_obs);
                carried.push_back(&st.carried);
            }
            std::vector<CarriedState<HReal>> new_states;
            TensorT<HReal> h =
                model_features(nullptr, model, batch, use_carry ? carried
                                                               : std::vector<const CarriedState<HReal>*>{},
                               use_carry ? &new_states : nullptr);
            TensorT<HReal> values = critic_forward<HReal>(nullptr, h, model.policy);
            auto actions = act(h, model.policy, cfg.policy, act_rng, false);

            for (int e = 0; e < cfg.n_envs; ++e) {
                EnvStream& st = streams[size_t(e)];
                Transition tr;
                tr.obs = st.cur_obs;
                if (use_carry) tr.carried = st.carried.x;
                tr.a_tilde = actions[size_t(e)].a_tilde;
                tr.logp = actions[size_t(e)].logp;
                tr.value = double(values[e]);

                std::vector<double> a(actions[size_t(e)].a.begin(), actions[size_t(e)].a.end());
                StepResult res = st.env.step(a);
                tr.reward = res.reward;
                tr.terminal = res.done;
                st.ep_return += res.reward;
                st.traj.push_back(std::move(tr));
                samples += 1;

                if (res.done) {
                    completed_returns.push_back(st.ep_return);
                    reset_stream(st, e, density);
                } else {
                    st.cur_obs = convert_observation(res.obs, cfg.variant);
                    if (cfg.salt_noise) apply_salt(st.cur_obs, cfg.enc, noise_rng);
                    if (use_carry) st.carried = new_states[size_t(e)];
                }
            }
        }

        // bootstrap values for truncated streams under the (unchanged) current parameters
        std::vector<Observation<HReal>> boot_obs;
        std::vector<const CarriedState<HReal>*> boot_carried;
        for (auto& st : streams) {
            boot_obs.push_back(st.cur_obs);
            boot_carried.push_back(&st.carried);
        }
        TensorT<HReal> boot_h = model_features(
            nullptr, model, boot_obs,
            use_carry ? boot_carried : std::vector<const CarriedState<HReal>*>{}, nullptr);
        TensorT<HReal> boot_v = critic_forward<HReal>(nullptr, boot_h, model.policy);

        // per-stream GAE, then flatten
        RolloutBatch<HReal> batch;
        batch.action_dim = cfg.env.action_dim;
        std::vector<Observation<HReal>> all_obs;
        std::vector<std::vector<HReal>> all_carried;
        double abs_adv = 0;
        for (int e = 0; e < cfg.n_envs; ++e) {
            EnvStream& st = streams[size_t(e)];
            std::vector<double> rewards, values;
            std::vector<char> dones;
            for (const auto& tr : st.traj) {
                rewards.push_back(tr.reward);
                values.push_back(tr.value);
                dones.push_back(tr.terminal ? 1 : 0);
            }
            GaeResult gae = compute_gae(rewards, values, dones, double(boot_v[e]), cfg.ppo.gamma,
                                        cfg.ppo.lam);
            for (size_t i = 0; i < st.traj.size(); ++i) {
                Transition& tr = st.traj[i];
                all_obs.push_back(std::move(tr.obs));
                all_carried.push_back(std::move(tr.carried));
                batch.a_tilde.insert(batch.a_tilde.end(), tr.a_tilde.begin(), tr.a_tilde.end());
                batch.logp_old.push_back(tr.logp);
                batch.adv.push_back(gae.advantages[i]);
                batch.returns.push_back(gae.returns[i]);
                abs_adv += std::abs(gae.advantages[i]);
            }
        }
        abs_adv /= double(batch.size());

        auto features = [&](TapeT<HReal>* tape, const std::vector<int>& idx) {
            std::vector<Observation<HReal>> obs;
            std::vector<const CarriedState<HReal>*> carried;
            std::vector<CarriedState<HReal>> states(idx.size());
            for (size_t r = 0; r < idx.size(); ++r) {
                obs.push_back(all_obs[static_cast<size_t>(idx[r])]);
                if (use_carry) {
                    states[r].x = all_carried[static_cast<size_t>(idx[r])];
                    carried.push_back(&states[r]);
                }
            }
            return model_features(tape, model, obs, carried, nullptr);
        };

        UpdateStats stats;
        try {
            stats = ppo_update(features, batch, model.policy, opt, cfg.ppo, shuffle_rng);
        } catch (const std::exception& ex) {
            std::ofstream dump(cfg.out_dir + "/nan_abort.txt");
            dump << "iteration " << iter << ": " << ex.what() << '\n';
            throw;
        }

        if (!completed_returns.empty())
            last_mean_return =
                std::accumulate(completed_returns.begin(), completed_returns.end(), 0.0) /
                double(completed_returns.size());
        result.mean_return_series.push_back(last_mean_return);
        result.value_loss_series.push_back(stats.loss_value);
        result.advantage_series.push_back(abs_adv);

        train_csv << iter << ',' << fmt(density) << ',' << batch.size() << ','
                  << completed_returns.size() << ',' << fmt(last_mean_return) << ','
                  << fmt(stats.loss_clip) << ',' << fmt(stats.loss_value) << ','
                  << fmt(stats.entropy) << ',' << fmt(stats.approx_kl) << ','
                  << fmt(stats.clip_frac) << ',' << fmt(stats.grad_norm) << ',' << fmt(abs_adv)
                  << '\n';
        if (log)
            (*log) << "iter " << iter << " return " << fmt(last_mean_return) << " vloss "
                   << fmt(stats.loss_value) << " kl " << fmt(stats.approx_kl) << '\n';

        if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations)) {
            std::vector<double> seg_returns, seg_dist;
            int collisions = 0;
            for (int r = 0; r < cfg.eval_repeats; ++r) {
                RunMetrics m = evaluate_model(model, cfg.scenario, cfg.eval_episodes,
                                              cfg.seed + 9000 + uint64_t(r) * 131, nullptr, "");
                seg_returns.push_back(m.mean_return);
                seg_dist.push_back(m.mean_distance);
                collisions += m.collision_times;
            }
            const double n = double(seg_returns.size());
            const double mr = std::accumulate(seg_returns.begin(), seg_returns.end(), 0.0) / n;
            double var = 0;
            for (double v : seg_returns) var += (v - mr) * (v - mr);
            const double md = std::accumulate(seg_dist.begin(), seg_dist.end(), 0.0) / n;
            eval_csv << iter << ',' << scenario_name(cfg.scenario) << ','
                     << variant_name(cfg.variant) << ',' << fmt(mr) << ',' << fmt(std::sqrt(var / n))
                     << ',' << fmt(md) << ',';
            if (collisions_informative)
                eval_csv << collisions;
            else
                eval_csv << "absent";
            eval_csv << '\n';
        }
    }

    save_model(model, result.checkpoint_path);
    return result;
}

RunMetrics evaluate_model(const Model& m, Scenario scenario, int episodes, uint64_t seed,
                          std::vector<EpisodeSummary>* out_episodes,
                          const std::string& step_log_path) {
    if (episodes <= 0) throw std::invalid_argument("evaluate_model: need at least one episode");
    const RunConfig& cfg = m.cfg;
    std::ofstream step_log;
    if (!step_log_path.empty()) {
        step_log.open(step_log_path);
        if (!step_log) throw std::runtime_error("evaluate_model: cannot open " + step_log_path);
        step_log << "episode,t,x,y,heading,r_fwd,r_energy,r_alive,collision,done_reason\n";
    }

    const bool use_carry = backend_of(cfg.variant) == FusionBackend::Ssm;
    std::mt19937_64 dummy_rng(0);  // deterministic policy ignores it
    std::vector<EpisodeSummary> eps;
    CorridorEnv env(cfg.env, scenario);
    for (int ep = 0; ep < episodes; ++ep) {
        Observation<double> obs_d = env.reset(cfg.curriculum.target_density, seed + uint64_t(ep));
        CarriedState<HReal> carried = CarriedState<HReal>::zero(cfg.ssm);
        const double x0 = env.world().x;
        EpisodeSummary summary;
        bool done = false;
        while (!done) {
            std::vector<Observation<HReal>> batch = {convert_observation(obs_d, cfg.variant)};
            std::vector<const CarriedState<HReal>*> cptr = {&carried};
            std::vector<CarriedState<HReal>> new_states;
            TensorT<HReal> h = model_features(
                nullptr, m, batch,
                use_carry ? cptr : std::vector<const CarriedState<HReal>*>{},
                use_carry ? &new_states : nullptr);
            auto actions = act(h, m.policy, cfg.policy, dummy_rng, true);
            std::vector<double> a(actions[0].a.begin(), actions[0].a.end());
            StepResult res = env.step(a);
            summary.ep_return += res.reward;
            summary.length += 1;
            if (res.info.collision) summary.collision_steps += 1;
            if (step_log)
                step_log << ep << ',' << summary.length << ',' << fmt(env.world().x) << ','
                         << fmt(env.world().y) << ',' << fmt(env.world().heading) << ','
                         << fmt(res.info.r_fwd) << ',' << fmt(res.info.r_energy) << ','
                         << fmt(res.info.r_alive) << ',' << (res.info.collision ? 1 : 0) << ','
                         << res.info.done_reason << '\n';
            done = res.done;
            if (!done) {
                obs_d = res.obs;
                if (use_carry) carried = new_states[0];
            } else {
                summary.done_reason = res.info.done_reason;
            }
        }
        summary.distance = env.world().x - x0;
        eps.push_back(summary);
    }
    if (out_episodes) *out_episodes = eps;
    return eval_metrics(eps, scenario);
}

double random_policy_return(const RunConfig& cfg, Scenario scenario, int episodes, uint64_t seed) {
    if (episodes <= 0) throw std::invalid_argument("random_policy_return: need episodes");
    CorridorEnv env(cfg.env, scenario);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    double total = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        env.reset(cfg.curriculum.target_density, seed + uint64_t(ep));
        bool done = false;
        while (!done) {
            std::vector<double> a(static_cast<size_t>(cfg.env.action_dim));
            for (auto& v : a) v = u(rng);
            StepResult res = env.step(a);
            total += res.reward;
            done = res.done;
        }
    }
    return total / episodes;
}

}  // namespace loco
