#pragma once

// End-to-end training orchestration: curriculum-driven rollout collection
// across parallel environments, PPO updates through the selected fusion
// variant, periodic deterministic evaluation, CSV logging, checkpoints.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "loco/attention.hpp"
#include "loco/encoders.hpp"
#include "loco/envsim.hpp"
#include "loco/policy.hpp"
#include "loco/ppo.hpp"
#include "loco/ssm.hpp"

namespace loco {

// training precision; verification suites run the same graph in double
using HReal = float;

enum class Variant {
    ProprioOnly,
    VisionOnlySsm,
    VisionOnlyAttn,
    Concat,
    SsmFusion,
    AttnFusion,
};

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

enum class FusionBackend { Ssm, Attn, Concat };
FusionBackend backend_of(Variant v);
bool masks_proprio(Variant v);  // vision-only variants
bool masks_depth(Variant v);    // proprio-only variant

struct RunConfig {
    Variant variant = Variant::SsmFusion;
    Scenario scenario = Scenario::Thin;
    EnvConfig env;
    EncoderConfig enc;
    SsmConfig ssm;
    AttnConfig attn;
    PolicyConfig policy;
    PpoConfig ppo;
    CurriculumSchedule curriculum;

    int iterations = 200;
    int samples_per_iter = 512;
    int n_envs = 8;
    uint64_t seed = 1;
    int eval_every = 50;       // 0 disables periodic evaluation
    int eval_repeats = 3;      // evaluation segments, mean and std over these
    int eval_episodes = 3;     // episodes per segment
    bool salt_noise = true;
    std::string out_dir = "runs/out";

    void validate_and_sync();  // aligns encoder/env/policy dimensions, throws on conflict
};

RunConfig desk_config();                // 16x16 depth, narrow nets
void apply_paper_scale(RunConfig& c);   // 64x64 depth, d=128, full PPO batch sizes

struct Model {
    RunConfig cfg;
    EncoderParams<HReal> enc;
    BackboneParams<HReal> ssm;
    AttnParams<HReal> attn;
    PolicyParams<HReal> policy;

    std::vector<TensorT<HReal>> trainable() const;
    std::vector<std::string> trainable_names() const;
};

Model build_model(const RunConfig& cfg, uint64_t seed);

// Observation conversion with per-variant input masking.
Observation<HReal> convert_observation(const Observation<double>& obs, Variant v);

// Fused feature rows for a batch of (already converted) observations.
// `carried` is consumed only by the SSM backend and may be empty otherwise.
TensorT<HReal> model_features(TapeT<HReal>* tape, const Model& m,
                              const std::vector<Observation<HReal>>& obs,
                              const std::vector<const CarriedState<HReal>*>& carried,
                              std::vector<CarriedState<HReal>>* new_states = nullptr);

struct TrainResult {
    std::vector<double> mean_return_series;  // one entry per iteration
    std::vector<double> value_loss_series;
    std::vector<double> advantage_series;    // mean |advantage| before normalization
    std::string checkpoint_path;
    std::string train_csv_path;
    std::string eval_csv_path;
};

TrainResult train(const RunConfig& cfg, Model& model, std::ostream* log = nullptr);

// Deterministic-policy evaluation (a = a_max tanh(mu)).
RunMetrics evaluate_model(const Model& m, Scenario scenario, int episodes, uint64_t seed,
                          std::vector<EpisodeSummary>* out_episodes = nullptr,
                          const std::string& step_log_path = "");

double random_policy_return(const RunConfig& cfg, Scenario scenario, int episodes, uint64_t seed);

void save_model(const Model& m, const std::string& path);
void load_model(Model& m, const std::string& path);  // m built from a matching config

}  // namespace loco
