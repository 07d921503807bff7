#pragma once

// Flat key = value experiment configuration. Parsing rejects unknown keys;
// the canonical text form (fixed key order, full-precision doubles) feeds
// both the resolved-config file and the checkpoint hash.

#include <cstdint>
#include <string>

#include "lpln/planner.hpp"

namespace lpln::agentloop {

struct TrainConfig {
    std::string env = "pointmass";
    std::string mode = "dreamer";
    std::string run_dir = "runs/default";
    std::uint64_t seed = 0;

    long total_env_steps = 50000;  // inner physics steps
    int seed_episodes = 5;
    int train_every = 200;  // env steps per train iteration
    int batch_size = 32;
    int seq_length = 32;
    int model_updates = 100;
    int behavior_updates = 100;
    int episode_length = 200;
    int action_repeat = 2;
    long buffer_capacity = 0;  // steps, 0 = unbounded
    int checkpoint_every = 0;  // episodes, 0 = final checkpoint only
    int eval_episodes = 10;

    int model_deter = 64;
    int model_stoch = 16;
    int model_hidden = 64;
    int model_embed = 64;
    double model_lr = 6e-4;
    double beta = 1.0;
    double grad_clip = 100.0;

    int imagination_horizon = 15;
    double gamma = 0.99;
    double lambda = 0.95;
    double actor_lr = 8e-5;
    double critic_lr = 8e-5;

    int simulations = 50;
    int proposal_candidates = 100;
    int uniform_candidates = 50;
    int rollout_depth = 10;
    int fixed_children = 20;
    double c1 = 1.25;
    double c2 = 19652.0;
    double c_pw = 1.0;
    double alpha = 0.5;
    double noise_std = 0.3;
};

// Parse "key = value" lines ('#' comments, blank lines allowed). Unknown
// keys and malformed values throw; the result is validated.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);

// Canonical serialization: every key once, declaration order, %.17g doubles.
std::string config_to_text(const TrainConfig& cfg);

// FNV-1a over the canonical text.
std::uint64_t config_hash(const TrainConfig& cfg);

void validate(const TrainConfig& cfg);  // throws on any bad field

planner::PlannerConfig planner_config(const TrainConfig& cfg);

std::uint64_t fnv1a(const std::string& s);

}  // namespace lpln::agentloop
