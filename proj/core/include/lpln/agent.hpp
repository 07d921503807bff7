#pragma once

// The experiment loop: collect with decision-time planning, sample replay,
// optimize the model, optimize the behavior. Everything is sequential and
// every random draw comes from a named child stream of the master seed, so
// a run is a pure function of its config.

#include <memory>
#include <string>
#include <vector>

#include "lpln/behavior.hpp"
#include "lpln/config.hpp"
#include "lpln/envs.hpp"
#include "lpln/planner.hpp"
#include "lpln/replay.hpp"
#include "lpln/rng.hpp"
#include "lpln/worldmodel.hpp"

namespace lpln::agentloop {

// One stream per consumer; adding a consumer never perturbs the others.
struct RunStreams {
    RngStream env, belief, plan, explore, replay, model, behavior;

    explicit RunStreams(std::uint64_t seed, const std::string& prefix = "")
        : env(RngStream(seed).child(prefix + "env")),
          belief(RngStream(seed).child(prefix + "belief")),
          plan(RngStream(seed).child(prefix + "planner")),
          explore(RngStream(seed).child(prefix + "explore")),
          replay(RngStream(seed).child(prefix + "replay")),
          model(RngStream(seed).child(prefix + "model-train")),
          behavior(RngStream(seed).child(prefix + "behavior-train")) {}
};

enum class UpdateKind { model, behavior };

struct CollectResult {
    double episode_return = 0.0;
    double plan_time_ms = 0.0;  // mean milliseconds per decision
    long env_steps = 0;         // inner physics steps consumed
    int decisions = 0;
};

struct IterationStats {
    double j_o = 0.0;  // means over this iteration's updates
    double j_r = 0.0;
    double kl = 0.0;
    double actor_objective = 0.0;
    double critic_loss = 0.0;
    int model_updates = 0;
    int behavior_updates = 0;
};

class Agent {
public:
    explicit Agent(const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    const envs::EnvSpec& env_spec() const { return env_spec_; }
    worldmodel::WorldModel& model() { return *model_; }
    behavior::Behavior& behavior() { return *behavior_; }
    ReplayBuffer& buffer() { return buffer_; }
    planner::PlannerConfig& planner_config() { return pcfg_; }
    const std::vector<UpdateKind>& update_log() const { return update_log_; }

    // One planner-driven episode. train applies exploration noise to every
    // executed action and stores the episode; evaluation plans noise-free.
    CollectResult collect_episode(bool train, RunStreams& streams,
                                  std::vector<Array>* actions_out = nullptr);

    // Uniform-random actions, episode stored; seeds the buffer.
    CollectResult collect_random_episode(RunStreams& streams);

    // model_updates batches of train_model_batch, then behavior_updates
    // imagination train steps from the posterior states of fresh replay
    // samples. The model never changes during the behavior block.
    IterationStats train_iteration(RunStreams& streams);

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    LatentState posterior_starts(const worldmodel::SequenceBatch& batch,
                                 RngStream& rng) const;

    TrainConfig cfg_;
    envs::EnvSpec env_spec_;
    std::unique_ptr<envs::ToyEnv> env_;
    std::unique_ptr<worldmodel::WorldModel> model_;
    std::unique_ptr<behavior::Behavior> behavior_;
    std::unique_ptr<BeliefFilter> belief_;
    planner::PlannerConfig pcfg_;
    planner::PlannerContext ctx_;
    ReplayBuffer buffer_;
    std::vector<UpdateKind> update_log_;
};

// Full training run: seed episodes, then alternate collect/train until the
// step budget, metrics row per episode, checkpoints at the configured
// cadence plus a final one. Writes run_dir/{config.txt, metrics.csv,
// checkpoint.lpln}.
void run_experiment(const TrainConfig& cfg);

// Noise-free evaluation episodes with the agent's configured planner.
// Returns per-episode returns; actions_out receives every executed action.
std::vector<double> run_eval(Agent& agent, int episodes, std::uint64_t seed,
                             std::vector<Array>* actions_out = nullptr);

struct PlanBenchResult {
    double random_mean = 0.0;   // uniform-random policy baseline, same episode count
    double planner_mean = 0.0;
    double mean_plan_ms = 0.0;
    long decisions = 0;
    std::vector<double> returns;
};

// Planner benchmark on exact dynamics: trains an actor-critic in oracle
// imagination, then runs seeded planner episodes against the same adapter.
PlanBenchResult plan_bench(const std::string& env_name, planner::PlanMode mode,
                           int episodes, std::uint64_t seed, int train_steps = 400,
                           int train_batch = 64);

}  // namespace lpln::agentloop
