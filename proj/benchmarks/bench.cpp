// Hot-path microbenchmarks: autodiff primitives, model steps, loss + update,
// and per-decision planning cost in every mode.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "lpln/behavior.hpp"
#include "lpln/envs.hpp"
#include "lpln/ops.hpp"
#include "lpln/planner.hpp"
#include "lpln/replay.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"
#include "lpln/worldmodel.hpp"

namespace {

using namespace lpln;

Array random_array(std::vector<int> shape, RngStream& rng) {
    Array out(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.normal();
    return out;
}

void bm_affine_backward(benchmark::State& state) {
    RngStream rng(7);
    const Array x = random_array({32, 80}, rng);
    const Array W = random_array({80, 64}, rng);
    const Array b = random_array({64}, rng);
    for (auto _ : state) {
        diffmath::Tape t(true);
        diffmath::Var xv = t.leaf(x, true);
        diffmath::Var y = diffmath::affine(xv, t.leaf(W, true), t.leaf(b, true));
        diffmath::Var loss = diffmath::sum_all(diffmath::tanh_op(y));
        t.backward(loss);
        benchmark::DoNotOptimize(t.grad(xv)[0]);
    }
}
BENCHMARK(bm_affine_backward);

worldmodel::WorldModel make_model() {
    worldmodel::WorldModelConfig mc;
    mc.obs_dim = 4;
    mc.action_dim = 2;
    return worldmodel::WorldModel(mc, RngStream(11).child("model-init"));
}

void bm_model_posterior_step(benchmark::State& state) {
    worldmodel::WorldModel wm = make_model();
    RngStream rng(3);
    const int B = 32;
    LatentState s = wm.initial_state(B);
    const Array action = random_array({B, 2}, rng);
    const Array obs = random_array({B, 4}, rng);
    const Array noise = random_array({B, wm.config().stoch}, rng);
    for (auto _ : state) {
        LatentState next = wm.posterior_step(s, action, obs, noise);
        benchmark::DoNotOptimize(next.deter[0]);
    }
}
BENCHMARK(bm_model_posterior_step);

void bm_model_train_batch(benchmark::State& state) {
    worldmodel::WorldModel wm = make_model();
    RngStream rng(5);
    worldmodel::SequenceBatch batch;
    batch.batch = 8;
    batch.length = 8;
    for (int t = 0; t < batch.length; ++t) {
        batch.obs.push_back(random_array({batch.batch, 4}, rng));
        batch.actions.push_back(random_array({batch.batch, 2}, rng));
        batch.rewards.push_back(random_array({batch.batch, 1}, rng));
    }
    for (auto _ : state) {
        worldmodel::ModelTrainStats st = wm.train_model_batch(batch, rng);
        benchmark::DoNotOptimize(st.loss);
    }
}
BENCHMARK(bm_model_train_batch);

// One planner decision on the pendulum oracle with an untrained behavior.
void bm_plan_decision(benchmark::State& state, planner::PlanMode mode) {
    auto dyn = std::shared_ptr<const envs::EnvDynamics>(envs::make_env_dynamics("pendulum"));
    envs::OracleLatentAdapter adapter(dyn, 2);
    behavior::BehaviorConfig bc;
    bc.feature_dim = adapter.feature_dim();
    bc.action_dim = adapter.action_dim();
    behavior::Behavior beh(bc, RngStream(13).child("behavior-init"));

    planner::PlannerConfig pcfg;
    pcfg.mode = mode;
    planner::PlannerContext ctx{&adapter, &beh.policy_view(), &beh.value_view()};
    RngStream rng(17);
    const LatentState root = adapter.lift_state(Array({2}, 0.5));
    for (auto _ : state) {
        Array a = planner::plan(ctx, root, pcfg, rng);
        benchmark::DoNotOptimize(a[0]);
    }
}
BENCHMARK_CAPTURE(bm_plan_decision, dreamer, planner::PlanMode::dreamer);
BENCHMARK_CAPTURE(bm_plan_decision, rollout, planner::PlanMode::rollout);
BENCHMARK_CAPTURE(bm_plan_decision, mcts_pw, planner::PlanMode::mcts_pw);
BENCHMARK_CAPTURE(bm_plan_decision, mcts_fixed, planner::PlanMode::mcts_fixed);

void bm_replay_sample(benchmark::State& state) {
    RngStream rng(23);
    agentloop::ReplayBuffer buffer;
    for (int e = 0; e < 50; ++e) {
        agentloop::Episode ep;
        for (int t = 0; t < 100; ++t) {
            ep.obs.push_back(random_array({4}, rng));
            ep.actions.push_back(random_array({2}, rng));
            ep.rewards.push_back(rng.uniform());
        }
        buffer.add_episode(std::move(ep));
    }
    for (auto _ : state) {
        worldmodel::SequenceBatch b = buffer.sample(32, 32, rng);
        benchmark::DoNotOptimize(b.obs[0][0]);
    }
}
BENCHMARK(bm_replay_sample);

}  // namespace

BENCHMARK_MAIN();
