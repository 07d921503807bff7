#include "lpln/agent.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <utility>

#include "lpln/checkpoint.hpp"
#include "lpln/metrics.hpp"

namespace lpln::agentloop {

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

Agent::Agent(const TrainConfig& cfg) : cfg_(cfg), buffer_(cfg.buffer_capacity) {
    validate(cfg_);
    env_ = envs::make_env(cfg_.env, cfg_.episode_length, cfg_.action_repeat);
    env_spec_ = env_->spec();

    worldmodel::WorldModelConfig mc;
    mc.obs_dim = env_spec_.obs_dim;
    mc.action_dim = env_spec_.action_dim;
    mc.deter = cfg_.model_deter;
    mc.stoch = cfg_.model_stoch;
    mc.hidden = cfg_.model_hidden;
    mc.embed = cfg_.model_embed;
    mc.beta = cfg_.beta;
    mc.lr = cfg_.model_lr;
    mc.grad_clip = cfg_.grad_clip;
    model_ = std::make_unique<worldmodel::WorldModel>(mc, RngStream(cfg_.seed).child("model-init"));

    behavior::BehaviorConfig bc;
    bc.feature_dim = mc.feature_dim();
    bc.action_dim = env_spec_.action_dim;
    bc.horizon = cfg_.imagination_horizon;
    bc.gamma = cfg_.gamma;
    bc.lambda = cfg_.lambda;
    bc.actor_lr = cfg_.actor_lr;
    bc.critic_lr = cfg_.critic_lr;
    bc.grad_clip = cfg_.grad_clip;
    behavior_ =
        std::make_unique<behavior::Behavior>(bc, RngStream(cfg_.seed).child("behavior-init"));

    belief_ = model_->make_belief_filter();
    pcfg_ = agentloop::planner_config(cfg_);
    ctx_.dynamics = &model_->dynamics_view();
    ctx_.policy = &behavior_->policy_view();
    ctx_.value = &behavior_->value_view();
}

CollectResult Agent::collect_episode(bool train, RunStreams& streams,
                                     std::vector<Array>* actions_out) {
    CollectResult out;
    Episode ep;
    const int A = env_spec_.action_dim;
    double plan_ms = 0.0;
    try {
        Array obs = env_->reset(streams.env);
        LatentState belief = belief_->update(belief_->initial(), Array({A}, 0.0), obs,
                                             streams.belief);
        while (!env_->done()) {
            auto t0 = std::chrono::steady_clock::now();
            Array action = planner::plan(ctx_, belief, pcfg_, streams.plan);
            plan_ms += ms_since(t0);
            if (train && pcfg_.noise_std > 0.0)
                action = planner::add_exploration_noise(action, pcfg_.noise_std, streams.explore);

            envs::Transition tr = env_->step(action);
            Array flat({A});
            for (int i = 0; i < A; ++i) flat[i] = action[i];

            ep.obs.push_back(tr.next_obs);
            ep.actions.push_back(flat);
            ep.rewards.push_back(tr.reward);
            out.episode_return += tr.reward;
            ++out.decisions;
            if (actions_out) actions_out->push_back(flat);

            // The belief tracks the executed action, noise included.
            belief = belief_->update(belief, flat, tr.next_obs, streams.belief);
        }
    } catch (const std::exception& e) {
        std::cerr << "[incident] episode aborted: " << e.what() << "\n";
        throw;
    }
    out.plan_time_ms = out.decisions > 0 ? plan_ms / out.decisions : 0.0;
    out.env_steps = env_spec_.episode_length;
    if (train) buffer_.add_episode(std::move(ep));
    return out;
}

CollectResult Agent::collect_random_episode(RunStreams& streams) {
    CollectResult out;
    Episode ep;
    const int A = env_spec_.action_dim;
    env_->reset(streams.env);
    while (!env_->done()) {
        Array a({A});
        for (int i = 0; i < A; ++i) a[i] = streams.plan.uniform(-1.0, 1.0);
        envs::Transition tr = env_->step(a);
        ep.obs.push_back(tr.next_obs);
        ep.actions.push_back(a);
        ep.rewards.push_back(tr.reward);
        out.episode_return += tr.reward;
        ++out.decisions;
    }
    out.env_steps = env_spec_.episode_length;
    buffer_.add_episode(std::move(ep));
    return out;
}

LatentState Agent::posterior_starts(const worldmodel::SequenceBatch& batch,
                                    RngStream& rng) const {
    const int B = batch.batch;
    const int L = batch.length;
    const int deter = model_->config().deter;
    const int stoch = model_->config().stoch;

    LatentState out;
    out.deter = Array({L * B, deter});
    out.stoch = Array({L * B, stoch});
    LatentState s = model_->initial_state(B);
    for (int t = 0; t < L; ++t) {
        s = model_->posterior_step(s, batch.actions[t], batch.obs[t],
                                   normal_rows({B, stoch}, rng));
        for (int b = 0; b < B; ++b) {
            for (int i = 0; i < deter; ++i) out.deter.at(t * B + b, i) = s.deter.at(b, i);
            for (int i = 0; i < stoch; ++i) out.stoch.at(t * B + b, i) = s.stoch.at(b, i);
        }
    }
    return out;
}

IterationStats Agent::train_iteration(RunStreams& streams) {
    IterationStats out;
    for (int i = 0; i < cfg_.model_updates; ++i) {
        worldmodel::SequenceBatch batch =
            buffer_.sample(cfg_.batch_size, cfg_.seq_length, streams.replay);
        worldmodel::ModelTrainStats st = model_->train_model_batch(batch, streams.model);
        update_log_.push_back(UpdateKind::model);
        out.j_o += st.j_o;
        out.j_r += st.j_r;
        out.kl += st.kl;
        ++out.model_updates;
    }
    // Behavior phase: the model only provides posterior starts and the frozen
    // imagination substrate from here on.
    for (int i = 0; i < cfg_.behavior_updates; ++i) {
        worldmodel::SequenceBatch batch =
            buffer_.sample(cfg_.batch_size, cfg_.seq_length, streams.replay);
        LatentState starts = posterior_starts(batch, streams.model);
        behavior::BehaviorTrainStats st =
            behavior_->train_step(model_->imagination(), starts, streams.behavior);
        update_log_.push_back(UpdateKind::behavior);
        out.actor_objective += st.actor_objective;
        out.critic_loss += st.critic_loss;
        ++out.behavior_updates;
    }
    if (out.model_updates > 0) {
        out.j_o /= out.model_updates;
        out.j_r /= out.model_updates;
        out.kl /= out.model_updates;
    }
    if (out.behavior_updates > 0) {
        out.actor_objective /= out.behavior_updates;
        out.critic_loss /= out.behavior_updates;
    }
    return out;
}

void Agent::save(const std::string& path) const {
    save_checkpoint(path, config_hash(cfg_),
                    {{"worldmodel", &model_->params()},
                     {"policy", &behavior_->policy_params()},
                     {"value", &behavior_->value_params()}});
}

void Agent::load(const std::string& path) {
    CheckpointMeta meta = read_checkpoint_meta(path);
    if (meta.config_hash != config_hash(cfg_))
        throw std::runtime_error("checkpoint config hash does not match the active config");
    load_checkpoint(path, {{"worldmodel", &model_->params()},
                           {"policy", &behavior_->policy_params()},
                           {"value", &behavior_->value_params()}});
}

void run_experiment(const TrainConfig& cfg) {
    validate(cfg);
    std::filesystem::create_directories(cfg.run_dir);
    {
        std::ofstream f(cfg.run_dir + "/config.txt", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + cfg.run_dir + "/config.txt");
        f << config_to_text(cfg);
    }
    MetricsWriter metrics(cfg.run_dir + "/metrics.csv");
    Agent agent(cfg);
    RunStreams streams(cfg.seed);
    const auto wall0 = std::chrono::steady_clock::now();
    auto wall_s = [&wall0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    };
    const std::string ckpt_path = cfg.run_dir + "/checkpoint.lpln";

    long env_steps = 0;
    long steps_since_train = 0;
    int trained_episodes = 0;

    for (int i = 0; i < cfg.seed_episodes; ++i) {
        CollectResult cr = agent.collect_random_episode(streams);
        env_steps += cr.env_steps;
        steps_since_train += cr.env_steps;
        MetricsRow row;
        row.env_step = env_steps;
        row.episode_return = cr.episode_return;
        row.wall_clock_s = wall_s();
        metrics.append(row);
    }

    while (env_steps < cfg.total_env_steps) {
        CollectResult cr = agent.collect_episode(true, streams);
        env_steps += cr.env_steps;
        steps_since_train += cr.env_steps;

        IterationStats acc;
        int iterations = 0;
        while (steps_since_train >= cfg.train_every) {
            steps_since_train -= cfg.train_every;
            IterationStats it = agent.train_iteration(streams);
            acc.j_o += it.j_o;
            acc.j_r += it.j_r;
            acc.kl += it.kl;
            acc.actor_objective += it.actor_objective;
            acc.critic_loss += it.critic_loss;
            acc.model_updates += it.model_updates;
            acc.behavior_updates += it.behavior_updates;
            ++iterations;
        }

        MetricsRow row;
        row.env_step = env_steps;
        row.episode_return = cr.episode_return;
        if (iterations > 0) {
            row.j_o = acc.j_o / iterations;
            row.j_r = acc.j_r / iterations;
            row.kl = acc.kl / iterations;
            row.actor_objective = acc.actor_objective / iterations;
            row.critic_loss = acc.critic_loss / iterations;
        }
        row.plan_time_ms = cr.plan_time_ms;
        row.wall_clock_s = wall_s();
        metrics.append(row);

        ++trained_episodes;
        if (cfg.checkpoint_every > 0 && trained_episodes % cfg.checkpoint_every == 0)
            agent.save(ckpt_path);
    }
    agent.save(ckpt_path);
}

std::vector<double> run_eval(Agent& agent, int episodes, std::uint64_t seed,
                             std::vector<Array>* actions_out) {
    RunStreams streams(seed, "eval-");
    std::vector<double> returns;
    returns.reserve(episodes);
    for (int e = 0; e < episodes; ++e)
        returns.push_back(agent.collect_episode(false, streams, actions_out).episode_return);
    return returns;
}

PlanBenchResult plan_bench(const std::string& env_name, planner::PlanMode mode, int episodes,
                           std::uint64_t seed, int train_steps, int train_batch) {
    std::shared_ptr<const envs::EnvDynamics> dyn(envs::make_env_dynamics(env_name));
    envs::OracleLatentAdapter adapter(dyn, 2);
    const int S = adapter.state_dim();
    const int A = adapter.action_dim();

    RngStream master(seed);
    behavior::BehaviorConfig bc;
    bc.feature_dim = adapter.feature_dim();
    bc.action_dim = A;
    behavior::Behavior beh(bc, master.child("behavior-init"));

    // Value and policy learned against the exact dynamics; fresh start states
    // every step so the critic covers the reset distribution.
    RngStream starts_rng = master.child("starts");
    RngStream train_rng = master.child("behavior-train");
    std::vector<double> phys(S);
    for (int i = 0; i < train_steps; ++i) {
        LatentState start;
        start.deter = Array({train_batch, S + 1});
        for (int b = 0; b < train_batch; ++b) {
            dyn->reset_state(phys.data(), starts_rng);
            for (int j = 0; j < S; ++j) start.deter.at(b, j) = phys[j];
            start.deter.at(b, S) = 0.0;
        }
        beh.train_step(adapter, start, train_rng);
    }

    PlanBenchResult result;

    RngStream random_env = master.child("random-env");
    RngStream random_act = master.child("random-act");
    double random_sum = 0.0;
    for (int e = 0; e < episodes; ++e) {
        auto env = envs::make_env(env_name);
        env->reset(random_env);
        double ret = 0.0;
        while (!env->done()) {
            Array a({A});
            for (int i = 0; i < A; ++i) a[i] = random_act.uniform(-1.0, 1.0);
            ret += env->step(a).reward;
        }
        random_sum += ret;
    }
    result.random_mean = episodes > 0 ? random_sum / episodes : 0.0;

    planner::PlannerConfig pcfg;
    pcfg.mode = mode;
    planner::PlannerContext ctx{&adapter, &beh.policy_view(), &beh.value_view()};
    RngStream plan_env = master.child("plan-env");
    RngStream plan_rng = master.child("planner");
    double plan_sum = 0.0;
    double ms_sum = 0.0;
    for (int e = 0; e < episodes; ++e) {
        auto env = envs::make_env(env_name);
        envs::OracleBelief belief(env.get(), &adapter);
        env->reset(plan_env);
        LatentState s = belief.update(belief.initial(), Array({A}, 0.0), env->observation(),
                                      plan_rng);
        double ret = 0.0;
        while (!env->done()) {
            auto t0 = std::chrono::steady_clock::now();
            Array a = planner::plan(ctx, s, pcfg, plan_rng);
            ms_sum += ms_since(t0);
            ++result.decisions;
            envs::Transition tr = env->step(a);
            ret += tr.reward;
            s = belief.update(s, a, tr.next_obs, plan_rng);
        }
        result.returns.push_back(ret);
        plan_sum += ret;
    }
    result.planner_mean = episodes > 0 ? plan_sum / episodes : 0.0;
    result.mean_plan_ms = result.decisions > 0 ? ms_sum / result.decisions : 0.0;
    return result;
}

}  // namespace lpln::agentloop
