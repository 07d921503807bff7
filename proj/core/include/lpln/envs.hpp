#pragma once

// Toy continuous-control environments and the oracle adapters that expose
// their exact dynamics behind the latent-model interface. The same substep
// code drives the environment, the numeric oracle view and the forward pass
// of the differentiable oracle, so the three can never drift apart.

#include <memory>
#include <stdexcept>
#include <string>

#include "lpln/array.hpp"
#include "lpln/model.hpp"
#include "lpln/rng.hpp"

namespace lpln::envs {

struct EnvSpec {
    std::string name;
    int obs_dim = 0;
    int action_dim = 0;
    int episode_length = 200;  // inner physics steps
    int action_repeat = 2;

    int agent_steps() const { return episode_length / action_repeat; }
};

struct Transition {
    Array obs;
    Array action;
    double reward = 0.0;
    Array next_obs;
    int step_index = 0;  // agent-step index within the episode
};

// Exact physics of one environment: a single inner substep, the state
// reward, the observation map, and their analytic Jacobians. Jacobians are
// only consumed by the differentiable oracle; each must match the substep
// code exactly (checked against finite differences in the tests).
class EnvDynamics {
public:
    virtual ~EnvDynamics() = default;
    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual int obs_dim() const = 0;
    virtual void substep(double* s, const double* a) const = 0;
    virtual double reward(const double* s) const = 0;
    virtual void observe(const double* s, double* obs) const = 0;
    virtual void reset_state(double* s, RngStream& rng) const = 0;
    // d(substep)/d(state) [S,S] and d(substep)/d(action) [S,A], row-major,
    // evaluated at the PRE-substep state.
    virtual void substep_jacobian(const double* s, const double* a,
                                  double* Js, double* Ja) const = 0;
    virtual void reward_gradient(const double* s, double* dr_ds) const = 0;
    virtual void observe_jacobian(const double* s, double* Jo) const = 0;  // [obs,S]
};

class ToyEnv {
public:
    ToyEnv(std::unique_ptr<EnvDynamics> dyn, EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    const EnvDynamics& dynamics() const { return *dyn_; }

    Array reset(RngStream& rng);
    // Applies action_repeat substeps; reward is the mean of the post-substep
    // rewards so it stays in the per-substep range. Throws when called on a
    // finished episode.
    Transition step(const Array& action);

    bool done() const { return steps_taken_ >= spec_.agent_steps(); }
    const Array& state() const { return state_; }
    Array observation() const;

private:
    std::unique_ptr<EnvDynamics> dyn_;
    EnvSpec spec_;
    Array state_;
    int steps_taken_ = 0;
    bool started_ = false;
};

// "pointmass" or "pendulum"; episode_length counts inner physics steps.
std::unique_ptr<ToyEnv> make_env(const std::string& name, int episode_length = 200,
                                 int action_repeat = 2);
std::unique_ptr<EnvDynamics> make_env_dynamics(const std::string& name);

// Ground-truth dynamics behind the planner/imagination interfaces. The
// oracle state is [physical state, reward carried from the producing step];
// reward_mean reads the carried column, so the adapter's one-step reward is
// the environment's reward for the same (state, action) by construction.
class OracleLatentAdapter : public DynamicsView, public ImaginationDynamics {
public:
    OracleLatentAdapter(std::shared_ptr<const EnvDynamics> dyn, int action_repeat);

    // DynamicsView
    int action_dim() const override;
    int feature_dim() const override;
    int noise_dim() const override { return 0; }
    LatentState prior_step(const LatentState& s, const Array& actions,
                           const Array& noise) const override;
    Array reward_mean(const LatentState& s) const override;
    Array features(const LatentState& s) const override;

    // ImaginationDynamics
    std::unique_ptr<BoundDynamics> bind(diffmath::Tape& t) const override;

    // Packs a physical state (batch 1) into the adapter's latent layout.
    LatentState lift_state(const Array& phys, double carried_reward = 0.0) const;

    int state_dim() const;
    int action_repeat() const { return action_repeat_; }
    const EnvDynamics& dynamics() const { return *dyn_; }

private:
    std::shared_ptr<const EnvDynamics> dyn_;
    int action_repeat_;
};

// Belief for oracle experiments: reads the live environment's true state.
class OracleBelief : public BeliefFilter {
public:
    OracleBelief(const ToyEnv* env, const OracleLatentAdapter* adapter)
        : env_(env), adapter_(adapter) {}

    LatentState initial() const override;
    LatentState update(const LatentState& prev, const Array& action,
                       const Array& obs, RngStream& rng) const override;

private:
    const ToyEnv* env_;
    const OracleLatentAdapter* adapter_;
};

}  // namespace lpln::envs
