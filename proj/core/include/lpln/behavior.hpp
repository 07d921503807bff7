#pragma once

// Actor-critic trained purely on imagined trajectories from a dynamics
// substrate. The actor ascends the mean lambda-return with gradients flowing
// through the substrate's transitions and the reparameterized tanh-Gaussian
// actions; the critic regresses onto stop-gradient lambda-return targets.

#include <memory>
#include <vector>

#include "lpln/array.hpp"
#include "lpln/model.hpp"
#include "lpln/params.hpp"
#include "lpln/rng.hpp"

namespace lpln::behavior {

struct BehaviorConfig {
    int feature_dim = 0;
    int action_dim = 0;
    int hidden = 64;  // width of both hidden layers in each net
    int horizon = 15;
    double gamma = 0.99;
    double lambda = 0.95;
    double actor_lr = 8e-5;
    double critic_lr = 8e-5;
    double grad_clip = 100.0;
};

// Batched imagined trajectory. rewards[tau] is the reward of the transition
// s_tau -> s_{tau+1}; values[tau] is v(s_tau). states/actions may be left
// empty when only the return calculations are needed.
struct ImaginedTrajectory {
    std::vector<LatentState> states;  // H+1 entries
    std::vector<Array> actions;       // H entries, [B, A]
    std::vector<Array> rewards;       // H entries, {B}
    std::vector<Array> values;        // H+1 entries, {B}
    double gamma = 0.99;
    double lambda = 0.95;

    int horizon() const { return static_cast<int>(rewards.size()); }
    int batch() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
};

// k-step bootstrapped return from position tau of one trajectory row:
// discounted rewards up to h = min(tau + k, H), then the discounted value at
// h. k must be >= 1; indices out of range are rejected.
double k_step_value(const ImaginedTrajectory& traj, int tau, int k, int row = 0);

// Exponentially weighted mixture over k-step returns, evaluated by literal
// direct summation. lambda = 1 collapses to the full-horizon return; the
// lambda = 0 limit gives the 1-step return (0^0 = 1 convention).
double lambda_return(const ImaginedTrajectory& traj, int tau, int row = 0);

struct BehaviorTrainStats {
    double actor_objective = 0.0;  // mean lambda-return over rows and tau
    double critic_loss = 0.0;
    double actor_grad_norm = 0.0;
    double critic_grad_norm = 0.0;
    bool skipped = false;
};

class Behavior {
public:
    Behavior(BehaviorConfig cfg, RngStream init_rng);

    const BehaviorConfig& config() const { return cfg_; }
    diffmath::ParameterSet& policy_params() { return policy_; }
    diffmath::ParameterSet& value_params() { return value_; }
    const diffmath::ParameterSet& policy_params() const { return policy_; }
    const diffmath::ParameterSet& value_params() const { return value_; }
    void invalidate_scratch() { scratch_version_ = -1; }

    const PolicyView& policy_view() const { return *policy_view_; }
    const ValueView& value_view() const { return *value_view_; }

    // Numeric tanh-Gaussian draw (zero noise gives the mode action). Output
    // is nudged strictly inside (-1, 1) against rounding at the rails.
    Array sample_action(const Array& features, const Array& noise) const;

    // Stochastic-policy rollout of the substrate, no gradients. Start may be
    // batched; all rows advance in lockstep.
    ImaginedTrajectory imagine_rollout(const ImaginationDynamics& dyn,
                                       const LatentState& start, int horizon,
                                       RngStream& rng) const;

    // One imagination pass with the policy trainable, reusable by both
    // updates below. Holds the graph alive plus numeric copies.
    struct ImaginationRun {
        std::unique_ptr<diffmath::Tape> tape;
        std::unique_ptr<diffmath::TapeBinding> policy_bind;
        diffmath::Var objective;          // scalar mean lambda-return
        ImaginedTrajectory numeric;       // rewards/values copied out
        std::vector<Array> features;      // H+1 entries, [B, F] numeric
        bool finite = true;
    };
    ImaginationRun imagine_for_training(const ImaginationDynamics& dyn,
                                        const LatentState& start, RngStream& rng);

    // Ascent step on the run's objective. Touches only policy parameters.
    BehaviorTrainStats actor_update(ImaginationRun& run);
    // Descent step on 0.5 * mean squared error against lambda-return targets
    // recomputed from the run's numeric arrays. Touches only value params.
    BehaviorTrainStats critic_update(const ImaginationRun& run);

    // imagine + actor + critic, the per-iteration behavior step.
    BehaviorTrainStats train_step(const ImaginationDynamics& dyn,
                                  const LatentState& start, RngStream& rng);

private:
    friend class BehaviorPolicyView;
    friend class BehaviorValueView;

    diffmath::Var policy_stats(diffmath::Tape& t, diffmath::TapeBinding& bind,
                               diffmath::Var feat, diffmath::Var* stddev_out) const;
    diffmath::Var value_of(diffmath::Tape& t, diffmath::TapeBinding& bind,
                           diffmath::Var feat) const;

    void ensure_scratch() const;
    void drop_scratch_nodes() const;

    BehaviorConfig cfg_;
    diffmath::ParameterSet policy_;
    diffmath::ParameterSet value_;
    std::unique_ptr<PolicyView> policy_view_;
    std::unique_ptr<ValueView> value_view_;

    mutable std::unique_ptr<diffmath::Tape> scratch_;
    mutable std::unique_ptr<diffmath::TapeBinding> scratch_policy_;
    mutable std::unique_ptr<diffmath::TapeBinding> scratch_value_;
    mutable std::size_t scratch_mark_ = 0;
    mutable std::int64_t scratch_version_ = -1;
};

}  // namespace lpln::behavior
