#pragma once

// Latent dynamics model: deterministic recurrent path plus a sampled
// stochastic component, trained to reconstruct observations and rewards
// under a KL regularizer between the observation-conditioned posterior and
// the action-only prior. One Var-level program defines the math; numeric
// entry points run it on an internal no-gradient scratch tape, so planning
// and training can never disagree on the model.

#include <cstdint>
#include <memory>

#include "lpln/array.hpp"
#include "lpln/model.hpp"
#include "lpln/params.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"

namespace lpln::worldmodel {

struct SequenceBatch {
    std::vector<Array> obs;      // L entries, [B, obs_dim]
    std::vector<Array> actions;  // L entries, [B, action_dim]; actions[t] precedes obs[t]
    std::vector<Array> rewards;  // L entries, [B, 1]; rewards[t] arrives with obs[t]
    int batch = 0;
    int length = 0;
};

struct WorldModelConfig {
    int obs_dim = 0;
    int action_dim = 0;
    int deter = 64;
    int stoch = 16;
    int hidden = 64;
    int embed = 64;
    double beta = 1.0;            // KL scale in the joint loss
    double decoder_stddev = 1.0;  // fixed likelihood stddev for both decoders
    double lr = 6e-4;
    double grad_clip = 100.0;

    int feature_dim() const { return deter + stoch; }
};

struct ModelTrainStats {
    double loss = 0.0;
    double j_o = 0.0;       // sum over time of batch-mean observation log-lik
    double j_r = 0.0;       // same for reward log-lik
    double kl = 0.0;        // sum over time of batch-mean KL(posterior || prior)
    double grad_norm = 0.0;
    bool skipped = false;   // non-finite loss or gradients, update aborted
};

class WorldModel {
public:
    WorldModel(WorldModelConfig cfg, RngStream init_rng);

    const WorldModelConfig& config() const { return cfg_; }
    diffmath::ParameterSet& params() { return params_; }
    const diffmath::ParameterSet& params() const { return params_; }
    // Bump when parameters change outside adam_step (e.g. checkpoint load).
    void invalidate_scratch() { scratch_version_ = -1; }

    LatentState initial_state(int batch = 1) const;

    // Numeric single-call entry points (no gradients). Noise rows are
    // standard normal draws supplied by the caller.
    LatentState posterior_step(const LatentState& prev, const Array& action,
                               const Array& obs, const Array& noise) const;
    LatentState prior_step(const LatentState& prev, const Array& action,
                           const Array& noise) const;
    Array decode_observation(const LatentState& s) const;  // [B, obs_dim]
    Array decode_reward(const LatentState& s) const;       // {B}
    Array features(const LatentState& s) const;            // [B, deter+stoch]

    // One gradient step on the joint reconstruction loss. The initial latent
    // is all-zeros. Stochastic samples use noise from rng.
    ModelTrainStats train_model_batch(const SequenceBatch& batch, RngStream& rng);

    // Loss graph only (used by gradient checks): returns the scalar loss Var
    // on the caller's tape; stats filled from forward values.
    diffmath::Var reconstruction_loss(diffmath::Tape& t, diffmath::TapeBinding& bind,
                                      const SequenceBatch& batch, RngStream& rng,
                                      ModelTrainStats* stats) const;

    const DynamicsView& dynamics_view() const { return *dyn_view_; }
    const ImaginationDynamics& imagination() const { return *imagination_; }
    std::unique_ptr<BeliefFilter> make_belief_filter() const;

    // Var-level model program; defined with the implementation.
    struct Program;

private:
    // Scratch-tape plumbing for the numeric entry points: one long-lived
    // no-grad tape holds the parameter constants, and every call truncates
    // back to that watermark on exit.
    Program scratch_program() const;
    void drop_scratch_nodes() const;

    WorldModelConfig cfg_;
    diffmath::ParameterSet params_;
    std::unique_ptr<DynamicsView> dyn_view_;
    std::unique_ptr<ImaginationDynamics> imagination_;

    mutable std::unique_ptr<diffmath::Tape> scratch_;
    mutable std::unique_ptr<diffmath::TapeBinding> scratch_bind_;
    mutable std::size_t scratch_mark_ = 0;
    mutable std::int64_t scratch_version_ = -1;
};

}  // namespace lpln::worldmodel
