#pragma once

// Interfaces that tie the planner and the behavior learner to a dynamics
// substrate. Two substrates exist: the learned latent model and the exact
// environment adapters used for oracle experiments. Planner code only ever
// sees these types, so it cannot tell the difference.

#include <memory>

#include "lpln/array.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"

namespace lpln {

// Batched state. Row b of every field is one state. Substrates without a
// stochastic head (the oracle adapters) leave stoch/mean/stddev empty and
// carry everything in deter.
struct LatentState {
    Array deter;
    Array stoch;
    Array mean;
    Array stddev;

    int batch() const { return deter.rows(); }
};

LatentState select_row(const LatentState& s, int row);
LatentState tile_rows(const LatentState& s, int n);  // requires batch() == 1

// Standard-normal array, drawn element by element in row-major order.
Array normal_rows(std::vector<int> shape, RngStream& rng);

// Numeric (no-gradient) view of a dynamics substrate. The caller supplies
// transition noise explicitly: every row advances with its own noise row, so
// batched evaluation and sequential evaluation consume randomness
// identically and plans replay bit-for-bit.
class DynamicsView {
public:
    virtual ~DynamicsView() = default;
    virtual int action_dim() const = 0;
    virtual int feature_dim() const = 0;
    virtual int noise_dim() const = 0;  // 0 when transitions are deterministic
    virtual LatentState prior_step(const LatentState& s, const Array& actions,
                                   const Array& noise) const = 0;
    virtual Array reward_mean(const LatentState& s) const = 0;  // {B}
    virtual Array features(const LatentState& s) const = 0;     // [B,F]
};

class PolicyView {
public:
    virtual ~PolicyView() = default;
    virtual int action_dim() const = 0;
    virtual Array mode(const Array& feats) const = 0;  // tanh(mean), [B,A]
    // tanh(mean + stddev * eps) with eps [B,A] supplied by the caller.
    virtual Array sample(const Array& feats, const Array& eps) const = 0;
};

class ValueView {
public:
    virtual ~ValueView() = default;
    virtual Array values(const Array& feats) const = 0;  // {B}
};

// Filtering state over environment interaction: fold each (action, obs)
// pair into the running belief. The learned substrate runs its posterior;
// the oracle adapters reconstruct the true state from the observation.
class BeliefFilter {
public:
    virtual ~BeliefFilter() = default;
    virtual LatentState initial() const = 0;  // batch 1, before any obs
    virtual LatentState update(const LatentState& prev, const Array& action,
                               const Array& obs, RngStream& rng) const = 0;
};

// State lifted onto a tape for imagination training. Substrates that do not
// use a field leave its Var invalid.
struct LatentVars {
    diffmath::Var deter;
    diffmath::Var stoch;
};

// Differentiable view bound to one tape. Substrate parameters entered the
// tape as constants at bind() time, so gradients flow through states and
// actions but never into the substrate itself.
class BoundDynamics {
public:
    virtual ~BoundDynamics() = default;
    virtual LatentVars lift(const LatentState& s) = 0;
    virtual LatentVars step(const LatentVars& s, diffmath::Var actions,
                            const Array& noise) = 0;
    virtual diffmath::Var reward(const LatentVars& s) = 0;    // [B,1]
    virtual diffmath::Var features(const LatentVars& s) = 0;  // [B,F]
};

class ImaginationDynamics {
public:
    virtual ~ImaginationDynamics() = default;
    virtual int action_dim() const = 0;
    virtual int feature_dim() const = 0;
    virtual int noise_dim() const = 0;
    virtual std::unique_ptr<BoundDynamics> bind(diffmath::Tape& t) const = 0;
};

}  // namespace lpln
