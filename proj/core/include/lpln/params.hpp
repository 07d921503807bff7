#pragma once

// Named parameter tensors with Adam state, plus the bridge that exposes them
// on a tape. Parameters live outside any tape; a fresh tape is built per
// training step and the binding decides whether they enter as trainable
// leaves or as constants (constants make d(objective)/d(theta) exactly zero
// by construction, which is how the actor treats model and critic weights).

#include <cstdint>
#include <string>
#include <vector>

#include "lpln/array.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"

namespace lpln::diffmath {

struct Param {
    std::string name;
    Array value;
    Array m;  // Adam first moment
    Array v;  // Adam second moment
};

class ParameterSet {
public:
    Param& add(const std::string& name, Array init);

    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    std::vector<Param>& items() { return params_; }
    const std::vector<Param>& items() const { return params_; }

    std::int64_t adam_steps() const { return step_; }
    void set_adam_steps(std::int64_t s) { step_ = s; }

    // Incremented on every value mutation; lets cached bindings detect
    // staleness. Call bump_version after writing values directly.
    std::int64_t version() const { return version_; }
    void bump_version() { version_ += 1; }

    std::size_t total_size() const;

private:
    std::vector<Param> params_;  // insertion order, also the checkpoint order
    std::int64_t step_ = 0;      // shared Adam timestep
    std::int64_t version_ = 0;

    friend class TapeBinding;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 0.0;  // global gradient norm cap, 0 disables clipping
};

class TapeBinding {
public:
    TapeBinding(Tape& tape, ParameterSet& set, bool trainable);

    Var operator[](const std::string& name) const;

    // One Adam update from the gradients currently on the tape. Returns the
    // pre-clip global gradient norm. A non-finite norm skips the update
    // entirely (weights, moments and step count untouched) so a single bad
    // batch cannot poison the run; the caller decides how to report it.
    double adam_step(const AdamConfig& cfg);

private:
    Tape* tape_;
    ParameterSet* set_;
    std::vector<Var> vars_;  // parallel to set_->params_
    bool trainable_;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), shape {fan_in, fan_out}.
Array glorot_uniform(int fan_in, int fan_out, RngStream& rng);

}  // namespace lpln::diffmath
