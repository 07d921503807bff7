#pragma once

// Episode storage for model training. Sampled windows are always contained
// in a single episode; eviction drops whole oldest episodes once the step
// capacity is exceeded.

#include <cstddef>
#include <vector>

#include "lpln/array.hpp"
#include "lpln/rng.hpp"
#include "lpln/worldmodel.hpp"

namespace lpln::agentloop {

// Parallel per-step records: actions[t] was executed, producing rewards[t]
// and the observation obs[t].
struct Episode {
    std::vector<Array> obs;
    std::vector<Array> actions;
    std::vector<double> rewards;

    int length() const { return static_cast<int>(actions.size()); }
};

class ReplayBuffer {
public:
    // capacity_steps 0 keeps everything.
    explicit ReplayBuffer(std::size_t capacity_steps = 0) : capacity_(capacity_steps) {}

    void add_episode(Episode ep);

    std::size_t num_episodes() const { return episodes_.size(); }
    std::size_t total_steps() const { return total_steps_; }
    const std::vector<Episode>& episodes() const { return episodes_; }

    // True when at least one stored episode has length >= length.
    bool can_sample(int length) const;

    // batch windows of exactly length steps, uniform over all valid
    // (episode, start) pairs. Throws when no window of that length exists.
    worldmodel::SequenceBatch sample(int batch, int length, RngStream& rng) const;

private:
    std::vector<Episode> episodes_;
    std::size_t capacity_;
    std::size_t total_steps_ = 0;
};

}  // namespace lpln::agentloop
