#include "lpln/replay.hpp"

#include <stdexcept>

namespace lpln::agentloop {

void ReplayBuffer::add_episode(Episode ep) {
    const std::size_t n = ep.actions.size();
    if (n == 0) throw std::invalid_argument("add_episode: empty episode");
    if (ep.obs.size() != n || ep.rewards.size() != n)
        throw std::invalid_argument("add_episode: obs/actions/rewards lengths differ");
    total_steps_ += n;
    episodes_.push_back(std::move(ep));
    if (capacity_ > 0) {
        std::size_t drop = 0;
        while (total_steps_ > capacity_ && drop + 1 < episodes_.size()) {
            total_steps_ -= episodes_[drop].actions.size();
            ++drop;
        }
        if (drop > 0)
            episodes_.erase(episodes_.begin(),
                            episodes_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
}

bool ReplayBuffer::can_sample(int length) const {
    if (length <= 0) return false;
    for (const Episode& e : episodes_)
        if (e.length() >= length) return true;
    return false;
}

worldmodel::SequenceBatch ReplayBuffer::sample(int batch, int length, RngStream& rng) const {
    if (batch <= 0 || length <= 0)
        throw std::invalid_argument("sample: batch and length must be positive");
    // Enumerate the valid (episode, start) windows so the draw is uniform
    // over windows, not over episodes.
    std::vector<std::pair<int, int>> counts;  // (episode index, window count)
    std::size_t total = 0;
    for (int e = 0; e < static_cast<int>(episodes_.size()); ++e) {
        int c = episodes_[e].length() - length + 1;
        if (c > 0) {
            counts.emplace_back(e, c);
            total += static_cast<std::size_t>(c);
        }
    }
    if (total == 0) throw std::runtime_error("sample: no stored episode is long enough");

    const int obs_dim = static_cast<int>(episodes_[counts[0].first].obs[0].size());
    const int action_dim = static_cast<int>(episodes_[counts[0].first].actions[0].size());

    worldmodel::SequenceBatch out;
    out.batch = batch;
    out.length = length;
    for (int t = 0; t < length; ++t) {
        out.obs.emplace_back(std::vector<int>{batch, obs_dim});
        out.actions.emplace_back(std::vector<int>{batch, action_dim});
        out.rewards.emplace_back(std::vector<int>{batch, 1});
    }
    for (int b = 0; b < batch; ++b) {
        std::size_t pick = rng.uniform_int(total);
        int epi = -1, start = 0;
        for (const auto& [e, c] : counts) {
            if (pick < static_cast<std::size_t>(c)) {
                epi = e;
                start = static_cast<int>(pick);
                break;
            }
            pick -= static_cast<std::size_t>(c);
        }
        const Episode& ep = episodes_[epi];
        for (int t = 0; t < length; ++t) {
            const Array& o = ep.obs[start + t];
            const Array& a = ep.actions[start + t];
            for (int c = 0; c < obs_dim; ++c) out.obs[t].at(b, c) = o[c];
            for (int c = 0; c < action_dim; ++c) out.actions[t].at(b, c) = a[c];
            out.rewards[t].at(b, 0) = ep.rewards[start + t];
        }
    }
    return out;
}

}  // namespace lpln::agentloop
