#pragma once

// Per-episode metrics CSV. Values print with %.17g so files round-trip
// exactly and fixed-seed runs can be compared byte for byte.

#include <fstream>
#include <string>
#include <vector>

namespace lpln::agentloop {

inline constexpr const char* kMetricsHeader =
    "env_step,episode_return,J_O,J_R,KL,actor_objective,critic_loss,plan_time_ms,wall_clock_s";

struct MetricsRow {
    long env_step = 0;
    double episode_return = 0.0;
    double j_o = 0.0;
    double j_r = 0.0;
    double kl = 0.0;
    double actor_objective = 0.0;
    double critic_loss = 0.0;
    double plan_time_ms = 0.0;
    double wall_clock_s = 0.0;
};

class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);  // truncates, writes header

    void append(const MetricsRow& row);  // one line, flushed immediately

private:
    std::ofstream out_;
    long last_step_ = -1;  // env_step must be monotone
};

std::vector<MetricsRow> read_metrics(const std::string& path);  // validates header

std::string format_row(const MetricsRow& row);

}  // namespace lpln::agentloop
