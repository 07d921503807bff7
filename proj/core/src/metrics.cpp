#include "lpln/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lpln::agentloop {

namespace {

std::string g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string format_row(const MetricsRow& r) {
    std::string out = std::to_string(r.env_step);
    for (double v : {r.episode_return, r.j_o, r.j_r, r.kl, r.actor_objective, r.critic_loss,
                     r.plan_time_ms, r.wall_clock_s}) {
        out += ',';
        out += g(v);
    }
    return out;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
    out_ << kMetricsHeader << '\n';
    out_.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
    if (row.env_step < last_step_)
        throw std::logic_error("metrics env_step must be monotone");
    last_step_ = row.env_step;
    out_ << format_row(row) << '\n';
    out_.flush();
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw std::runtime_error("metrics file has unexpected header: " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        MetricsRow r;
        char comma;
        double step;
        if (!(ss >> step)) throw std::runtime_error("bad metrics row: " + line);
        r.env_step = static_cast<long>(step);
        for (double* f : {&r.episode_return, &r.j_o, &r.j_r, &r.kl, &r.actor_objective,
                          &r.critic_loss, &r.plan_time_ms, &r.wall_clock_s}) {
            if (!(ss >> comma >> *f)) throw std::runtime_error("bad metrics row: " + line);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace lpln::agentloop
