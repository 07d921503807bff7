#include "lpln/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace lpln::agentloop {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// One table drives parsing and serialization so the two cannot diverge.
struct Field {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

long parse_long(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long out;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long out;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
    return out;
}

const std::vector<Field>& fields() {
    auto str = [](std::string TrainConfig::* p) {
        return Field{
            "", [p](TrainConfig& c, const std::string& v) { c.*p = v; },
            [p](const TrainConfig& c) { return c.*p; }};
    };
    auto i32 = [](int TrainConfig::* p) {
        return Field{"",
                     [p](TrainConfig& c, const std::string& v) {
                         c.*p = static_cast<int>(parse_long("", v));
                     },
                     [p](const TrainConfig& c) { return std::to_string(c.*p); }};
    };
    auto i64 = [](long TrainConfig::* p) {
        return Field{"", [p](TrainConfig& c, const std::string& v) { c.*p = parse_long("", v); },
                     [p](const TrainConfig& c) { return std::to_string(c.*p); }};
    };
    auto f64 = [](double TrainConfig::* p) {
        return Field{"",
                     [p](TrainConfig& c, const std::string& v) { c.*p = parse_double("", v); },
                     [p](const TrainConfig& c) { return fmt_double(c.*p); }};
    };
    auto u64 = [](std::uint64_t TrainConfig::* p) {
        return Field{"", [p](TrainConfig& c, const std::string& v) { c.*p = parse_u64("", v); },
                     [p](const TrainConfig& c) { return std::to_string(c.*p); }};
    };
    auto named = [](Field f, const char* name) {
        f.name = name;
        return f;
    };

    static const std::vector<Field> table = {
        named(str(&TrainConfig::env), "env"),
        named(str(&TrainConfig::mode), "mode"),
        named(str(&TrainConfig::run_dir), "run_dir"),
        named(u64(&TrainConfig::seed), "seed"),
        named(i64(&TrainConfig::total_env_steps), "total_env_steps"),
        named(i32(&TrainConfig::seed_episodes), "seed_episodes"),
        named(i32(&TrainConfig::train_every), "train_every"),
        named(i32(&TrainConfig::batch_size), "batch_size"),
        named(i32(&TrainConfig::seq_length), "seq_length"),
        named(i32(&TrainConfig::model_updates), "model_updates"),
        named(i32(&TrainConfig::behavior_updates), "behavior_updates"),
        named(i32(&TrainConfig::episode_length), "episode_length"),
        named(i32(&TrainConfig::action_repeat), "action_repeat"),
        named(i64(&TrainConfig::buffer_capacity), "buffer_capacity"),
        named(i32(&TrainConfig::checkpoint_every), "checkpoint_every"),
        named(i32(&TrainConfig::eval_episodes), "eval_episodes"),
        named(i32(&TrainConfig::model_deter), "model_deter"),
        named(i32(&TrainConfig::model_stoch), "model_stoch"),
        named(i32(&TrainConfig::model_hidden), "model_hidden"),
        named(i32(&TrainConfig::model_embed), "model_embed"),
        named(f64(&TrainConfig::model_lr), "model_lr"),
        named(f64(&TrainConfig::beta), "beta"),
        named(f64(&TrainConfig::grad_clip), "grad_clip"),
        named(i32(&TrainConfig::imagination_horizon), "imagination_horizon"),
        named(f64(&TrainConfig::gamma), "gamma"),
        named(f64(&TrainConfig::lambda), "lambda"),
        named(f64(&TrainConfig::actor_lr), "actor_lr"),
        named(f64(&TrainConfig::critic_lr), "critic_lr"),
        named(i32(&TrainConfig::simulations), "simulations"),
        named(i32(&TrainConfig::proposal_candidates), "proposal_candidates"),
        named(i32(&TrainConfig::uniform_candidates), "uniform_candidates"),
        named(i32(&TrainConfig::rollout_depth), "rollout_depth"),
        named(i32(&TrainConfig::fixed_children), "fixed_children"),
        named(f64(&TrainConfig::c1), "c1"),
        named(f64(&TrainConfig::c2), "c2"),
        named(f64(&TrainConfig::c_pw), "c_pw"),
        named(f64(&TrainConfig::alpha), "alpha"),
        named(f64(&TrainConfig::noise_std), "noise_std"),
    };
    return table;
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        bool known = false;
        for (const Field& f : fields()) {
            if (f.name == key) {
                try {
                    f.set(cfg, value);
                } catch (const std::invalid_argument&) {
                    throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                ": bad value for " + key + ": '" + value + "'");
                }
                known = true;
                break;
            }
        }
        if (!known)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + key + "'");
    }
    validate(cfg);
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const TrainConfig& cfg) {
    std::string out;
    for (const Field& f : fields()) {
        out += f.name;
        out += " = ";
        out += f.get(cfg);
        out += '\n';
    }
    return out;
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a(config_to_text(cfg)); }

void validate(const TrainConfig& cfg) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (cfg.env != "pointmass" && cfg.env != "pendulum") fail("unknown env '" + cfg.env + "'");
    planner::parse_mode(cfg.mode);  // throws on unknown mode
    if (cfg.run_dir.empty()) fail("run_dir must not be empty");
    if (cfg.total_env_steps <= 0) fail("total_env_steps must be positive");
    if (cfg.seed_episodes <= 0) fail("seed_episodes must be positive");
    if (cfg.train_every <= 0) fail("train_every must be positive");
    if (cfg.batch_size <= 0) fail("batch_size must be positive");
    if (cfg.seq_length <= 0) fail("seq_length must be positive");
    if (cfg.model_updates < 0) fail("model_updates must be >= 0");
    if (cfg.behavior_updates < 0) fail("behavior_updates must be >= 0");
    if (cfg.action_repeat <= 0) fail("action_repeat must be positive");
    if (cfg.episode_length <= 0 || cfg.episode_length % cfg.action_repeat != 0)
        fail("episode_length must be a positive multiple of action_repeat");
    if (cfg.buffer_capacity < 0) fail("buffer_capacity must be >= 0");
    if (cfg.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    if (cfg.eval_episodes < 0) fail("eval_episodes must be >= 0");
    if (cfg.model_deter <= 0 || cfg.model_stoch <= 0 || cfg.model_hidden <= 0 ||
        cfg.model_embed <= 0)
        fail("model dimensions must be positive");
    if (cfg.model_lr <= 0 || cfg.actor_lr <= 0 || cfg.critic_lr <= 0)
        fail("learning rates must be positive");
    if (cfg.beta < 0) fail("beta must be >= 0");
    if (cfg.grad_clip < 0) fail("grad_clip must be >= 0");
    if (cfg.imagination_horizon < 0) fail("imagination_horizon must be >= 0");
    if (!(cfg.gamma > 0 && cfg.gamma <= 1)) fail("gamma must be in (0, 1]");
    if (!(cfg.lambda >= 0 && cfg.lambda <= 1)) fail("lambda must be in [0, 1]");
    if (cfg.simulations <= 0) fail("simulations must be positive");
    if (cfg.proposal_candidates < 0 || cfg.uniform_candidates < 0)
        fail("candidate counts must be >= 0");
    if (cfg.proposal_candidates + cfg.uniform_candidates <= 0)
        fail("at least one rollout candidate required");
    if (cfg.rollout_depth < 0) fail("rollout_depth must be >= 0");
    if (cfg.fixed_children <= 0) fail("fixed_children must be positive");
    if (cfg.c2 <= 0) fail("c2 must be positive");
    if (cfg.c_pw <= 0) fail("c_pw must be positive");
    if (!(cfg.alpha > 0 && cfg.alpha <= 1)) fail("alpha must be in (0, 1]");
    if (cfg.noise_std < 0) fail("noise_std must be >= 0");
}

planner::PlannerConfig planner_config(const TrainConfig& cfg) {
    planner::PlannerConfig p;
    p.mode = planner::parse_mode(cfg.mode);
    p.simulations = cfg.simulations;
    p.proposal_candidates = cfg.proposal_candidates;
    p.uniform_candidates = cfg.uniform_candidates;
    p.rollout_depth = cfg.rollout_depth;
    p.fixed_children = cfg.fixed_children;
    p.c1 = cfg.c1;
    p.c2 = cfg.c2;
    p.c_pw = cfg.c_pw;
    p.alpha = cfg.alpha;
    p.noise_std = cfg.noise_std;
    p.gamma = cfg.gamma;
    p.lambda = cfg.lambda;
    return p;
}

}  // namespace lpln::agentloop
