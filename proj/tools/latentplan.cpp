// Command-line front end: train / eval / plan-bench / plot.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lpln/agent.hpp"
#include "lpln/checkpoint.hpp"
#include "lpln/config.hpp"
#include "lpln/metrics.hpp"

namespace {

using namespace lpln;

int cmd_train(const std::string& config_path, const CLI::Option* seed_opt, std::uint64_t seed,
              const std::string& mode) {
    agentloop::TrainConfig cfg = agentloop::load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (!mode.empty()) cfg.mode = mode;
    agentloop::validate(cfg);
    agentloop::run_experiment(cfg);
    std::cout << "run complete: " << cfg.run_dir << "/metrics.csv\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, int episodes) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(checkpoint_path).parent_path();
    if (dir.empty()) dir = ".";
    const std::string config_path = (dir / "config.txt").string();

    agentloop::TrainConfig cfg = agentloop::load_config(config_path);
    agentloop::CheckpointMeta meta = agentloop::read_checkpoint_meta(checkpoint_path);
    if (meta.config_hash != agentloop::config_hash(cfg))
        throw std::runtime_error("checkpoint was produced under a different config than " +
                                 config_path);

    agentloop::Agent agent(cfg);
    agent.load(checkpoint_path);
    std::vector<double> returns = agentloop::run_eval(agent, episodes, cfg.seed);

    double sum = 0.0;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        std::printf("episode %zu return %.17g\n", i, returns[i]);
        sum += returns[i];
    }
    std::printf("mean_return %.17g over %zu episodes\n",
                returns.empty() ? 0.0 : sum / static_cast<double>(returns.size()),
                returns.size());
    return 0;
}

int cmd_plan_bench(const std::string& mode_name, const std::string& env, int episodes,
                   std::uint64_t seed) {
    planner::PlanMode mode = planner::parse_mode(mode_name);
    agentloop::PlanBenchResult r = agentloop::plan_bench(env, mode, episodes, seed);
    std::printf("env %s mode %s episodes %d\n", env.c_str(), mode_name.c_str(), episodes);
    std::printf("random_mean %.17g\n", r.random_mean);
    std::printf("planner_mean %.17g\n", r.planner_mean);
    std::printf("plan_ms_per_decision %.17g over %ld decisions\n", r.mean_plan_ms, r.decisions);
    return 0;
}

// One two-column file per metric next to the input: "<column>.dat" with
// "env_step value" rows, plottable as-is.
int cmd_plot(const std::string& metrics_path) {
    namespace fs = std::filesystem;
    std::vector<agentloop::MetricsRow> rows = agentloop::read_metrics(metrics_path);
    fs::path dir = fs::path(metrics_path).parent_path();
    if (dir.empty()) dir = ".";

    struct Series {
        const char* name;
        double agentloop::MetricsRow::* field;
    };
    const Series series[] = {
        {"episode_return", &agentloop::MetricsRow::episode_return},
        {"J_O", &agentloop::MetricsRow::j_o},
        {"J_R", &agentloop::MetricsRow::j_r},
        {"KL", &agentloop::MetricsRow::kl},
        {"actor_objective", &agentloop::MetricsRow::actor_objective},
        {"critic_loss", &agentloop::MetricsRow::critic_loss},
        {"plan_time_ms", &agentloop::MetricsRow::plan_time_ms},
        {"wall_clock_s", &agentloop::MetricsRow::wall_clock_s},
    };
    for (const Series& s : series) {
        const std::string out_path = (dir / (std::string(s.name) + ".dat")).string();
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        char line[128];
        for (const agentloop::MetricsRow& row : rows) {
            std::snprintf(line, sizeof(line), "%ld %.17g\n", row.env_step, row.*(s.field));
            out << line;
        }
        std::cout << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space world model with decision-time planning"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "run a training experiment");
    std::string config_path;
    std::uint64_t seed = 0;
    std::string mode;
    train->add_option("--config", config_path, "config file (key = value lines)")->required();
    auto* seed_opt = train->add_option("--seed", seed, "override the config seed");
    train->add_option("--mode", mode, "override the planner mode")
        ->check(CLI::IsMember({"dreamer", "rollout", "mcts-pw", "mcts-fixed"}));

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (config.txt beside it)");
    std::string checkpoint_path;
    int episodes = 10;
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--episodes", episodes, "evaluation episodes")->required();

    auto* bench = app.add_subcommand("plan-bench", "planner benchmark on exact dynamics");
    std::string bench_mode;
    std::string bench_env;
    int bench_episodes = 20;
    std::uint64_t bench_seed = 0;
    bench->add_option("--mode", bench_mode, "planner mode")
        ->required()
        ->check(CLI::IsMember({"dreamer", "rollout", "mcts-pw", "mcts-fixed"}));
    bench->add_option("--env", bench_env, "environment name")
        ->required()
        ->check(CLI::IsMember({"pointmass", "pendulum"}));
    bench->add_option("--episodes", bench_episodes, "episodes per arm");
    bench->add_option("--seed", bench_seed, "benchmark seed");

    auto* plot = app.add_subcommand("plot", "emit per-metric series as plain data files");
    std::string metrics_path;
    plot->add_option("--metrics", metrics_path, "metrics.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, seed_opt, seed, mode);
        if (*eval) return cmd_eval(checkpoint_path, episodes);
        if (*bench) return cmd_plan_bench(bench_mode, bench_env, bench_episodes, bench_seed);
        if (*plot) return cmd_plot(metrics_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
