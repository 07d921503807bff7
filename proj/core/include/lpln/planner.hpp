#pragma once

// Decision-time planning over any dynamics behind the latent-model
// interface: batched rollout search, and tree search with either progressive
// widening or a fixed child set. One tree per decision, mutated
// single-threaded; batched candidate evaluation must equal sequential
// evaluation row for row.

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "lpln/array.hpp"
#include "lpln/model.hpp"
#include "lpln/rng.hpp"

namespace lpln::planner {

enum class PlanMode { dreamer, rollout, mcts_pw, mcts_fixed };

PlanMode parse_mode(const std::string& s);  // throws on unknown mode
std::string mode_name(PlanMode m);

struct PlannerConfig {
    PlanMode mode = PlanMode::dreamer;
    int simulations = 50;
    int proposal_candidates = 100;
    int uniform_candidates = 50;
    int rollout_depth = 10;
    int fixed_children = 20;
    double c1 = 1.25;
    double c2 = 19652.0;
    double c_pw = 1.0;
    double alpha = 0.5;
    double noise_std = 0.3;
    double gamma = 0.99;
    double lambda = 0.95;
};

struct PlannerContext {
    const DynamicsView* dynamics = nullptr;
    const PolicyView* policy = nullptr;
    const ValueView* value = nullptr;
};

struct EdgeStats {
    int N = 0;
    double Q = 0.0;
    double P = 0.0;
    double R = 0.0;  // reward of the child state; valid once expanded
    LatentState S;   // child state; valid once expanded
    bool expanded = false;
};

struct SearchNode;

struct Edge {
    Array action;
    EdgeStats stats;
    std::unique_ptr<SearchNode> child;  // present iff stats.expanded
};

struct SearchNode {
    LatentState state;
    std::vector<Edge> edges;
    int n = 0;  // total visits through this node's edges
};

struct MinMaxBounds {
    double min_q = std::numeric_limits<double>::infinity();
    double max_q = -std::numeric_limits<double>::infinity();

    void update(double q) {
        if (q < min_q) min_q = q;
        if (q > max_q) max_q = q;
    }
    bool degenerate() const { return !(max_q > min_q); }
};

// Min-max rescaling into [0,1]; with degenerate or untouched bounds the raw
// value passes through.
double normalize_q(double q, const MinMaxBounds& bounds);

// Upper-confidence pick over the node's edges. Unvisited edges contribute
// value 0; ties resolve to the lowest index. Throws on a node with no edges.
int puct_select(const SearchNode& node, const MinMaxBounds& bounds,
                const PlannerConfig& cfg);

// True when the node should grow a new child: edge count still below
// c_pw * n^alpha, with a node that has no edges always growing its first.
bool widen_check(const SearchNode& node, const PlannerConfig& cfg);

// Appends a policy-sampled edge to the node and resets all priors to the
// uniform value over the enlarged edge set. Progressive-widening mode only.
int widen_node(SearchNode& node, const PlannerContext& ctx, const PlannerConfig& cfg,
               RngStream& rng);

// Expands edge_index: child state and reward from one dynamics step. In
// fixed-children mode the new node gets fixed_children policy-sampled edges
// with uniform priors; in widening mode it gets none. Throws if already
// expanded.
void expand_leaf(SearchNode& parent, int edge_index, const PlannerContext& ctx,
                 const PlannerConfig& cfg, RngStream& rng);

// One backup along path (outermost edge first). Computes the discounted
// bootstrapped return G^k at every depth, updates each edge's running mean Q
// and visit count, its parent's visit total, and the bounds with every new
// Q. g_out, when given, receives G^0..G^l.
void backup_path(const std::vector<std::pair<SearchNode*, int>>& path,
                 double leaf_value, double gamma, MinMaxBounds& bounds,
                 std::vector<double>* g_out = nullptr);

struct SearchTrace {
    struct Sim {
        int index = 0;
        std::vector<int> path;    // edge indices, root first
        std::vector<double> g;    // G^0..G^l of this simulation
        double leaf_value = 0.0;
        Array expanded_action;    // action of the edge expanded this simulation
    };
    std::vector<Sim> sims;
    Array chosen_action;

    std::string to_lines() const;  // one line per simulation plus the choice
};

struct RolloutTrace {
    Array candidates;            // [C, A]
    std::vector<double> scores;  // C entries
    int chosen = -1;
};

// Scores proposal-policy and uniform candidates by one-step reward plus the
// discounted lambda-return of a policy-mode continuation, all candidates
// stepped as one batch. Returns the argmax candidate.
Array rollout_plan(const PlannerContext& ctx, const LatentState& root,
                   const PlannerConfig& cfg, RngStream& rng,
                   RolloutTrace* trace = nullptr);

// Tree search driven by cfg.mode (mcts_pw or mcts_fixed). Returns the action
// of the most-visited root edge, ties broken by higher Q.
Array mcts_plan(const PlannerContext& ctx, const LatentState& root,
                const PlannerConfig& cfg, RngStream& rng,
                SearchTrace* trace = nullptr,
                std::unique_ptr<SearchNode>* tree_out = nullptr);

// Additive Gaussian exploration noise, clipped back into [-1, 1].
Array add_exploration_noise(const Array& action, double noise_std, RngStream& rng);

// Mode dispatch: dreamer takes the policy mode action at the root, the
// others run their search.
Array plan(const PlannerContext& ctx, const LatentState& root,
           const PlannerConfig& cfg, RngStream& rng);

}  // namespace lpln::planner
