#include "lpln/planner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "lpln/behavior.hpp"

namespace lpln::planner {

namespace {

Array tile_feature_row(const Array& f, int n) {  // [1,F] -> [n,F]
    const int F = f.cols();
    Array out({n, F});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < F; ++c) out.at(r, c) = f[c];
    return out;
}

Array row_as_action(const Array& m, int row) {  // [C,A] row -> [1,A]
    const int A = m.cols();
    Array out({1, A});
    for (int c = 0; c < A; ++c) out[c] = m.at(row, c);
    return out;
}

void require_ctx(const PlannerContext& ctx) {
    if (!ctx.dynamics || !ctx.policy || !ctx.value)
        throw std::invalid_argument("planner context is incomplete");
}

// Policy-sampled edge fan-out with uniform priors (fixed-children mode).
void attach_policy_edges(SearchNode& node, const PlannerContext& ctx,
                         const PlannerConfig& cfg, RngStream& rng) {
    const int K = cfg.fixed_children;
    if (K <= 0) throw std::invalid_argument("fixed_children must be positive");
    const int A = ctx.dynamics->action_dim();
    Array feats = tile_feature_row(ctx.dynamics->features(node.state), K);
    Array actions = ctx.policy->sample(feats, normal_rows({K, A}, rng));
    node.edges.reserve(K);
    for (int j = 0; j < K; ++j) {
        Edge e;
        e.action = row_as_action(actions, j);
        e.stats.P = 1.0 / K;
        node.edges.push_back(std::move(e));
    }
}

}  // namespace

PlanMode parse_mode(const std::string& s) {
    if (s == "dreamer") return PlanMode::dreamer;
    if (s == "rollout") return PlanMode::rollout;
    if (s == "mcts-pw") return PlanMode::mcts_pw;
    if (s == "mcts-fixed") return PlanMode::mcts_fixed;
    throw std::invalid_argument("unknown plan mode: " + s);
}

std::string mode_name(PlanMode m) {
    switch (m) {
        case PlanMode::dreamer: return "dreamer";
        case PlanMode::rollout: return "rollout";
        case PlanMode::mcts_pw: return "mcts-pw";
        case PlanMode::mcts_fixed: return "mcts-fixed";
    }
    return "unknown";
}

double normalize_q(double q, const MinMaxBounds& bounds) {
    if (bounds.degenerate()) return q;
    return (q - bounds.min_q) / (bounds.max_q - bounds.min_q);
}

int puct_select(const SearchNode& node, const MinMaxBounds& bounds,
                const PlannerConfig& cfg) {
    if (node.edges.empty()) throw std::logic_error("puct_select: node has no edges");
    const double sqrt_n = std::sqrt(static_cast<double>(node.n));
    const double explore = cfg.c1 + std::log((node.n + cfg.c2 + 1.0) / cfg.c2);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(node.edges.size()); ++i) {
        const EdgeStats& st = node.edges[i].stats;
        const double qbar = st.N == 0 ? 0.0 : normalize_q(st.Q, bounds);
        const double score = qbar + st.P * (sqrt_n / (1.0 + st.N)) * explore;
        if (score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

bool widen_check(const SearchNode& node, const PlannerConfig& cfg) {
    if (node.edges.empty()) return true;
    return static_cast<double>(node.edges.size()) <
           cfg.c_pw * std::pow(static_cast<double>(node.n), cfg.alpha);
}

int widen_node(SearchNode& node, const PlannerContext& ctx, const PlannerConfig& cfg,
               RngStream& rng) {
    require_ctx(ctx);
    const int A = ctx.dynamics->action_dim();
    Array feats = ctx.dynamics->features(node.state);
    Edge e;
    e.action = ctx.policy->sample(feats, normal_rows({1, A}, rng));
    node.edges.push_back(std::move(e));
    const double p = 1.0 / static_cast<double>(node.edges.size());
    for (Edge& ed : node.edges) ed.stats.P = p;
    return static_cast<int>(node.edges.size()) - 1;
}

void expand_leaf(SearchNode& parent, int edge_index, const PlannerContext& ctx,
                 const PlannerConfig& cfg, RngStream& rng) {
    require_ctx(ctx);
    if (edge_index < 0 || edge_index >= static_cast<int>(parent.edges.size()))
        throw std::out_of_range("expand_leaf: edge index out of range");
    Edge& e = parent.edges[edge_index];
    if (e.stats.expanded) throw std::logic_error("expand_leaf: edge already expanded");
    Array nz = normal_rows({1, ctx.dynamics->noise_dim()}, rng);
    LatentState child = ctx.dynamics->prior_step(parent.state, e.action, nz);
    e.stats.R = ctx.dynamics->reward_mean(child)[0];
    e.stats.S = child;
    e.stats.expanded = true;
    e.child = std::make_unique<SearchNode>();
    e.child->state = std::move(child);
    if (cfg.mode == PlanMode::mcts_fixed) attach_policy_edges(*e.child, ctx, cfg, rng);
}

void backup_path(const std::vector<std::pair<SearchNode*, int>>& path,
                 double leaf_value, double gamma, MinMaxBounds& bounds,
                 std::vector<double>* g_out) {
    const int l = static_cast<int>(path.size());
    if (l == 0) throw std::invalid_argument("backup_path: empty path");
    // G^l bootstraps from the leaf; edge k's own child reward enters G^(k-1).
    std::vector<double> G(l + 1);
    G[l] = leaf_value;
    for (int k = l - 1; k >= 0; --k) {
        const EdgeStats& st = path[k].first->edges[path[k].second].stats;
        G[k] = st.R + gamma * G[k + 1];
    }
    for (int k = l; k >= 1; --k) {
        EdgeStats& st = path[k - 1].first->edges[path[k - 1].second].stats;
        st.Q = (st.N * st.Q + G[k]) / (st.N + 1);
        st.N += 1;
        path[k - 1].first->n += 1;
        bounds.update(st.Q);
    }
    if (g_out) *g_out = std::move(G);
}

std::string SearchTrace::to_lines() const {
    std::ostringstream os;
    os << std::setprecision(17);
    for (const Sim& s : sims) {
        os << "sim " << s.index << " path";
        for (int e : s.path) os << ' ' << e;
        os << " g";
        for (double g : s.g) os << ' ' << g;
        os << " leaf " << s.leaf_value << '\n';
    }
    os << "chosen";
    for (std::size_t i = 0; i < chosen_action.size(); ++i) os << ' ' << chosen_action[i];
    os << '\n';
    return os.str();
}

Array rollout_plan(const PlannerContext& ctx, const LatentState& root,
                   const PlannerConfig& cfg, RngStream& rng, RolloutTrace* trace) {
    require_ctx(ctx);
    if (root.batch() != 1) throw std::invalid_argument("rollout_plan: root must be batch 1");
    const int A = ctx.dynamics->action_dim();
    const int P = cfg.proposal_candidates;
    const int U = cfg.uniform_candidates;
    const int C = P + U;
    if (C <= 0) throw std::invalid_argument("rollout_plan: no candidates configured");
    if (cfg.rollout_depth < 0)
        throw std::invalid_argument("rollout_plan: depth must be >= 0");

    Array root_feats = ctx.dynamics->features(root);  // [1,F]
    Array cands({C, A});
    if (P > 0) {
        Array sampled = ctx.policy->sample(tile_feature_row(root_feats, P),
                                           normal_rows({P, A}, rng));
        for (int r = 0; r < P; ++r)
            for (int c = 0; c < A; ++c) cands.at(r, c) = sampled.at(r, c);
    }
    for (int r = P; r < C; ++r)
        for (int c = 0; c < A; ++c) cands.at(r, c) = rng.uniform(-1.0, 1.0);

    // All candidates advance as one batch; per-row noise keeps this equal to
    // stepping them one at a time.
    LatentState s1 = ctx.dynamics->prior_step(tile_rows(root, C), cands,
                                              normal_rows({C, ctx.dynamics->noise_dim()}, rng));
    Array r1 = ctx.dynamics->reward_mean(s1);  // {C}

    behavior::ImaginedTrajectory cont;
    cont.gamma = cfg.gamma;
    cont.lambda = cfg.lambda;
    LatentState cur = s1;
    Array feats = ctx.dynamics->features(cur);
    cont.values.push_back(ctx.value->values(feats));
    for (int d = 0; d < cfg.rollout_depth; ++d) {
        Array a = ctx.policy->mode(feats);
        cur = ctx.dynamics->prior_step(cur, a,
                                       normal_rows({C, ctx.dynamics->noise_dim()}, rng));
        cont.rewards.push_back(ctx.dynamics->reward_mean(cur));
        feats = ctx.dynamics->features(cur);
        cont.values.push_back(ctx.value->values(feats));
    }

    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(C);
    for (int c = 0; c < C; ++c) {
        scores[c] = r1[c] + cfg.gamma * behavior::lambda_return(cont, 0, c);
        if (scores[c] > best_score) {
            best_score = scores[c];
            best = c;
        }
    }
    if (trace) {
        trace->candidates = cands;
        trace->scores = scores;
        trace->chosen = best;
    }
    return row_as_action(cands, best);
}

Array mcts_plan(const PlannerContext& ctx, const LatentState& root,
                const PlannerConfig& cfg, RngStream& rng, SearchTrace* trace,
                std::unique_ptr<SearchNode>* tree_out) {
    require_ctx(ctx);
    if (root.batch() != 1) throw std::invalid_argument("mcts_plan: root must be batch 1");
    if (cfg.mode != PlanMode::mcts_pw && cfg.mode != PlanMode::mcts_fixed)
        throw std::invalid_argument("mcts_plan: mode must be mcts-pw or mcts-fixed");
    if (cfg.simulations <= 0)
        throw std::invalid_argument("mcts_plan: simulations must be positive");

    auto root_node = std::make_unique<SearchNode>();
    root_node->state = root;
    MinMaxBounds bounds;
    if (cfg.mode == PlanMode::mcts_fixed) attach_policy_edges(*root_node, ctx, cfg, rng);

    for (int sim = 0; sim < cfg.simulations; ++sim) {
        SearchTrace::Sim ts;
        ts.index = sim;
        std::vector<std::pair<SearchNode*, int>> path;
        SearchNode* cur = root_node.get();
        while (true) {
            if (cfg.mode == PlanMode::mcts_pw && widen_check(*cur, cfg)) {
                int ei = widen_node(*cur, ctx, cfg, rng);
                path.emplace_back(cur, ei);
                expand_leaf(*cur, ei, ctx, cfg, rng);
                ts.expanded_action = cur->edges[ei].action;
                break;
            }
            int ei = puct_select(*cur, bounds, cfg);
            path.emplace_back(cur, ei);
            Edge& e = cur->edges[ei];
            if (!e.stats.expanded) {
                expand_leaf(*cur, ei, ctx, cfg, rng);
                ts.expanded_action = e.action;
                break;
            }
            cur = e.child.get();
        }
        SearchNode* leaf = path.back().first->edges[path.back().second].child.get();
        double v = ctx.value->values(ctx.dynamics->features(leaf->state))[0];
        backup_path(path, v, cfg.gamma, bounds, &ts.g);
        ts.leaf_value = v;
        for (const auto& [node, ei] : path) ts.path.push_back(ei);
        if (trace) trace->sims.push_back(std::move(ts));
    }

    int best = 0;
    for (int i = 1; i < static_cast<int>(root_node->edges.size()); ++i) {
        const EdgeStats& a = root_node->edges[i].stats;
        const EdgeStats& b = root_node->edges[best].stats;
        if (a.N > b.N || (a.N == b.N && a.Q > b.Q)) best = i;
    }
    Array action = root_node->edges[best].action;
    if (trace) trace->chosen_action = action;
    if (tree_out) *tree_out = std::move(root_node);
    return action;
}

Array add_exploration_noise(const Array& action, double noise_std, RngStream& rng) {
    Array out(action.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(action[i] + noise_std * rng.normal(), -1.0, 1.0);
    return out;
}

Array plan(const PlannerContext& ctx, const LatentState& root, const PlannerConfig& cfg,
           RngStream& rng) {
    require_ctx(ctx);
    switch (cfg.mode) {
        case PlanMode::dreamer:
            return ctx.policy->mode(ctx.dynamics->features(root));
        case PlanMode::rollout:
            return rollout_plan(ctx, root, cfg, rng);
        case PlanMode::mcts_pw:
        case PlanMode::mcts_fixed:
            return mcts_plan(ctx, root, cfg, rng);
    }
    throw std::logic_error("plan: unreachable mode");
}

}  // namespace lpln::planner
