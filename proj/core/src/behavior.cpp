#include "lpln/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "lpln/ops.hpp"

namespace lpln::behavior {

using diffmath::AdamConfig;
using diffmath::Tape;
using diffmath::TapeBinding;
using diffmath::Var;
using namespace diffmath;  // ops

namespace {

Array column_to_flat(const Array& v) {  // [B,1] -> {B}
    Array out({v.rows()});
    for (int b = 0; b < v.rows(); ++b) out[b] = v.at(b, 0);
    return out;
}

bool all_finite(const Array& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

}  // namespace

double k_step_value(const ImaginedTrajectory& traj, int tau, int k, int row) {
    const int H = traj.horizon();
    if (k < 1) throw std::invalid_argument("k_step_value: k must be >= 1");
    if (tau < 0 || tau > H) throw std::out_of_range("k_step_value: tau out of range");
    if (row < 0 || row >= traj.batch()) throw std::out_of_range("k_step_value: row out of range");
    const int h = std::min(tau + k, H);
    double acc = 0.0;
    double disc = 1.0;
    for (int n = tau; n < h; ++n) {
        acc += disc * traj.rewards[n][row];
        disc *= traj.gamma;
    }
    return acc + disc * traj.values[h][row];
}

double lambda_return(const ImaginedTrajectory& traj, int tau, int row) {
    const int H = traj.horizon();
    if (tau < 0 || tau > H) throw std::out_of_range("lambda_return: tau out of range");
    const int K = H - tau;  // bootstrap horizons available from tau
    if (K == 0) return traj.values[tau][row];
    const double lam = traj.lambda;
    double acc = 0.0;
    double w = 1.0;  // lambda^(n-1), so the lambda = 0 limit keeps the n = 1 term
    for (int n = 1; n < K; ++n) {
        acc += (1.0 - lam) * w * k_step_value(traj, tau, n, row);
        w *= lam;
    }
    return acc + w * k_step_value(traj, tau, K, row);
}

// Views live at namespace scope so the friend declarations apply.

class BehaviorPolicyView final : public PolicyView {
public:
    explicit BehaviorPolicyView(const Behavior* b) : b_(b) {}
    int action_dim() const override { return b_->config().action_dim; }
    Array mode(const Array& feats) const override {
        Array zero({feats.rows(), b_->config().action_dim});
        return b_->sample_action(feats, zero);
    }
    Array sample(const Array& feats, const Array& eps) const override {
        return b_->sample_action(feats, eps);
    }

private:
    const Behavior* b_;
};

class BehaviorValueView final : public ValueView {
public:
    explicit BehaviorValueView(const Behavior* b) : b_(b) {}
    Array values(const Array& feats) const override {
        b_->ensure_scratch();
        Tape& t = *b_->scratch_;
        Var v = b_->value_of(t, *b_->scratch_value_, t.constant(feats));
        Array out = column_to_flat(t.val(v));
        b_->drop_scratch_nodes();
        return out;
    }

private:
    const Behavior* b_;
};

Behavior::Behavior(BehaviorConfig cfg, RngStream init_rng) : cfg_(cfg) {
    if (cfg.feature_dim <= 0 || cfg.action_dim <= 0)
        throw std::invalid_argument("behavior needs positive feature/action dims");
    if (cfg.horizon < 0) throw std::invalid_argument("behavior horizon must be >= 0");
    auto build = [&](diffmath::ParameterSet& set, const std::string& prefix, int out_dim,
                     bool with_std, RngStream rng) {
        set.add(prefix + "/h1_W", diffmath::glorot_uniform(cfg.feature_dim, cfg.hidden, rng));
        set.add(prefix + "/h1_b", Array({cfg.hidden}));
        set.add(prefix + "/h2_W", diffmath::glorot_uniform(cfg.hidden, cfg.hidden, rng));
        set.add(prefix + "/h2_b", Array({cfg.hidden}));
        set.add(prefix + (with_std ? "/mean_W" : "/out_W"),
                diffmath::glorot_uniform(cfg.hidden, out_dim, rng));
        set.add(prefix + (with_std ? "/mean_b" : "/out_b"), Array({out_dim}));
        if (with_std) {
            set.add(prefix + "/std_W", diffmath::glorot_uniform(cfg.hidden, out_dim, rng));
            set.add(prefix + "/std_b", Array({out_dim}));
        }
    };
    build(policy_, "policy", cfg.action_dim, true, init_rng.child("policy"));
    build(value_, "value", 1, false, init_rng.child("value"));
    policy_view_ = std::make_unique<BehaviorPolicyView>(this);
    value_view_ = std::make_unique<BehaviorValueView>(this);
}

Var Behavior::policy_stats(Tape& t, TapeBinding& bind, Var feat, Var* stddev_out) const {
    Var h1 = elu(affine(feat, bind["policy/h1_W"], bind["policy/h1_b"]));
    Var h2 = elu(affine(h1, bind["policy/h2_W"], bind["policy/h2_b"]));
    if (stddev_out)
        *stddev_out =
            add_scalar(softplus(affine(h2, bind["policy/std_W"], bind["policy/std_b"])), 1e-4);
    return affine(h2, bind["policy/mean_W"], bind["policy/mean_b"]);
}

Var Behavior::value_of(Tape& t, TapeBinding& bind, Var feat) const {
    Var h1 = elu(affine(feat, bind["value/h1_W"], bind["value/h1_b"]));
    Var h2 = elu(affine(h1, bind["value/h2_W"], bind["value/h2_b"]));
    return affine(h2, bind["value/out_W"], bind["value/out_b"]);  // [B,1]
}

void Behavior::ensure_scratch() const {
    const std::int64_t ver = (policy_.version() << 32) ^ value_.version();
    if (scratch_ && scratch_version_ == ver) return;
    scratch_ = std::make_unique<Tape>(false);
    scratch_policy_ = std::make_unique<TapeBinding>(
        *scratch_, const_cast<diffmath::ParameterSet&>(policy_), false);
    scratch_value_ = std::make_unique<TapeBinding>(
        *scratch_, const_cast<diffmath::ParameterSet&>(value_), false);
    scratch_mark_ = scratch_->size();
    scratch_version_ = ver;
}

void Behavior::drop_scratch_nodes() const { scratch_->truncate(scratch_mark_); }

Array Behavior::sample_action(const Array& features, const Array& noise) const {
    ensure_scratch();
    Tape& t = *scratch_;
    Var sd;
    Var mean = policy_stats(t, *scratch_policy_, t.constant(features), &sd);
    const Array& m = t.val(mean);
    const Array& s = t.val(sd);
    if (!m.same_shape(noise))
        throw std::invalid_argument("sample_action: noise shape must match [B, action_dim]");
    Array out(m.shape());
    const double rail = 1.0 - 1e-9;  // keep samples strictly inside (-1, 1)
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(std::tanh(m[i] + s[i] * noise[i]), -rail, rail);
    drop_scratch_nodes();
    return out;
}

ImaginedTrajectory Behavior::imagine_rollout(const ImaginationDynamics& dyn,
                                             const LatentState& start, int horizon,
                                             RngStream& rng) const {
    if (horizon < 0) throw std::invalid_argument("imagine_rollout: horizon must be >= 0");
    ImaginedTrajectory traj;
    traj.gamma = cfg_.gamma;
    traj.lambda = cfg_.lambda;
    const int B = start.batch();
    Tape t(false);
    auto bd = dyn.bind(t);
    LatentVars s = bd->lift(start);
    traj.states.push_back(start);
    Array feats = t.val(bd->features(s));
    traj.values.push_back(value_view_->values(feats));
    for (int tau = 0; tau < horizon; ++tau) {
        Array a = sample_action(feats, normal_rows({B, cfg_.action_dim}, rng));
        Array nz = normal_rows({B, dyn.noise_dim()}, rng);
        s = bd->step(s, t.constant(a), nz);
        LatentState ns;
        ns.deter = t.val(s.deter);
        if (s.stoch.valid()) ns.stoch = t.val(s.stoch);
        traj.states.push_back(ns);
        traj.actions.push_back(std::move(a));
        traj.rewards.push_back(column_to_flat(t.val(bd->reward(s))));
        feats = t.val(bd->features(s));
        traj.values.push_back(value_view_->values(feats));
    }
    return traj;
}

Behavior::ImaginationRun Behavior::imagine_for_training(const ImaginationDynamics& dyn,
                                                        const LatentState& start,
                                                        RngStream& rng) {
    ImaginationRun run;
    run.tape = std::make_unique<Tape>(true);
    Tape& t = *run.tape;
    run.policy_bind = std::make_unique<TapeBinding>(t, policy_, true);
    TapeBinding vbind(t, value_, false);  // critic enters the actor graph as constants
    auto bd = dyn.bind(t);

    const int B = start.batch();
    const int H = cfg_.horizon;
    run.numeric.gamma = cfg_.gamma;
    run.numeric.lambda = cfg_.lambda;

    std::vector<Var> rewards_v;  // H entries, [B,1]
    std::vector<Var> values_v;   // H+1 entries, [B,1]
    LatentVars s = bd->lift(start);
    Var feat = bd->features(s);
    values_v.push_back(value_of(t, vbind, feat));
    run.numeric.states.push_back(start);
    run.features.push_back(t.val(feat));

    for (int tau = 0; tau < H; ++tau) {
        Var sd;
        Var mean = policy_stats(t, *run.policy_bind, feat, &sd);
        Var a = tanh_op(reparam_sample(mean, sd, normal_rows({B, cfg_.action_dim}, rng)));
        Array nz = normal_rows({B, dyn.noise_dim()}, rng);
        s = bd->step(s, a, nz);
        feat = bd->features(s);
        rewards_v.push_back(bd->reward(s));
        values_v.push_back(value_of(t, vbind, feat));
        run.numeric.actions.push_back(t.val(a));
        LatentState ns;
        ns.deter = t.val(s.deter);
        if (s.stoch.valid()) ns.stoch = t.val(s.stoch);
        run.numeric.states.push_back(ns);
        run.features.push_back(t.val(feat));
    }

    // Mixed-horizon return recursion; R[H] bootstraps straight from the critic.
    std::vector<Var> R(H + 1);
    R[H] = values_v[H];
    for (int tau = H - 1; tau >= 0; --tau) {
        Var mix = add(scale(values_v[tau + 1], cfg_.gamma * (1.0 - cfg_.lambda)),
                      scale(R[tau + 1], cfg_.gamma * cfg_.lambda));
        R[tau] = add(rewards_v[tau], mix);
    }
    Var total;
    for (int tau = 0; tau <= H; ++tau)
        total = total.valid() ? add(total, sum_all(R[tau])) : sum_all(R[tau]);
    run.objective = scale(total, 1.0 / (static_cast<double>(B) * (H + 1)));

    for (const Var& r : rewards_v) run.numeric.rewards.push_back(column_to_flat(t.val(r)));
    for (const Var& v : values_v) run.numeric.values.push_back(column_to_flat(t.val(v)));
    run.finite = std::isfinite(t.val(run.objective)[0]);
    for (const Array& f : run.features)
        if (!all_finite(f)) run.finite = false;
    return run;
}

BehaviorTrainStats Behavior::actor_update(ImaginationRun& run) {
    BehaviorTrainStats st;
    st.actor_objective = run.tape->val(run.objective)[0];
    if (!run.finite) {
        st.skipped = true;
        std::cerr << "[incident] imagined objective non-finite, actor update skipped\n";
        return st;
    }
    run.tape->backward(scale(run.objective, -1.0));  // ascend the objective
    AdamConfig ac;
    ac.lr = cfg_.actor_lr;
    ac.clip = cfg_.grad_clip;
    st.actor_grad_norm = run.policy_bind->adam_step(ac);
    if (!std::isfinite(st.actor_grad_norm)) {
        st.skipped = true;
        std::cerr << "[incident] actor gradient non-finite, update skipped\n";
    }
    return st;
}

BehaviorTrainStats Behavior::critic_update(const ImaginationRun& run) {
    BehaviorTrainStats st;
    if (!run.finite) {
        st.skipped = true;
        std::cerr << "[incident] imagined trajectory non-finite, critic update skipped\n";
        return st;
    }
    const int H = run.numeric.horizon();
    const int B = run.numeric.batch();
    const int F = run.features[0].cols();
    Array feats({(H + 1) * B, F});
    Array targets({(H + 1) * B, 1});
    for (int tau = 0; tau <= H; ++tau) {
        const Array& f = run.features[tau];
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < F; ++c) feats.at(tau * B + b, c) = f.at(b, c);
            targets[tau * B + b] = lambda_return(run.numeric, tau, b);
        }
    }
    Tape t(true);
    TapeBinding bind(t, value_, true);
    Var pred = value_of(t, bind, t.constant(std::move(feats)));
    Var d = sub(pred, t.constant(std::move(targets)));
    Var loss = scale(mean_all(mul(d, d)), 0.5);
    st.critic_loss = t.val(loss)[0];
    if (!std::isfinite(st.critic_loss)) {
        st.skipped = true;
        std::cerr << "[incident] critic loss non-finite, update skipped\n";
        return st;
    }
    t.backward(loss);
    AdamConfig ac;
    ac.lr = cfg_.critic_lr;
    ac.clip = cfg_.grad_clip;
    st.critic_grad_norm = bind.adam_step(ac);
    if (!std::isfinite(st.critic_grad_norm)) {
        st.skipped = true;
        std::cerr << "[incident] critic gradient non-finite, update skipped\n";
    }
    return st;
}

BehaviorTrainStats Behavior::train_step(const ImaginationDynamics& dyn,
                                        const LatentState& start, RngStream& rng) {
    ImaginationRun run = imagine_for_training(dyn, start, rng);
    BehaviorTrainStats st = actor_update(run);
    BehaviorTrainStats cs = critic_update(run);
    st.critic_loss = cs.critic_loss;
    st.critic_grad_norm = cs.critic_grad_norm;
    st.skipped = st.skipped || cs.skipped;
    return st;
}

}  // namespace lpln::behavior
