#include "lpln/envs.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

namespace lpln::envs {

namespace {

// Planar point mass pushed by a bounded force toward the origin.
// State (x1, x2, v1, v2); positions integrate the pre-update velocity, so a
// zero-force trajectory drifts at exactly constant velocity.
class PointMassDynamics final : public EnvDynamics {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kForceGain = 2.0;

    int state_dim() const override { return 4; }
    int action_dim() const override { return 2; }
    int obs_dim() const override { return 4; }

    void substep(double* s, const double* a) const override {
        s[0] += kDt * s[2];
        s[1] += kDt * s[3];
        s[2] += kDt * kForceGain * a[0];
        s[3] += kDt * kForceGain * a[1];
    }

    double reward(const double* s) const override {
        return std::exp(-(s[0] * s[0] + s[1] * s[1]));
    }

    void observe(const double* s, double* obs) const override {
        std::memcpy(obs, s, 4 * sizeof(double));
    }

    void reset_state(double* s, RngStream& rng) const override {
        // start at least distance 1 from the goal so the task is never free
        double x1, x2;
        do {
            x1 = rng.uniform(-2.0, 2.0);
            x2 = rng.uniform(-2.0, 2.0);
        } while (x1 * x1 + x2 * x2 < 1.0);
        s[0] = x1;
        s[1] = x2;
        s[2] = rng.uniform(-0.1, 0.1);
        s[3] = rng.uniform(-0.1, 0.1);
    }

    void substep_jacobian(const double* /*s*/, const double* /*a*/, double* Js,
                          double* Ja) const override {
        std::memset(Js, 0, 16 * sizeof(double));
        Js[0 * 4 + 0] = 1.0;
        Js[0 * 4 + 2] = kDt;
        Js[1 * 4 + 1] = 1.0;
        Js[1 * 4 + 3] = kDt;
        Js[2 * 4 + 2] = 1.0;
        Js[3 * 4 + 3] = 1.0;
        std::memset(Ja, 0, 8 * sizeof(double));
        Ja[2 * 2 + 0] = kDt * kForceGain;
        Ja[3 * 2 + 1] = kDt * kForceGain;
    }

    void reward_gradient(const double* s, double* g) const override {
        double r = reward(s);
        g[0] = -2.0 * s[0] * r;
        g[1] = -2.0 * s[1] * r;
        g[2] = 0.0;
        g[3] = 0.0;
    }

    void observe_jacobian(const double* /*s*/, double* Jo) const override {
        std::memset(Jo, 0, 16 * sizeof(double));
        for (int i = 0; i < 4; ++i) Jo[i * 4 + i] = 1.0;
    }
};

// Torque-limited pendulum, angle 0 at the upright position. The torque gain
// sits below the gravity scale so a swing is required from the bottom, which
// keeps the uniform-random baseline pinned near the hanging state.
class PendulumDynamics final : public EnvDynamics {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kGravity = 10.0;  // g/l
    static constexpr double kDamping = 0.5;
    static constexpr double kTorqueGain = 8.0;

    int state_dim() const override { return 2; }
    int action_dim() const override { return 1; }
    int obs_dim() const override { return 3; }

    void substep(double* s, const double* a) const override {
        double alpha = kGravity * std::sin(s[0]) - kDamping * s[1] + kTorqueGain * a[0];
        s[1] += kDt * alpha;
        s[0] += kDt * s[1];  // position uses the updated velocity
    }

    double reward(const double* s) const override { return 0.5 * (1.0 + std::cos(s[0])); }

    void observe(const double* s, double* obs) const override {
        obs[0] = std::cos(s[0]);
        obs[1] = std::sin(s[0]);
        obs[2] = s[1];
    }

    void reset_state(double* s, RngStream& rng) const override {
        s[0] = rng.uniform(-M_PI, M_PI);
        s[1] = rng.uniform(-1.0, 1.0);
    }

    void substep_jacobian(const double* s, const double* /*a*/, double* Js,
                          double* Ja) const override {
        double dadth = kGravity * std::cos(s[0]);
        double dwdw = 1.0 - kDt * kDamping;
        Js[0 * 2 + 0] = 1.0 + kDt * kDt * dadth;
        Js[0 * 2 + 1] = kDt * dwdw;
        Js[1 * 2 + 0] = kDt * dadth;
        Js[1 * 2 + 1] = dwdw;
        Ja[0] = kDt * kDt * kTorqueGain;
        Ja[1] = kDt * kTorqueGain;
    }

    void reward_gradient(const double* s, double* g) const override {
        g[0] = -0.5 * std::sin(s[0]);
        g[1] = 0.0;
    }

    void observe_jacobian(const double* s, double* Jo) const override {
        std::memset(Jo, 0, 6 * sizeof(double));
        Jo[0 * 2 + 0] = -std::sin(s[0]);
        Jo[1 * 2 + 0] = std::cos(s[0]);
        Jo[2 * 2 + 1] = 1.0;
    }
};

void clip_action(const Array& in, double* out, int dim) {
    for (int i = 0; i < dim; ++i) {
        double a = in[i];
        out[i] = a < -1.0 ? -1.0 : (a > 1.0 ? 1.0 : a);
    }
}

}  // namespace

ToyEnv::ToyEnv(std::unique_ptr<EnvDynamics> dyn, EnvSpec spec)
    : dyn_(std::move(dyn)), spec_(std::move(spec)), state_({dyn_->state_dim()}) {
    if (spec_.episode_length <= 0 || spec_.action_repeat <= 0 ||
        spec_.episode_length % spec_.action_repeat != 0)
        throw std::invalid_argument("episode_length must be a positive multiple of action_repeat");
    spec_.obs_dim = dyn_->obs_dim();
    spec_.action_dim = dyn_->action_dim();
}

Array ToyEnv::reset(RngStream& rng) {
    dyn_->reset_state(state_.data(), rng);
    steps_taken_ = 0;
    started_ = true;
    return observation();
}

Array ToyEnv::observation() const {
    Array obs({spec_.obs_dim});
    dyn_->observe(state_.data(), obs.data());
    return obs;
}

Transition ToyEnv::step(const Array& action) {
    if (!started_) throw std::logic_error("step before reset");
    if (done()) throw std::logic_error("step after episode end");
    if (static_cast<int>(action.size()) != spec_.action_dim)
        throw std::invalid_argument("action dimension mismatch");

    Transition tr;
    tr.obs = observation();
    tr.action = action;
    tr.step_index = steps_taken_;

    double a[8];
    clip_action(action, a, spec_.action_dim);
    double r = 0.0;
    for (int i = 0; i < spec_.action_repeat; ++i) {
        dyn_->substep(state_.data(), a);
        r += dyn_->reward(state_.data());
    }
    tr.reward = r / spec_.action_repeat;
    tr.next_obs = observation();
    steps_taken_ += 1;
    return tr;
}

std::unique_ptr<ToyEnv> make_env(const std::string& name, int episode_length,
                                 int action_repeat) {
    EnvSpec spec;
    spec.name = name;
    spec.episode_length = episode_length;
    spec.action_repeat = action_repeat;
    return std::make_unique<ToyEnv>(make_env_dynamics(name), spec);
}

std::unique_ptr<EnvDynamics> make_env_dynamics(const std::string& name) {
    if (name == "pointmass") return std::make_unique<PointMassDynamics>();
    if (name == "pendulum") return std::make_unique<PendulumDynamics>();
    throw std::invalid_argument("unknown env: " + name);
}

// ---------------------------------------------------------------------------
// Oracle adapter

OracleLatentAdapter::OracleLatentAdapter(std::shared_ptr<const EnvDynamics> dyn,
                                         int action_repeat)
    : dyn_(std::move(dyn)), action_repeat_(action_repeat) {}

int OracleLatentAdapter::action_dim() const { return dyn_->action_dim(); }
int OracleLatentAdapter::feature_dim() const { return dyn_->obs_dim(); }
int OracleLatentAdapter::state_dim() const { return dyn_->state_dim(); }

LatentState OracleLatentAdapter::lift_state(const Array& phys, double carried_reward) const {
    const int S = dyn_->state_dim();
    assert(static_cast<int>(phys.size()) == S);
    LatentState out;
    out.deter = Array({1, S + 1});
    for (int i = 0; i < S; ++i) out.deter[i] = phys[i];
    out.deter[S] = carried_reward;
    return out;
}

LatentState OracleLatentAdapter::prior_step(const LatentState& s, const Array& actions,
                                            const Array& /*noise*/) const {
    const int S = dyn_->state_dim();
    const int A = dyn_->action_dim();
    const int B = s.batch();
    assert(s.deter.shape()[1] == S + 1);
    assert(actions.shape()[0] == B && actions.shape()[1] == A);

    LatentState out;
    out.deter = Array({B, S + 1});
    double phys[8], a[8];
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < S; ++i) phys[i] = s.deter.at(b, i);
        for (int i = 0; i < A; ++i) {
            double v = actions.at(b, i);
            a[i] = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
        }
        double r = 0.0;
        for (int k = 0; k < action_repeat_; ++k) {
            dyn_->substep(phys, a);
            r += dyn_->reward(phys);
        }
        for (int i = 0; i < S; ++i) out.deter.at(b, i) = phys[i];
        out.deter.at(b, S) = r / action_repeat_;
    }
    return out;
}

Array OracleLatentAdapter::reward_mean(const LatentState& s) const {
    const int S = dyn_->state_dim();
    const int B = s.batch();
    Array r({B});
    for (int b = 0; b < B; ++b) r[b] = s.deter.at(b, S);
    return r;
}

Array OracleLatentAdapter::features(const LatentState& s) const {
    const int S = dyn_->state_dim();
    const int F = dyn_->obs_dim();
    const int B = s.batch();
    Array f({B, F});
    double phys[8];
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < S; ++i) phys[i] = s.deter.at(b, i);
        dyn_->observe(phys, f.data() + static_cast<std::size_t>(b) * F);
    }
    return f;
}

namespace {

using diffmath::Tape;
using diffmath::Var;

// One agent step of exact dynamics as a fused tape op. Forward records the
// intermediate substep states; backward composes the analytic Jacobians in
// reverse. Actions are used unclipped: imagination actions come from tanh
// heads and are interior to the bounds.
Var oracle_step_op(Tape& t, Var state, Var actions, const EnvDynamics& dyn, int repeat) {
    const Array& sv = t.val(state);
    const Array& av = t.val(actions);
    const int S = dyn.state_dim();
    const int A = dyn.action_dim();
    const int B = sv.shape()[0];
    assert(sv.shape()[1] == S + 1 && av.shape()[0] == B && av.shape()[1] == A);

    // trail[b] holds states s^0..s^repeat, each S wide
    std::vector<double> trail(static_cast<std::size_t>(B) * (repeat + 1) * S);
    Array out({B, S + 1});
    for (int b = 0; b < B; ++b) {
        double* row = trail.data() + static_cast<std::size_t>(b) * (repeat + 1) * S;
        for (int i = 0; i < S; ++i) row[i] = sv.at(b, i);
        const double* a = av.data() + static_cast<std::size_t>(b) * A;
        double r = 0.0;
        for (int k = 0; k < repeat; ++k) {
            double* cur = row + static_cast<std::size_t>(k) * S;
            double* nxt = cur + S;
            std::memcpy(nxt, cur, S * sizeof(double));
            dyn.substep(nxt, a);
            r += dyn.reward(nxt);
        }
        const double* last = row + static_cast<std::size_t>(repeat) * S;
        for (int i = 0; i < S; ++i) out.at(b, i) = last[i];
        out.at(b, S) = r / repeat;
    }

    bool ng = t.needs_grad(state) || t.needs_grad(actions);
    int sid = state.id, aid = actions.id;
    const EnvDynamics* dp = &dyn;
    return t.push_node(std::move(out), ng,
                       [sid, aid, dp, repeat, S, A, B, trail = std::move(trail)](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& av = t.value_of(aid);
        bool ns = t.needs_grad(sid), na = t.needs_grad(aid);
        Array* gs_in = ns ? &t.grad_buffer(sid) : nullptr;
        Array* ga_in = na ? &t.grad_buffer(aid) : nullptr;
        double gs[8], tmp[8], ga[8], Js[64], Ja[16], rg[8];
        for (int b = 0; b < B; ++b) {
            const double* row = trail.data() + static_cast<std::size_t>(b) * (repeat + 1) * S;
            const double* a = av.data() + static_cast<std::size_t>(b) * A;
            const double g_r = g.at(b, S) / repeat;
            for (int i = 0; i < S; ++i) gs[i] = g.at(b, i);
            for (int i = 0; i < A; ++i) ga[i] = 0.0;
            for (int k = repeat; k >= 1; --k) {
                const double* post = row + static_cast<std::size_t>(k) * S;
                const double* pre = post - S;
                dp->reward_gradient(post, rg);
                for (int i = 0; i < S; ++i) gs[i] += g_r * rg[i];
                dp->substep_jacobian(pre, a, Js, Ja);
                for (int j = 0; j < A; ++j)
                    for (int i = 0; i < S; ++i) ga[j] += Ja[i * A + j] * gs[i];
                for (int j = 0; j < S; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < S; ++i) acc += Js[i * S + j] * gs[i];
                    tmp[j] = acc;
                }
                std::memcpy(gs, tmp, S * sizeof(double));
            }
            if (gs_in)
                for (int i = 0; i < S; ++i) gs_in->at(b, i) += gs[i];
            if (ga_in)
                for (int i = 0; i < A; ++i) ga_in->at(b, i) += ga[i];
        }
    });
}

Var oracle_feature_op(Tape& t, Var state, const EnvDynamics& dyn) {
    const Array& sv = t.val(state);
    const int S = dyn.state_dim();
    const int F = dyn.obs_dim();
    const int B = sv.shape()[0];
    Array out({B, F});
    double phys[8];
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < S; ++i) phys[i] = sv.at(b, i);
        dyn.observe(phys, out.data() + static_cast<std::size_t>(b) * F);
    }
    int sid = state.id;
    const EnvDynamics* dp = &dyn;
    return t.push_node(std::move(out), t.needs_grad(state),
                       [sid, dp, S, F, B](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& sv = t.value_of(sid);
        Array& gs = t.grad_buffer(sid);
        double phys[8], Jo[64];
        for (int b = 0; b < B; ++b) {
            for (int i = 0; i < S; ++i) phys[i] = sv.at(b, i);
            dp->observe_jacobian(phys, Jo);
            for (int j = 0; j < S; ++j) {
                double acc = 0.0;
                for (int i = 0; i < F; ++i) acc += Jo[i * S + j] * g.at(b, i);
                gs.at(b, j) += acc;
            }
        }
    });
}

Var oracle_reward_op(Tape& t, Var state, int S) {
    const Array& sv = t.val(state);
    const int B = sv.shape()[0];
    Array out({B, 1});
    for (int b = 0; b < B; ++b) out[b] = sv.at(b, S);
    int sid = state.id;
    return t.push_node(std::move(out), t.needs_grad(state), [sid, S, B](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        Array& gs = t.grad_buffer(sid);
        for (int b = 0; b < B; ++b) gs.at(b, S) += g[b];
    });
}

class BoundOracle final : public BoundDynamics {
public:
    BoundOracle(Tape& t, const OracleLatentAdapter& ad) : t_(&t), ad_(&ad) {}

    LatentVars lift(const LatentState& s) override {
        return LatentVars{t_->constant(s.deter), Var{}};
    }
    LatentVars step(const LatentVars& s, Var actions, const Array& /*noise*/) override {
        return LatentVars{
            oracle_step_op(*t_, s.deter, actions, ad_->dynamics(), ad_->action_repeat()),
            Var{}};
    }
    Var reward(const LatentVars& s) override {
        return oracle_reward_op(*t_, s.deter, ad_->state_dim());
    }
    Var features(const LatentVars& s) override {
        return oracle_feature_op(*t_, s.deter, ad_->dynamics());
    }

private:
    Tape* t_;
    const OracleLatentAdapter* ad_;
};

}  // namespace

std::unique_ptr<BoundDynamics> OracleLatentAdapter::bind(diffmath::Tape& t) const {
    return std::make_unique<BoundOracle>(t, *this);
}

LatentState OracleBelief::initial() const {
    const int S = adapter_->state_dim();
    LatentState s;
    s.deter = Array({1, S + 1});
    return s;
}

LatentState OracleBelief::update(const LatentState& /*prev*/, const Array& /*action*/,
                                 const Array& /*obs*/, RngStream& /*rng*/) const {
    return adapter_->lift_state(env_->state(), 0.0);
}

}  // namespace lpln::envs
