// Return estimators against independent summation, parameter ownership of
// the two updates, and actor improvement on a substrate with a known optimum.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lpln/behavior.hpp"
#include "lpln/envs.hpp"
#include "lpln/ops.hpp"
#include "lpln/rng.hpp"

using namespace lpln;
using namespace lpln::behavior;

namespace {

// Direct evaluation of the k-step and mixed returns with explicit pow-based
// loops; shares no code with the library implementation.
double direct_k_step(const ImaginedTrajectory& traj, int tau, int k, int row) {
    const int H = traj.horizon();
    const int h = std::min(tau + k, H);
    double acc = 0.0;
    for (int i = tau; i < h; ++i) acc += std::pow(traj.gamma, i - tau) * traj.rewards[i][row];
    return acc + std::pow(traj.gamma, h - tau) * traj.values[h][row];
}

double direct_lambda(const ImaginedTrajectory& traj, int tau, int row) {
    const int K = traj.horizon() - tau;
    if (K == 0) return traj.values[tau][row];
    double acc = 0.0;
    for (int n = 1; n < K; ++n)
        acc += (1.0 - traj.lambda) * std::pow(traj.lambda, n - 1) * direct_k_step(traj, tau, n, row);
    return acc + std::pow(traj.lambda, K - 1) * direct_k_step(traj, tau, K, row);
}

ImaginedTrajectory random_trajectory(int H, int B, RngStream& rng) {
    ImaginedTrajectory traj;
    traj.gamma = rng.uniform(0.0, 1.0);
    traj.lambda = rng.uniform(0.0, 1.0);
    for (int t = 0; t < H; ++t) {
        Array r({B});
        for (int b = 0; b < B; ++b) r[b] = rng.uniform(-2.0, 2.0);
        traj.rewards.push_back(std::move(r));
    }
    for (int t = 0; t <= H; ++t) {
        Array v({B});
        for (int b = 0; b < B; ++b) v[b] = rng.uniform(-2.0, 2.0);
        traj.values.push_back(std::move(v));
    }
    return traj;
}

// Deterministic action-passthrough substrate: the next state IS the action
// and reward is -|state|^2, so the optimal policy mode is exactly zero.
class PassthroughDynamics final : public ImaginationDynamics {
public:
    class Bound final : public BoundDynamics {
    public:
        explicit Bound(diffmath::Tape& t) : t_(&t) {}
        LatentVars lift(const LatentState& s) override {
            return LatentVars{t_->constant(s.deter), diffmath::Var{}};
        }
        LatentVars step(const LatentVars& /*s*/, diffmath::Var actions,
                        const Array& /*noise*/) override {
            return LatentVars{actions, diffmath::Var{}};
        }
        diffmath::Var reward(const LatentVars& s) override {
            diffmath::Var sq = diffmath::mul(s.deter, s.deter);
            diffmath::Var ones = t_->constant(Array({2, 1}, 1.0));
            return diffmath::scale(
                diffmath::affine(sq, ones, t_->constant(Array({1}, 0.0))), -1.0);
        }
        diffmath::Var features(const LatentVars& s) override { return s.deter; }

    private:
        diffmath::Tape* t_;
    };

    int action_dim() const override { return 2; }
    int feature_dim() const override { return 2; }
    int noise_dim() const override { return 0; }
    std::unique_ptr<BoundDynamics> bind(diffmath::Tape& t) const override {
        return std::make_unique<Bound>(t);
    }
};

bool params_equal(const diffmath::ParameterSet& a, const diffmath::ParameterSet& b) {
    if (a.items().size() != b.items().size()) return false;
    for (std::size_t i = 0; i < a.items().size(); ++i) {
        const Array& x = a.items()[i].value;
        const Array& y = b.items()[i].value;
        if (x.size() != y.size()) return false;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] != y[j]) return false;
    }
    return true;
}

std::vector<Array> snapshot(const diffmath::ParameterSet& set) {
    std::vector<Array> out;
    for (const auto& p : set.items()) out.push_back(p.value);
    return out;
}

bool equals_snapshot(const diffmath::ParameterSet& set, const std::vector<Array>& snap) {
    for (std::size_t i = 0; i < snap.size(); ++i) {
        const Array& v = set.items()[i].value;
        for (std::size_t j = 0; j < v.size(); ++j)
            if (v[j] != snap[i][j]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("one-step return anchor") {
    ImaginedTrajectory traj;
    traj.gamma = 0.9;
    traj.lambda = 0.5;
    traj.rewards = {Array({1}, 0.5), Array({1}, 1.0)};
    traj.values = {Array({1}, 0.0), Array({1}, 2.0), Array({1}, 1.0)};
    CHECK(k_step_value(traj, 0, 1) == doctest::Approx(2.3).epsilon(1e-12));
    CHECK(k_step_value(traj, 0, 2) == doctest::Approx(2.21).epsilon(1e-12));
    CHECK(lambda_return(traj, 0) == doctest::Approx(2.255).epsilon(1e-12));
}

TEST_CASE("k-step return truncates at the horizon") {
    ImaginedTrajectory traj;
    traj.gamma = 0.5;
    traj.rewards = {Array({1}, 1.0)};
    traj.values = {Array({1}, 3.0), Array({1}, 4.0)};
    // k beyond H clamps to the full-horizon return.
    CHECK(k_step_value(traj, 0, 1) == doctest::Approx(1.0 + 0.5 * 4.0));
    CHECK(k_step_value(traj, 0, 7) == doctest::Approx(k_step_value(traj, 0, 1)));
    CHECK_THROWS_AS(k_step_value(traj, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(k_step_value(traj, 2, 1), std::out_of_range);
}

TEST_CASE("lambda return matches direct summation on random trajectories") {
    RngStream rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const int H = 1 + rng.uniform_int(16);
        const int B = 1 + rng.uniform_int(3);
        ImaginedTrajectory traj = random_trajectory(H, B, rng);
        const int tau = rng.uniform_int(H + 1);
        const int row = rng.uniform_int(B);
        const double expect = direct_lambda(traj, tau, row);
        const double got = lambda_return(traj, tau, row);
        REQUIRE(std::abs(got - expect) < 1e-10);
        for (int k = 1; k <= H - tau + 1 && tau <= H; ++k)
            REQUIRE(std::abs(k_step_value(traj, tau, k, row) -
                             direct_k_step(traj, tau, k, row)) < 1e-10);
    }
}

TEST_CASE("lambda limits collapse to the pure estimators") {
    RngStream rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int H = 1 + rng.uniform_int(10);
        ImaginedTrajectory traj = random_trajectory(H, 1, rng);
        const int tau = rng.uniform_int(H);
        traj.lambda = 1.0;  // full-horizon return
        CHECK(lambda_return(traj, tau) ==
              doctest::Approx(k_step_value(traj, tau, H - tau)).epsilon(1e-12));
        traj.lambda = 0.0;  // one-step return via the 0^0 = 1 convention
        CHECK(lambda_return(traj, tau) ==
              doctest::Approx(k_step_value(traj, tau, 1)).epsilon(1e-12));
    }
}

TEST_CASE("lambda return at the horizon is the bootstrap value") {
    RngStream rng(78);
    ImaginedTrajectory traj = random_trajectory(5, 2, rng);
    CHECK(lambda_return(traj, 5, 1) == traj.values[5][1]);
}

TEST_CASE("sampled actions live strictly inside the unit box") {
    BehaviorConfig bc;
    bc.feature_dim = 3;
    bc.action_dim = 2;
    Behavior beh(bc, RngStream(5).child("behavior-init"));
    RngStream rng(6);
    Array feats({4, 3});
    for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = 3.0 * rng.normal();
    Array eps({4, 2});
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = 4.0 * rng.normal();
    Array a = beh.sample_action(feats, eps);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] > -1.0);
        CHECK(a[i] < 1.0);
    }
    // Zero noise gives the mode, which the policy view must reproduce.
    Array mode = beh.policy_view().mode(feats);
    Array manual = beh.sample_action(feats, Array({4, 2}, 0.0));
    for (std::size_t i = 0; i < mode.size(); ++i) CHECK(mode[i] == manual[i]);
}

TEST_CASE("imagined rollouts have coherent shapes") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 6;
    Behavior beh(bc, RngStream(7).child("behavior-init"));
    RngStream rng(8);
    LatentState start;
    start.deter = Array({3, 2}, 0.5);
    ImaginedTrajectory traj = beh.imagine_rollout(dyn, start, 6, rng);
    CHECK(traj.horizon() == 6);
    CHECK(traj.batch() == 3);
    CHECK(traj.states.size() == 7);
    CHECK(traj.actions.size() == 6);
    CHECK(traj.values.size() == 7);
    for (const Array& r : traj.rewards) CHECK(r.size() == 3);
}

TEST_CASE("actor update touches only policy parameters") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 4;
    Behavior beh(bc, RngStream(9).child("behavior-init"));
    RngStream rng(10);
    LatentState start;
    start.deter = Array({4, 2}, 0.3);

    auto value_before = snapshot(beh.value_params());
    auto policy_before = snapshot(beh.policy_params());
    Behavior::ImaginationRun run = beh.imagine_for_training(dyn, start, rng);
    BehaviorTrainStats st = beh.actor_update(run);
    CHECK(!st.skipped);
    CHECK(equals_snapshot(beh.value_params(), value_before));
    CHECK(!equals_snapshot(beh.policy_params(), policy_before));
}

TEST_CASE("critic update touches only value parameters") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 4;
    Behavior beh(bc, RngStream(11).child("behavior-init"));
    RngStream rng(12);
    LatentState start;
    start.deter = Array({4, 2}, 0.3);

    auto value_before = snapshot(beh.value_params());
    auto policy_before = snapshot(beh.policy_params());
    Behavior::ImaginationRun run = beh.imagine_for_training(dyn, start, rng);
    BehaviorTrainStats st = beh.critic_update(run);
    CHECK(!st.skipped);
    CHECK(equals_snapshot(beh.policy_params(), policy_before));
    CHECK(!equals_snapshot(beh.value_params(), value_before));
}

TEST_CASE("repeated critic updates on one run reduce the critic loss") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 5;
    bc.critic_lr = 1e-3;
    Behavior beh(bc, RngStream(13).child("behavior-init"));
    RngStream rng(14);
    LatentState start;
    start.deter = Array({8, 2}, 0.4);
    Behavior::ImaginationRun run = beh.imagine_for_training(dyn, start, rng);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 60; ++i) {
        BehaviorTrainStats st = beh.critic_update(run);
        if (i == 0) first = st.critic_loss;
        last = st.critic_loss;
    }
    CHECK(last < first);
}

TEST_CASE("actor learns to zero its action on the passthrough substrate") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 5;
    bc.actor_lr = 3e-3;
    bc.critic_lr = 3e-3;
    Behavior beh(bc, RngStream(15).child("behavior-init"));
    RngStream srng(16), trng(17);

    for (int step = 0; step < 200; ++step) {
        LatentState start;
        start.deter = Array({16, 2});
        for (std::size_t i = 0; i < start.deter.size(); ++i)
            start.deter[i] = srng.uniform(-1.0, 1.0);
        BehaviorTrainStats st = beh.train_step(dyn, start, trng);
        REQUIRE(!st.skipped);
    }

    RngStream check(18);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Array feats({1, 2});
        feats[0] = check.uniform(-1.0, 1.0);
        feats[1] = check.uniform(-1.0, 1.0);
        Array a = beh.policy_view().mode(feats);
        worst = std::max({worst, std::abs(a[0]), std::abs(a[1])});
    }
    CHECK(worst < 0.1);
}

TEST_CASE("identical seeds give identical behavior training") {
    PassthroughDynamics dyn;
    BehaviorConfig bc;
    bc.feature_dim = 2;
    bc.action_dim = 2;
    bc.horizon = 4;
    Behavior a(bc, RngStream(19).child("behavior-init"));
    Behavior b(bc, RngStream(19).child("behavior-init"));
    CHECK(params_equal(a.policy_params(), b.policy_params()));
    RngStream ra(20), rb(20);
    LatentState start;
    start.deter = Array({4, 2}, 0.25);
    for (int i = 0; i < 5; ++i) {
        BehaviorTrainStats sa = a.train_step(dyn, start, ra);
        BehaviorTrainStats sb = b.train_step(dyn, start, rb);
        CHECK(sa.actor_objective == sb.actor_objective);
        CHECK(sa.critic_loss == sb.critic_loss);
    }
    CHECK(params_equal(a.policy_params(), b.policy_params()));
    CHECK(params_equal(a.value_params(), b.value_params()));
}
