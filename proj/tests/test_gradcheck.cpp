// Central-difference verification of every differentiable op, the fused
// environment ops, and the full model loss graph.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "doctest.h"
#include "lpln/behavior.hpp"
#include "lpln/envs.hpp"
#include "lpln/ops.hpp"
#include "lpln/params.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"
#include "lpln/worldmodel.hpp"

using namespace lpln;
using namespace lpln::diffmath;

namespace {

double rel_err(double ad, double fd) {
    return std::abs(ad - fd) / std::max({1e-6, std::abs(ad), std::abs(fd)});
}

Array randn(std::vector<int> shape, RngStream& rng, double scale = 1.0, double offset = 0.0) {
    Array out(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = offset + scale * rng.normal();
    return out;
}

Array positive(std::vector<int> shape, RngStream& rng) {
    Array out(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 + std::abs(rng.normal());
    return out;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max relative error between reverse-mode and central-difference gradients
// over every element of every input.
double max_grad_err(const std::vector<Array>& inputs, const Builder& build, double h = 1e-5) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Array& a : inputs) vars.push_back(t.leaf(a, true));
    Var loss = build(t, vars);
    REQUIRE(t.val(loss).size() == 1);
    t.backward(loss);
    std::vector<Array> grads;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const Array& g = t.grad(vars[i]);
        grads.push_back(g.empty() ? Array(inputs[i].shape()) : g);
    }

    auto eval = [&build](const std::vector<Array>& xs) {
        Tape ft(false);
        std::vector<Var> vs;
        vs.reserve(xs.size());
        for (const Array& a : xs) vs.push_back(ft.leaf(a, true));
        return ft.val(build(ft, vs))[0];
    };

    double worst = 0.0;
    std::vector<Array> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double orig = work[i][j];
            work[i][j] = orig + h;
            const double up = eval(work);
            work[i][j] = orig - h;
            const double dn = eval(work);
            work[i][j] = orig;
            worst = std::max(worst, rel_err(grads[i][j], (up - dn) / (2.0 * h)));
        }
    }
    return worst;
}

// Weighted sum so per-element gradient routing errors cannot cancel. Seeded
// per call site: the builder runs once per finite-difference probe and the
// weights must not move between probes.
Var weighted(Tape& t, Var y, std::uint64_t seed) {
    RngStream rng(seed);
    Array w(t.val(y).shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.25 + rng.uniform();
    return sum_all(mul(y, t.constant(std::move(w))));
}

}  // namespace

TEST_CASE("gradcheck: elementwise and reduction ops") {
    RngStream rng(101);
    const double tol = 1e-4;

    auto unary = [&](std::string name, auto op, Array x) {
        const std::uint64_t wseed = rng.uniform_int(1 << 20);
        double err = max_grad_err({x}, [&](Tape& t, const std::vector<Var>& v) {
            return weighted(t, op(v[0]), wseed);
        });
        INFO(name);
        CHECK(err < tol);
    };
    unary("tanh", [](Var v) { return tanh_op(v); }, randn({2, 3}, rng));
    unary("elu", [](Var v) { return elu(v); }, randn({2, 3}, rng));
    unary("softplus", [](Var v) { return softplus(v); }, randn({2, 3}, rng));
    unary("sigmoid", [](Var v) { return sigmoid(v); }, randn({2, 3}, rng));
    unary("exp", [](Var v) { return exp_op(v); }, randn({2, 3}, rng, 0.5));
    unary("log", [](Var v) { return log_op(v); }, positive({2, 3}, rng));
    unary("scale", [](Var v) { return scale(v, -1.7); }, randn({2, 3}, rng));
    unary("add_scalar", [](Var v) { return add_scalar(v, 0.3); }, randn({2, 3}, rng));

    auto binary = [&](std::string name, auto op, Array a, Array b) {
        const std::uint64_t wseed = rng.uniform_int(1 << 20);
        double err = max_grad_err({a, b}, [&](Tape& t, const std::vector<Var>& v) {
            return weighted(t, op(v[0], v[1]), wseed);
        });
        INFO(name);
        CHECK(err < tol);
    };
    binary("add", [](Var a, Var b) { return add(a, b); }, randn({3, 2}, rng), randn({3, 2}, rng));
    binary("sub", [](Var a, Var b) { return sub(a, b); }, randn({3, 2}, rng), randn({3, 2}, rng));
    binary("mul", [](Var a, Var b) { return mul(a, b); }, randn({3, 2}, rng), randn({3, 2}, rng));
    binary("div", [](Var a, Var b) { return div(a, b); }, randn({3, 2}, rng),
           positive({3, 2}, rng));
    binary("concat_cols", [](Var a, Var b) { return concat_cols(a, b); }, randn({2, 2}, rng),
           randn({2, 3}, rng));

    CHECK(max_grad_err({randn({3, 4}, rng)}, [](Tape& t, const std::vector<Var>& v) {
              return sum_all(v[0]);
          }) < tol);
    CHECK(max_grad_err({randn({3, 4}, rng)}, [](Tape& t, const std::vector<Var>& v) {
              return mean_all(v[0]);
          }) < tol);
}

TEST_CASE("gradcheck: affine") {
    RngStream rng(102);
    double err = max_grad_err(
        {randn({3, 4}, rng), randn({4, 2}, rng), randn({2}, rng)},
        [&](Tape& t, const std::vector<Var>& v) {
            return weighted(t, affine(v[0], v[1], v[2]), 7);
        });
    CHECK(err < 1e-4);
}

TEST_CASE("gradcheck: gaussian log prob, KL, reparam sample") {
    RngStream rng(103);
    CHECK(max_grad_err({randn({2, 3}, rng), randn({2, 3}, rng), positive({2, 3}, rng)},
                       [&](Tape& t, const std::vector<Var>& v) {
                           return weighted(t, gaussian_log_prob(v[0], v[1], v[2]), 8);
                       }) < 1e-4);
    CHECK(max_grad_err({randn({2, 3}, rng), positive({2, 3}, rng), randn({2, 3}, rng),
                        positive({2, 3}, rng)},
                       [&](Tape& t, const std::vector<Var>& v) {
                           return weighted(t, diag_gaussian_kl(v[0], v[1], v[2], v[3]), 9);
                       }) < 1e-4);
    const Array noise = randn({2, 3}, rng);
    CHECK(max_grad_err({randn({2, 3}, rng), positive({2, 3}, rng)},
                       [&](Tape& t, const std::vector<Var>& v) {
                           return weighted(t, reparam_sample(v[0], v[1], noise), 10);
                       }) < 1e-4);
}

TEST_CASE("gradcheck: fused environment dynamics ops through chained steps") {
    for (const std::string name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto dyn = std::shared_ptr<const envs::EnvDynamics>(envs::make_env_dynamics(name));
        envs::OracleLatentAdapter adapter(dyn, 2);
        const int B = 3;
        const int A = adapter.action_dim();
        const int S = adapter.state_dim();

        RngStream rng(104);
        LatentState start;
        start.deter = Array({B, S + 1});
        for (int b = 0; b < B; ++b) {
            for (int i = 0; i < S; ++i) start.deter.at(b, i) = 0.4 * rng.normal();
            start.deter.at(b, S) = 0.0;
        }
        // Two chained steps: the gradient of the second step's outputs with
        // respect to the first action crosses the state Jacobian.
        double err = max_grad_err(
            {randn({B, A}, rng, 0.4), randn({B, A}, rng, 0.4)},
            [&](Tape& t, const std::vector<Var>& v) {
                auto bound = adapter.bind(t);
                LatentVars s0 = bound->lift(start);
                LatentVars s1 = bound->step(s0, v[0], Array({B, 0}));
                LatentVars s2 = bound->step(s1, v[1], Array({B, 0}));
                Var part1 = weighted(t, bound->reward(s1), 11);
                Var part2 = weighted(t, bound->reward(s2), 12);
                Var part3 = weighted(t, bound->features(s2), 13);
                return add(part1, add(part2, part3));
            });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("gradcheck: full model reconstruction loss over every parameter") {
    worldmodel::WorldModelConfig mc;
    mc.obs_dim = 3;
    mc.action_dim = 2;
    mc.deter = 4;
    mc.stoch = 4;
    mc.hidden = 4;
    mc.embed = 4;
    worldmodel::WorldModel wm(mc, RngStream(55).child("model-init"));

    RngStream drng(56);
    worldmodel::SequenceBatch batch;
    batch.batch = 2;
    batch.length = 2;
    for (int t = 0; t < batch.length; ++t) {
        batch.obs.push_back(randn({2, 3}, drng));
        batch.actions.push_back(randn({2, 2}, drng, 0.5));
        batch.rewards.push_back(randn({2, 1}, drng, 0.3));
    }
    const std::uint64_t noise_seed = 570;

    auto loss_value = [&]() {
        Tape t(false);
        TapeBinding bind(t, wm.params(), false);
        RngStream nrng(noise_seed);
        return t.val(wm.reconstruction_loss(t, bind, batch, nrng, nullptr))[0];
    };

    Tape t(true);
    TapeBinding bind(t, wm.params(), true);
    RngStream nrng(noise_seed);
    Var loss = wm.reconstruction_loss(t, bind, batch, nrng, nullptr);
    t.backward(loss);

    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;
    for (Param& p : wm.params().items()) {
        const Array& g = t.grad(bind[p.name]);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double ad = g.empty() ? 0.0 : g[j];
            const double orig = p.value[j];
            p.value[j] = orig + h;
            const double up = loss_value();
            p.value[j] = orig - h;
            const double dn = loss_value();
            p.value[j] = orig;
            worst = std::max(worst, rel_err(ad, (up - dn) / (2.0 * h)));
            ++checked;
        }
    }
    INFO("checked " << checked << " parameter entries, max rel err " << worst);
    CHECK(checked == wm.params().total_size());
    CHECK(worst < 1e-3);
}

TEST_CASE("gradcheck: actor objective against policy parameters on exact dynamics") {
    auto dyn = std::shared_ptr<const envs::EnvDynamics>(envs::make_env_dynamics("pointmass"));
    envs::OracleLatentAdapter adapter(dyn, 2);
    behavior::BehaviorConfig bc;
    bc.feature_dim = adapter.feature_dim();
    bc.action_dim = adapter.action_dim();
    bc.hidden = 8;
    bc.horizon = 3;
    behavior::Behavior beh(bc, RngStream(77).child("behavior-init"));

    RngStream srng(78);
    const int B = 2;
    const int S = adapter.state_dim();
    LatentState start;
    start.deter = Array({B, S + 1});
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < S; ++i) start.deter.at(b, i) = 0.5 * srng.normal();
        start.deter.at(b, S) = 0.0;
    }
    const std::uint64_t noise_seed = 790;

    auto objective_value = [&]() {
        RngStream nrng(noise_seed);
        behavior::Behavior::ImaginationRun run = beh.imagine_for_training(adapter, start, nrng);
        return run.tape->val(run.objective)[0];
    };

    RngStream nrng(noise_seed);
    behavior::Behavior::ImaginationRun run = beh.imagine_for_training(adapter, start, nrng);
    run.tape->backward(run.objective);

    // Spot-check a deterministic sample of parameter entries; the full graph
    // is long, the op set underneath is already covered exhaustively.
    RngStream pick(79);
    const double h = 1e-5;
    double worst = 0.0;
    for (Param& p : beh.policy_params().items()) {
        const Array& g = run.tape->grad((*run.policy_bind)[p.name]);
        for (int trial = 0; trial < 8; ++trial) {
            const std::size_t j = pick.uniform_int(static_cast<int>(p.value.size()));
            const double ad = g.empty() ? 0.0 : g[j];
            const double orig = p.value[j];
            p.value[j] = orig + h;
            const double up = objective_value();
            p.value[j] = orig - h;
            const double dn = objective_value();
            p.value[j] = orig;
            worst = std::max(worst, rel_err(ad, (up - dn) / (2.0 * h)));
        }
    }
    CHECK(worst < 1e-3);
}
