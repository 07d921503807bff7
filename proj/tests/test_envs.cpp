// Environment semantics and the exact-dynamics latent adapter.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lpln/envs.hpp"
#include "lpln/rng.hpp"
#include "lpln/tape.hpp"

using namespace lpln;
using namespace lpln::envs;

namespace {

Array uniform_action(int dim, RngStream& rng) {
    Array a({dim});
    for (int i = 0; i < dim; ++i) a[i] = rng.uniform(-1.0, 1.0);
    return a;
}

}  // namespace

TEST_CASE("reset and step are deterministic in the seed") {
    for (const char* name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto e1 = make_env(name);
        auto e2 = make_env(name);
        RngStream r1(31), r2(31), act1(32), act2(32);
        Array o1 = e1->reset(r1);
        Array o2 = e2->reset(r2);
        for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == o2[i]);
        for (int t = 0; t < 20; ++t) {
            Transition t1 = e1->step(uniform_action(e1->spec().action_dim, act1));
            Transition t2 = e2->step(uniform_action(e2->spec().action_dim, act2));
            CHECK(t1.reward == t2.reward);
            for (std::size_t i = 0; i < t1.next_obs.size(); ++i)
                CHECK(t1.next_obs[i] == t2.next_obs[i]);
        }
    }
}

TEST_CASE("rewards stay within the unit interval for random play") {
    for (const char* name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto env = make_env(name);
        RngStream rng(41), act(42);
        for (int ep = 0; ep < 3; ++ep) {
            env->reset(rng);
            while (!env->done()) {
                double r = env->step(uniform_action(env->spec().action_dim, act)).reward;
                CHECK(r >= 0.0);
                CHECK(r <= 1.0);
                CHECK(std::isfinite(r));
            }
        }
    }
}

TEST_CASE("episode length counts agent steps and stepping past the end throws") {
    auto env = make_env("pendulum", 20, 2);
    RngStream rng(5);
    env->reset(rng);
    int steps = 0;
    Array a({1}, 0.3);
    while (!env->done()) {
        env->step(a);
        ++steps;
    }
    CHECK(steps == 10);  // 20 inner steps / action_repeat 2
    CHECK_THROWS_AS(env->step(a), std::logic_error);
    // Reset rearms the episode.
    env->reset(rng);
    CHECK(!env->done());
}

TEST_CASE("step before reset throws") {
    auto env = make_env("pointmass");
    CHECK_THROWS_AS(env->step(Array({2}, 0.0)), std::logic_error);
}

TEST_CASE("step reward is the mean of the action_repeat substep rewards") {
    for (const char* name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto env = make_env(name, 200, 4);
        auto dyn = make_env_dynamics(name);
        RngStream rng(11), act(12);
        env->reset(rng);

        std::vector<double> s(dyn->state_dim());
        for (int i = 0; i < dyn->state_dim(); ++i) s[i] = env->state()[i];

        for (int t = 0; t < 5; ++t) {
            Array a = uniform_action(dyn->action_dim(), act);
            Transition tr = env->step(a);
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                dyn->substep(s.data(), a.data());
                sum += dyn->reward(s.data());
            }
            CHECK(tr.reward == doctest::Approx(sum / 4.0).epsilon(1e-12));
            for (int i = 0; i < dyn->state_dim(); ++i)
                CHECK(env->state()[i] == doctest::Approx(s[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("observation matches the dynamics observe map") {
    auto env = make_env("pendulum");
    RngStream rng(21), act(22);
    env->reset(rng);
    for (int t = 0; t < 8; ++t) {
        env->step(uniform_action(1, act));
        Array obs = env->observation();
        const Array& st = env->state();
        CHECK(obs[0] == doctest::Approx(std::cos(st[0])));
        CHECK(obs[1] == doctest::Approx(std::sin(st[0])));
        CHECK(obs[2] == doctest::Approx(st[1]));
    }
}

TEST_CASE("state stays bounded over a full episode of extreme actions") {
    auto env = make_env("pendulum");
    RngStream rng(61);
    env->reset(rng);
    Array full({1}, 1.0);
    while (!env->done()) {
        env->step(full);
        CHECK(std::isfinite(env->state()[0]));
        CHECK(std::abs(env->state()[1]) < 50.0);  // damping keeps velocity finite
    }
    auto pm = make_env("pointmass");
    pm->reset(rng);
    Array push({2}, 1.0);
    while (!pm->done()) {
        pm->step(push);
        // Constant unit force over 200 substeps ramps velocity to at most
        // v0 + 200*dt*gain = 20.1 and position to x0 + 10*v0 + 99.5.
        CHECK(std::abs(pm->state()[0]) < 103.0);
        CHECK(std::abs(pm->state()[2]) < 20.2);
    }
}

TEST_CASE("actions clip to the unit box") {
    auto env = make_env("pointmass", 200, 2);
    auto clipped = make_env("pointmass", 200, 2);
    RngStream r1(71), r2(71);
    env->reset(r1);
    clipped->reset(r2);
    Array big({2});
    big[0] = 5.0;
    big[1] = -7.0;
    Array unit({2});
    unit[0] = 1.0;
    unit[1] = -1.0;
    Transition a = env->step(big);
    Transition b = clipped->step(unit);
    CHECK(a.reward == b.reward);
    for (std::size_t i = 0; i < a.next_obs.size(); ++i) CHECK(a.next_obs[i] == b.next_obs[i]);
}

TEST_CASE("adapter one-step prediction equals the environment transition") {
    for (const char* name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto dyn = std::shared_ptr<const EnvDynamics>(make_env_dynamics(name));
        OracleLatentAdapter adapter(dyn, 2);
        auto env = make_env(name, 200, 2);
        RngStream rng(81), act(82);
        env->reset(rng);
        for (int t = 0; t < 10; ++t) {
            LatentState s = adapter.lift_state(env->state());
            Array a = uniform_action(adapter.action_dim(), act);
            Array arow({1, adapter.action_dim()});
            for (int i = 0; i < adapter.action_dim(); ++i) arow[i] = a[i];
            LatentState next = adapter.prior_step(s, arow, Array({1, 0}));
            Transition tr = env->step(a);
            // Carried reward column equals the mean substep reward.
            CHECK(adapter.reward_mean(next)[0] == doctest::Approx(tr.reward).epsilon(1e-12));
            for (int i = 0; i < adapter.state_dim(); ++i)
                CHECK(next.deter.at(0, i) == doctest::Approx(env->state()[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("adapter features equal the observation map") {
    auto dyn = std::shared_ptr<const EnvDynamics>(make_env_dynamics("pendulum"));
    OracleLatentAdapter adapter(dyn, 2);
    auto env = make_env("pendulum");
    RngStream rng(91);
    env->reset(rng);
    LatentState s = adapter.lift_state(env->state());
    Array feats = adapter.features(s);
    Array obs = env->observation();
    REQUIRE(feats.size() == obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) CHECK(feats[i] == doctest::Approx(obs[i]));
}

TEST_CASE("tape-bound oracle step agrees exactly with the numeric adapter") {
    for (const char* name : {"pointmass", "pendulum"}) {
        INFO(name);
        auto dyn = std::shared_ptr<const EnvDynamics>(make_env_dynamics(name));
        OracleLatentAdapter adapter(dyn, 2);
        const int B = 4;
        const int A = adapter.action_dim();
        const int S = adapter.state_dim();
        RngStream rng(66);
        LatentState start;
        start.deter = Array({B, S + 1});
        for (std::size_t i = 0; i < start.deter.size(); ++i) start.deter[i] = 0.3 * rng.normal();
        Array actions({B, A});
        for (std::size_t i = 0; i < actions.size(); ++i) actions[i] = rng.uniform(-1.0, 1.0);

        LatentState numeric = adapter.prior_step(start, actions, Array({B, 0}));

        diffmath::Tape t(false);
        auto bound = adapter.bind(t);
        LatentVars s0 = bound->lift(start);
        LatentVars s1 = bound->step(s0, t.constant(actions), Array({B, 0}));
        const Array& stepped = t.val(s1.deter);
        for (std::size_t i = 0; i < stepped.size(); ++i) CHECK(stepped[i] == numeric.deter[i]);

        const Array& rew = t.val(bound->reward(s1));
        Array rn = adapter.reward_mean(numeric);
        for (int b = 0; b < B; ++b) CHECK(rew[b] == rn[b]);

        const Array& fe = t.val(bound->features(s1));
        Array fn = adapter.features(numeric);
        for (std::size_t i = 0; i < fe.size(); ++i) CHECK(fe[i] == fn[i]);
    }
}

TEST_CASE("oracle belief mirrors the live environment state") {
    auto dyn = std::shared_ptr<const EnvDynamics>(make_env_dynamics("pendulum"));
    OracleLatentAdapter adapter(dyn, 2);
    auto env = make_env("pendulum");
    OracleBelief belief(env.get(), &adapter);
    RngStream rng(33), act(34), brng(35);

    LatentState s = belief.initial();
    CHECK(s.batch() == 1);
    for (std::size_t i = 0; i < s.deter.size(); ++i) CHECK(s.deter[i] == 0.0);

    Array obs = env->reset(rng);
    s = belief.update(s, Array({1}, 0.0), obs, brng);
    for (int t = 0; t < 6; ++t) {
        Array a = uniform_action(1, act);
        Transition tr = env->step(a);
        s = belief.update(s, a, tr.next_obs, brng);
        for (int i = 0; i < adapter.state_dim(); ++i)
            CHECK(s.deter.at(0, i) == env->state()[i]);
        CHECK(s.deter.at(0, adapter.state_dim()) == 0.0);
    }
}

TEST_CASE("unknown environment names are rejected") {
    CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);
    CHECK_THROWS_AS(make_env_dynamics(""), std::invalid_argument);
}
