// Latent model invariants: shared deterministic path, stddev floors, frozen
// zero-parameter anchors, scratch-tape consistency, and optimization sanity.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lpln/rng.hpp"
#include "lpln/worldmodel.hpp"

using namespace lpln;
using namespace lpln::worldmodel;

namespace {

WorldModelConfig small_config() {
    WorldModelConfig mc;
    mc.obs_dim = 3;
    mc.action_dim = 2;
    mc.deter = 8;
    mc.stoch = 4;
    mc.hidden = 8;
    mc.embed = 8;
    return mc;
}

Array randn(std::vector<int> shape, RngStream& rng, double scale = 1.0) {
    Array out(std::move(shape));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * rng.normal();
    return out;
}

SequenceBatch random_batch(int B, int L, const WorldModelConfig& mc, RngStream& rng) {
    SequenceBatch b;
    b.batch = B;
    b.length = L;
    for (int t = 0; t < L; ++t) {
        b.obs.push_back(randn({B, mc.obs_dim}, rng));
        b.actions.push_back(randn({B, mc.action_dim}, rng, 0.5));
        b.rewards.push_back(randn({B, 1}, rng, 0.3));
    }
    return b;
}

}  // namespace

TEST_CASE("initial state is zero with the configured shapes") {
    WorldModel wm(small_config(), RngStream(1).child("model-init"));
    LatentState s = wm.initial_state(3);
    CHECK(s.batch() == 3);
    CHECK(s.deter.cols() == 8);
    CHECK(s.stoch.cols() == 4);
    for (std::size_t i = 0; i < s.deter.size(); ++i) CHECK(s.deter[i] == 0.0);
    for (std::size_t i = 0; i < s.stoch.size(); ++i) CHECK(s.stoch[i] == 0.0);
}

TEST_CASE("posterior and prior share the deterministic path exactly") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(2).child("model-init"));
    RngStream rng(3);
    LatentState prev = wm.initial_state(2);
    prev.stoch = randn({2, mc.stoch}, rng);
    Array action = randn({2, mc.action_dim}, rng);
    Array obs = randn({2, mc.obs_dim}, rng);
    Array noise = randn({2, mc.stoch}, rng);

    LatentState post = wm.posterior_step(prev, action, obs, noise);
    LatentState prior = wm.prior_step(prev, action, noise);
    REQUIRE(post.deter.size() == prior.deter.size());
    for (std::size_t i = 0; i < post.deter.size(); ++i) CHECK(post.deter[i] == prior.deter[i]);

    // Same deter but different statistics heads.
    bool any_diff = false;
    for (std::size_t i = 0; i < post.mean.size(); ++i) any_diff |= (post.mean[i] != prior.mean[i]);
    CHECK(any_diff);
}

TEST_CASE("stddev heads respect the positive floor") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(4).child("model-init"));
    RngStream rng(5);
    LatentState s = wm.initial_state(4);
    for (int t = 0; t < 10; ++t) {
        s = wm.posterior_step(s, randn({4, mc.action_dim}, rng), randn({4, mc.obs_dim}, rng),
                              randn({4, mc.stoch}, rng));
        for (std::size_t i = 0; i < s.stddev.size(); ++i) CHECK(s.stddev[i] >= 1e-4);
    }
}

TEST_CASE("zero parameters give the softplus stddev anchor and zero deter") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(6).child("model-init"));
    for (auto& p : wm.params().items())
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0;
    wm.params().bump_version();

    RngStream rng(7);
    LatentState s = wm.posterior_step(wm.initial_state(2), Array({2, mc.action_dim}, 0.0),
                                      Array({2, mc.obs_dim}, 0.0), randn({2, mc.stoch}, rng));
    for (std::size_t i = 0; i < s.deter.size(); ++i) CHECK(s.deter[i] == 0.0);
    for (std::size_t i = 0; i < s.mean.size(); ++i) CHECK(s.mean[i] == 0.0);
    for (std::size_t i = 0; i < s.stddev.size(); ++i)
        CHECK(s.stddev[i] == doctest::Approx(0.6932471805599453).epsilon(1e-14));
}

TEST_CASE("zero parameters and zero data give the closed-form loss") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(8).child("model-init"));
    for (auto& p : wm.params().items())
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = 0.0;
    wm.params().bump_version();

    SequenceBatch batch;
    batch.batch = 2;
    batch.length = 2;
    for (int t = 0; t < 2; ++t) {
        batch.obs.push_back(Array({2, mc.obs_dim}, 0.0));
        batch.actions.push_back(Array({2, mc.action_dim}, 0.0));
        batch.rewards.push_back(Array({2, 1}, 0.0));
    }

    diffmath::Tape t(true);
    diffmath::TapeBinding bind(t, wm.params(), true);
    ModelTrainStats stats;
    RngStream nrng(9);
    diffmath::Var loss = wm.reconstruction_loss(t, bind, batch, nrng, &stats);

    // Per dimension, log N(0 | 0, 1) = -0.5 ln(2 pi); summed over dims and
    // the two timesteps (batch means are means of equal values). The squashed
    // reward mean sits at sigmoid(0) = 1/2, costing an extra (1/2)^2 / 2.
    const double unit = 0.5 * std::log(2.0 * M_PI);
    CHECK(stats.j_o == doctest::Approx(-2.0 * mc.obs_dim * unit).epsilon(1e-12));
    CHECK(stats.j_r == doctest::Approx(-2.0 * (unit + 0.125)).epsilon(1e-12));
    CHECK(stats.kl == doctest::Approx(0.0));
    CHECK(t.val(loss)[0] == doctest::Approx(-(stats.j_o + stats.j_r)).epsilon(1e-12));
}

TEST_CASE("loss decomposes as negative log likelihoods plus scaled KL") {
    WorldModelConfig mc = small_config();
    mc.beta = 1.7;
    WorldModel wm(mc, RngStream(10).child("model-init"));
    RngStream rng(11);
    SequenceBatch batch = random_batch(3, 4, mc, rng);

    diffmath::Tape t(true);
    diffmath::TapeBinding bind(t, wm.params(), true);
    ModelTrainStats stats;
    RngStream nrng(12);
    diffmath::Var loss = wm.reconstruction_loss(t, bind, batch, nrng, &stats);
    CHECK(t.val(loss)[0] ==
          doctest::Approx(-(stats.j_o + stats.j_r) + mc.beta * stats.kl).epsilon(1e-9));
    CHECK(stats.kl >= 0.0);
}

TEST_CASE("prior chain stays finite over 50 steps") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(13).child("model-init"));
    RngStream rng(14);
    LatentState s = wm.initial_state(4);
    for (int t = 0; t < 50; ++t) {
        s = wm.prior_step(s, randn({4, mc.action_dim}, rng), randn({4, mc.stoch}, rng));
        for (std::size_t i = 0; i < s.deter.size(); ++i) CHECK(std::isfinite(s.deter[i]));
        for (std::size_t i = 0; i < s.stoch.size(); ++i) CHECK(std::isfinite(s.stoch[i]));
    }
    Array r = wm.decode_reward(s);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::isfinite(r[i]));
}

TEST_CASE("training reduces the reconstruction loss on a fixed batch") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(15).child("model-init"));
    RngStream rng(16);
    SequenceBatch batch = random_batch(4, 6, mc, rng);

    RngStream trng(17);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
        ModelTrainStats st = wm.train_model_batch(batch, trng);
        REQUIRE(!st.skipped);
        REQUIRE(std::isfinite(st.loss));
        if (step == 0) first = st.loss;
        last = st.loss;
    }
    CHECK(last < first);
}

TEST_CASE("identical seeds give bit-identical training trajectories") {
    WorldModelConfig mc = small_config();
    WorldModel a(mc, RngStream(18).child("model-init"));
    WorldModel b(mc, RngStream(18).child("model-init"));
    RngStream rng(19);
    SequenceBatch batch = random_batch(3, 5, mc, rng);

    RngStream ta(20), tb(20);
    for (int step = 0; step < 5; ++step) {
        ModelTrainStats sa = a.train_model_batch(batch, ta);
        ModelTrainStats sb = b.train_model_batch(batch, tb);
        CHECK(sa.loss == sb.loss);
    }
    const auto& pa = a.params().items();
    const auto& pb = b.params().items();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].value.size(); ++j)
            CHECK(pa[i].value[j] == pb[i].value[j]);
}

TEST_CASE("numeric entry points see parameter updates") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(21).child("model-init"));
    RngStream rng(22);
    LatentState prev = wm.initial_state(1);
    Array action = randn({1, mc.action_dim}, rng);
    Array noise = randn({1, mc.stoch}, rng);

    LatentState before1 = wm.prior_step(prev, action, noise);
    LatentState before2 = wm.prior_step(prev, action, noise);
    for (std::size_t i = 0; i < before1.deter.size(); ++i)
        CHECK(before1.deter[i] == before2.deter[i]);  // scratch reuse is pure

    SequenceBatch batch = random_batch(2, 4, mc, rng);
    RngStream trng(23);
    wm.train_model_batch(batch, trng);

    LatentState after = wm.prior_step(prev, action, noise);
    bool changed = false;
    for (std::size_t i = 0; i < after.deter.size(); ++i)
        changed |= (after.deter[i] != before1.deter[i]);
    CHECK(changed);
}

TEST_CASE("belief filter update equals the posterior step") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(24).child("model-init"));
    auto belief = wm.make_belief_filter();
    RngStream rng(25);

    Array action({mc.action_dim});
    Array obs({mc.obs_dim});
    for (int i = 0; i < mc.action_dim; ++i) action[i] = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < mc.obs_dim; ++i) obs[i] = rng.normal();

    RngStream b1(26), b2(26);
    LatentState via_belief = belief->update(belief->initial(), action, obs, b1);

    Array arow({1, mc.action_dim});
    for (int i = 0; i < mc.action_dim; ++i) arow[i] = action[i];
    Array orow({1, mc.obs_dim});
    for (int i = 0; i < mc.obs_dim; ++i) orow[i] = obs[i];
    LatentState direct = wm.posterior_step(wm.initial_state(1), arow, orow,
                                           normal_rows({1, mc.stoch}, b2));
    for (std::size_t i = 0; i < direct.deter.size(); ++i)
        CHECK(via_belief.deter[i] == direct.deter[i]);
    for (std::size_t i = 0; i < direct.stoch.size(); ++i)
        CHECK(via_belief.stoch[i] == direct.stoch[i]);
}

TEST_CASE("imagination substrate matches the numeric prior step") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(27).child("model-init"));
    RngStream rng(28);
    LatentState start = wm.initial_state(2);
    start.stoch = randn({2, mc.stoch}, rng);
    Array actions = randn({2, mc.action_dim}, rng);
    Array noise = randn({2, mc.stoch}, rng);

    LatentState numeric = wm.prior_step(start, actions, noise);

    diffmath::Tape t(false);
    auto bound = wm.imagination().bind(t);
    LatentVars s0 = bound->lift(start);
    LatentVars s1 = bound->step(s0, t.constant(actions), noise);
    const Array& deter = t.val(s1.deter);
    const Array& stoch = t.val(s1.stoch);
    for (std::size_t i = 0; i < deter.size(); ++i) CHECK(deter[i] == numeric.deter[i]);
    for (std::size_t i = 0; i < stoch.size(); ++i) CHECK(stoch[i] == numeric.stoch[i]);

    const Array& rew = t.val(bound->reward(s1));
    Array rn = wm.decode_reward(numeric);
    for (int b = 0; b < 2; ++b) CHECK(rew[b] == rn[b]);
}

TEST_CASE("malformed batches are rejected") {
    WorldModelConfig mc = small_config();
    WorldModel wm(mc, RngStream(29).child("model-init"));
    RngStream rng(30);
    SequenceBatch batch = random_batch(2, 3, mc, rng);
    batch.obs.pop_back();
    CHECK_THROWS_AS(wm.train_model_batch(batch, rng), std::invalid_argument);
}
