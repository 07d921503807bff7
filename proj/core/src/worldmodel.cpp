#include "lpln/worldmodel.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "lpln/ops.hpp"

namespace lpln::worldmodel {

using diffmath::Tape;
using diffmath::TapeBinding;
using diffmath::Var;
using namespace diffmath;  // ops

// All Var-level model math, usable on any tape through any binding.
struct WorldModel::Program {
    Tape& t;
    TapeBinding& bind;
    const WorldModelConfig& cfg;

    Var stddev_head(Var raw) const { return add_scalar(softplus(raw), 1e-4); }

    Var embed_obs(Var obs) const {
        return elu(affine(obs, bind["embed/W"], bind["embed/b"]));
    }

    // Gated recurrent cell over (stoch, action), state = deter.
    Var deter_step(Var deter, Var stoch, Var action) const {
        Var x = elu(affine(concat_cols(stoch, action), bind["gru/in_W"], bind["gru/in_b"]));
        Var hx = concat_cols(x, deter);
        Var r = sigmoid(affine(hx, bind["gru/reset_W"], bind["gru/reset_b"]));
        Var z = sigmoid(affine(hx, bind["gru/update_W"], bind["gru/update_b"]));
        Var c = tanh_op(
            affine(concat_cols(x, mul(r, deter)), bind["gru/cand_W"], bind["gru/cand_b"]));
        return add(deter, mul(z, sub(c, deter)));
    }

    std::pair<Var, Var> prior_stats(Var deter) const {
        Var h = elu(affine(deter, bind["prior/h_W"], bind["prior/h_b"]));
        return {affine(h, bind["prior/mean_W"], bind["prior/mean_b"]),
                stddev_head(affine(h, bind["prior/std_W"], bind["prior/std_b"]))};
    }

    std::pair<Var, Var> posterior_stats(Var deter, Var emb) const {
        Var h = elu(affine(concat_cols(deter, emb), bind["post/h_W"], bind["post/h_b"]));
        return {affine(h, bind["post/mean_W"], bind["post/mean_b"]),
                stddev_head(affine(h, bind["post/std_W"], bind["post/std_b"]))};
    }

    Var features(Var deter, Var stoch) const { return concat_cols(deter, stoch); }

    Var decode_obs_mean(Var feat) const {
        Var h = elu(affine(feat, bind["dec_obs/h_W"], bind["dec_obs/h_b"]));
        return affine(h, bind["dec_obs/out_W"], bind["dec_obs/out_b"]);
    }

    Var decode_reward_mean(Var feat) const {
        Var h = elu(affine(feat, bind["dec_rew/h_W"], bind["dec_rew/h_b"]));
        // Both environments emit rewards in (0, 1]; squashing the mean keeps
        // imagined reward inside that range off the training distribution.
        return sigmoid(affine(h, bind["dec_rew/out_W"], bind["dec_rew/out_b"]));  // [B,1]
    }
};

namespace {

class LearnedDynamicsView final : public DynamicsView {
public:
    explicit LearnedDynamicsView(const WorldModel* wm) : wm_(wm) {}
    int action_dim() const override { return wm_->config().action_dim; }
    int feature_dim() const override { return wm_->config().feature_dim(); }
    int noise_dim() const override { return wm_->config().stoch; }
    LatentState prior_step(const LatentState& s, const Array& actions,
                           const Array& noise) const override {
        return wm_->prior_step(s, actions, noise);
    }
    Array reward_mean(const LatentState& s) const override { return wm_->decode_reward(s); }
    Array features(const LatentState& s) const override { return wm_->features(s); }

private:
    const WorldModel* wm_;
};

class LearnedBelief final : public BeliefFilter {
public:
    explicit LearnedBelief(const WorldModel* wm) : wm_(wm) {}
    LatentState initial() const override { return wm_->initial_state(1); }
    LatentState update(const LatentState& prev, const Array& action, const Array& obs,
                       RngStream& rng) const override {
        const auto& cfg = wm_->config();
        Array a({1, cfg.action_dim});
        for (int i = 0; i < cfg.action_dim; ++i) a[i] = action[i];
        Array o({1, cfg.obs_dim});
        for (int i = 0; i < cfg.obs_dim; ++i) o[i] = obs[i];
        return wm_->posterior_step(prev, a, o, normal_rows({1, cfg.stoch}, rng));
    }

private:
    const WorldModel* wm_;
};

}  // namespace

class LearnedImagination final : public ImaginationDynamics {
public:
    explicit LearnedImagination(WorldModel* wm) : wm_(wm) {}
    int action_dim() const override { return wm_->config().action_dim; }
    int feature_dim() const override { return wm_->config().feature_dim(); }
    int noise_dim() const override { return wm_->config().stoch; }
    std::unique_ptr<BoundDynamics> bind(Tape& t) const override;

private:
    WorldModel* wm_;
};

namespace {

class BoundLearned final : public BoundDynamics {
public:
    BoundLearned(Tape& t, WorldModel* wm)
        : bind_(t, wm->params(), false), prog_{t, bind_, wm->config()}, t_(&t) {}

    LatentVars lift(const LatentState& s) override {
        return LatentVars{t_->constant(s.deter), t_->constant(s.stoch)};
    }
    LatentVars step(const LatentVars& s, Var actions, const Array& noise) override {
        Var h = prog_.deter_step(s.deter, s.stoch, actions);
        auto [m, sd] = prog_.prior_stats(h);
        return LatentVars{h, reparam_sample(m, sd, noise)};
    }
    Var reward(const LatentVars& s) override {
        return prog_.decode_reward_mean(prog_.features(s.deter, s.stoch));
    }
    Var features(const LatentVars& s) override {
        return prog_.features(s.deter, s.stoch);
    }

private:
    TapeBinding bind_;
    WorldModel::Program prog_;
    Tape* t_;
};

}  // namespace

std::unique_ptr<BoundDynamics> LearnedImagination::bind(Tape& t) const {
    return std::make_unique<BoundLearned>(t, wm_);
}

WorldModel::WorldModel(WorldModelConfig cfg, RngStream init_rng) : cfg_(cfg) {
    if (cfg.obs_dim <= 0 || cfg.action_dim <= 0)
        throw std::invalid_argument("world model needs positive obs/action dims");
    auto w = [&](const std::string& name, int in, int out) {
        params_.add(name, diffmath::glorot_uniform(in, out, init_rng));
    };
    auto b = [&](const std::string& name, int n) { params_.add(name, Array({n})); };

    w("embed/W", cfg.obs_dim, cfg.embed);
    b("embed/b", cfg.embed);
    w("gru/in_W", cfg.stoch + cfg.action_dim, cfg.hidden);
    b("gru/in_b", cfg.hidden);
    w("gru/reset_W", cfg.hidden + cfg.deter, cfg.deter);
    b("gru/reset_b", cfg.deter);
    w("gru/update_W", cfg.hidden + cfg.deter, cfg.deter);
    b("gru/update_b", cfg.deter);
    w("gru/cand_W", cfg.hidden + cfg.deter, cfg.deter);
    b("gru/cand_b", cfg.deter);
    w("prior/h_W", cfg.deter, cfg.hidden);
    b("prior/h_b", cfg.hidden);
    w("prior/mean_W", cfg.hidden, cfg.stoch);
    b("prior/mean_b", cfg.stoch);
    w("prior/std_W", cfg.hidden, cfg.stoch);
    b("prior/std_b", cfg.stoch);
    w("post/h_W", cfg.deter + cfg.embed, cfg.hidden);
    b("post/h_b", cfg.hidden);
    w("post/mean_W", cfg.hidden, cfg.stoch);
    b("post/mean_b", cfg.stoch);
    w("post/std_W", cfg.hidden, cfg.stoch);
    b("post/std_b", cfg.stoch);
    w("dec_obs/h_W", cfg.feature_dim(), cfg.hidden);
    b("dec_obs/h_b", cfg.hidden);
    w("dec_obs/out_W", cfg.hidden, cfg.obs_dim);
    b("dec_obs/out_b", cfg.obs_dim);
    w("dec_rew/h_W", cfg.feature_dim(), cfg.hidden);
    b("dec_rew/h_b", cfg.hidden);
    w("dec_rew/out_W", cfg.hidden, 1);
    b("dec_rew/out_b", 1);

    dyn_view_ = std::make_unique<LearnedDynamicsView>(this);
    imagination_ = std::make_unique<LearnedImagination>(this);
}

LatentState WorldModel::initial_state(int batch) const {
    LatentState s;
    s.deter = Array({batch, cfg_.deter});
    s.stoch = Array({batch, cfg_.stoch});
    s.mean = Array({batch, cfg_.stoch});
    s.stddev = Array({batch, cfg_.stoch}, 1.0);
    return s;
}

WorldModel::Program WorldModel::scratch_program() const {
    if (!scratch_ || scratch_version_ != params_.version()) {
        scratch_ = std::make_unique<Tape>(false);
        scratch_bind_ = std::make_unique<TapeBinding>(
            *scratch_, const_cast<diffmath::ParameterSet&>(params_), false);
        scratch_mark_ = scratch_->size();
        scratch_version_ = params_.version();
    }
    return Program{*scratch_, *scratch_bind_, cfg_};
}

void WorldModel::drop_scratch_nodes() const { scratch_->truncate(scratch_mark_); }

LatentState WorldModel::posterior_step(const LatentState& prev, const Array& action,
                                       const Array& obs, const Array& noise) const {
    Program p = scratch_program();
    Tape& t = p.t;
    Var h = p.deter_step(t.constant(prev.deter), t.constant(prev.stoch), t.constant(action));
    Var emb = p.embed_obs(t.constant(obs));
    auto [m, sd] = p.posterior_stats(h, emb);
    Var s = reparam_sample(m, sd, noise);
    LatentState out{t.val(h), t.val(s), t.val(m), t.val(sd)};
    drop_scratch_nodes();
    return out;
}

LatentState WorldModel::prior_step(const LatentState& prev, const Array& action,
                                   const Array& noise) const {
    Program p = scratch_program();
    Tape& t = p.t;
    Var h = p.deter_step(t.constant(prev.deter), t.constant(prev.stoch), t.constant(action));
    auto [m, sd] = p.prior_stats(h);
    Var s = reparam_sample(m, sd, noise);
    LatentState out{t.val(h), t.val(s), t.val(m), t.val(sd)};
    drop_scratch_nodes();
    return out;
}

Array WorldModel::decode_observation(const LatentState& s) const {
    Program p = scratch_program();
    Tape& t = p.t;
    Var mean = p.decode_obs_mean(p.features(t.constant(s.deter), t.constant(s.stoch)));
    Array out = t.val(mean);
    drop_scratch_nodes();
    return out;
}

Array WorldModel::decode_reward(const LatentState& s) const {
    Program p = scratch_program();
    Tape& t = p.t;
    Var mean = p.decode_reward_mean(p.features(t.constant(s.deter), t.constant(s.stoch)));
    const Array& v = t.val(mean);  // [B,1]
    Array out({v.rows()});
    for (int b = 0; b < v.rows(); ++b) out[b] = v.at(b, 0);
    drop_scratch_nodes();
    return out;
}

Array WorldModel::features(const LatentState& s) const {
    Program p = scratch_program();
    Tape& t = p.t;
    Array out = t.val(p.features(t.constant(s.deter), t.constant(s.stoch)));
    drop_scratch_nodes();
    return out;
}

Var WorldModel::reconstruction_loss(Tape& t, TapeBinding& bind, const SequenceBatch& batch,
                                    RngStream& rng, ModelTrainStats* stats) const {
    if (batch.length <= 0 || batch.batch <= 0 ||
        static_cast<int>(batch.obs.size()) != batch.length ||
        static_cast<int>(batch.actions.size()) != batch.length ||
        static_cast<int>(batch.rewards.size()) != batch.length)
        throw std::invalid_argument("malformed sequence batch");

    Program p{t, bind, cfg_};
    const int B = batch.batch;
    Var h = t.constant(Array({B, cfg_.deter}));
    Var s = t.constant(Array({B, cfg_.stoch}));
    Array obs_sd({B, cfg_.obs_dim}, cfg_.decoder_stddev);
    Array rew_sd({B, 1}, cfg_.decoder_stddev);

    Var loss;
    double jo = 0.0, jr = 0.0, kld = 0.0;
    auto batch_mean = [&](const Array& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += v[i];
        return acc / static_cast<double>(v.size());
    };

    for (int ti = 0; ti < batch.length; ++ti) {
        Var a = t.constant(batch.actions[ti]);
        Var o = t.constant(batch.obs[ti]);
        Var r = t.constant(batch.rewards[ti]);
        h = p.deter_step(h, s, a);
        auto [pm, psd] = p.prior_stats(h);
        Var emb = p.embed_obs(o);
        auto [qm, qsd] = p.posterior_stats(h, emb);
        s = reparam_sample(qm, qsd, normal_rows({B, cfg_.stoch}, rng));
        Var feat = p.features(h, s);
        Var lo = gaussian_log_prob(o, p.decode_obs_mean(feat), t.constant(obs_sd));
        Var lr = gaussian_log_prob(r, p.decode_reward_mean(feat), t.constant(rew_sd));
        Var kl = diag_gaussian_kl(qm, qsd, pm, psd);
        Var step = mean_all(add(scale(add(lo, lr), -1.0), scale(kl, cfg_.beta)));
        loss = loss.valid() ? add(loss, step) : step;
        jo += batch_mean(t.val(lo));
        jr += batch_mean(t.val(lr));
        kld += batch_mean(t.val(kl));
    }

    if (stats) {
        stats->loss = t.val(loss)[0];
        stats->j_o = jo;
        stats->j_r = jr;
        stats->kl = kld;
    }
    return loss;
}

ModelTrainStats WorldModel::train_model_batch(const SequenceBatch& batch, RngStream& rng) {
    Tape t(true);
    TapeBinding bind(t, params_, true);
    ModelTrainStats st;
    Var loss = reconstruction_loss(t, bind, batch, rng, &st);
    if (!std::isfinite(st.loss)) {
        st.skipped = true;
        std::cerr << "[incident] world model loss non-finite, update skipped\n";
        return st;
    }
    t.backward(loss);
    diffmath::AdamConfig ac;
    ac.lr = cfg_.lr;
    ac.clip = cfg_.grad_clip;
    st.grad_norm = bind.adam_step(ac);
    if (!std::isfinite(st.grad_norm)) {
        st.skipped = true;
        std::cerr << "[incident] world model gradient non-finite, update skipped\n";
    }
    return st;
}

std::unique_ptr<BeliefFilter> WorldModel::make_belief_filter() const {
    return std::make_unique<LearnedBelief>(this);
}

}  // namespace lpln::worldmodel
