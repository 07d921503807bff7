#include "lpln/params.hpp"

#include <cassert>
#include <cmath>

namespace lpln::diffmath {

Param& ParameterSet::add(const std::string& name, Array init) {
    assert(find(name) == nullptr);
    Param p;
    p.name = name;
    p.m = Array(init.shape());
    p.v = Array(init.shape());
    p.value = std::move(init);
    params_.push_back(std::move(p));
    return params_.back();
}

Param* ParameterSet::find(const std::string& name) {
    for (Param& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

const Param* ParameterSet::find(const std::string& name) const {
    for (const Param& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t ParameterSet::total_size() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
}

TapeBinding::TapeBinding(Tape& tape, ParameterSet& set, bool trainable)
    : tape_(&tape), set_(&set), trainable_(trainable) {
    vars_.reserve(set.params_.size());
    for (Param& p : set.params_) vars_.push_back(tape.leaf(p.value, trainable));
}

Var TapeBinding::operator[](const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (set_->params_[i].name == name) return vars_[i];
    assert(false && "unknown parameter name");
    return Var{};
}

double TapeBinding::adam_step(const AdamConfig& cfg) {
    assert(trainable_);
    double sq = 0.0;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        const Array& g = tape_->grad(vars_[i]);
        for (std::size_t j = 0; j < g.size(); ++j) sq += g[j] * g[j];
    }
    double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) return norm;

    double gscale = (cfg.clip > 0.0 && norm > cfg.clip) ? cfg.clip / norm : 1.0;
    set_->step_ += 1;
    const double t = static_cast<double>(set_->step_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (std::size_t i = 0; i < vars_.size(); ++i) {
        Param& p = set_->params_[i];
        const Array& g = tape_->grad(vars_[i]);
        const bool has_grad = !g.empty();
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double gj = has_grad ? g[j] * gscale : 0.0;
            p.m[j] = cfg.beta1 * p.m[j] + (1.0 - cfg.beta1) * gj;
            p.v[j] = cfg.beta2 * p.v[j] + (1.0 - cfg.beta2) * gj * gj;
            double mhat = p.m[j] / bc1;
            double vhat = p.v[j] / bc2;
            p.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    set_->bump_version();
    return norm;
}

Array glorot_uniform(int fan_in, int fan_out, RngStream& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Array w({fan_in, fan_out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
    return w;
}

}  // namespace lpln::diffmath
