#include "lpln/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace lpln::diffmath {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_str(const Array& a) {
    std::string s = "[";
    for (std::size_t i = 0; i < a.shape().size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a.shape()[i]);
    }
    return s + "]";
}

void require_same_shape(const char* op, const Array& a, const Array& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) +
                                    " vs " + shape_str(b));
}

void require_positive(const char* op, const Array& stddev) {
    for (std::size_t i = 0; i < stddev.size(); ++i)
        if (!(stddev[i] > 0.0))
            throw std::invalid_argument(std::string(op) + ": stddev must be positive");
}

Eigen::Map<const EMat> cmap(const Array& a, int rows, int cols) {
    return Eigen::Map<const EMat>(a.data(), rows, cols);
}
Eigen::Map<EMat> mmap(Array& a, int rows, int cols) {
    return Eigen::Map<EMat>(a.data(), rows, cols);
}

// Wraps closure creation so no-grad tapes skip std::function construction
// on the hot planner path.
template <class F>
Var make_node(Tape& t, Array value, bool ng, F&& f) {
    if (!ng) return t.push_node(std::move(value), false, {});
    return t.push_node(std::move(value), true,
                       std::function<void(Tape&, int)>(std::forward<F>(f)));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var affine(Var x, Var W, Var b) {
    Tape& t = *x.tape;
    const Array& xv = t.val(x);
    const Array& wv = t.val(W);
    const Array& bv = t.val(b);
    if (xv.shape().size() != 2 || wv.shape().size() != 2 || wv.shape()[0] != xv.shape()[1] ||
        static_cast<int>(bv.size()) != wv.shape()[1])
        throw std::invalid_argument("affine: incompatible shapes x=" + shape_str(xv) +
                                    " W=" + shape_str(wv) + " b=" + shape_str(bv));
    const int B = xv.shape()[0], I = xv.shape()[1], O = wv.shape()[1];

    Array y({B, O});
    mmap(y, B, O).noalias() = cmap(xv, B, I) * cmap(wv, I, O);
    mmap(y, B, O).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), O);

    bool ng = t.needs_grad(x) || t.needs_grad(W) || t.needs_grad(b);
    int xid = x.id, wid = W.id, bid = b.id;
    return make_node(t, std::move(y), ng, [=](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& xv = t.value_of(xid);
        const Array& wv = t.value_of(wid);
        auto gm = cmap(g, B, O);
        if (t.needs_grad(xid))
            mmap(t.grad_buffer(xid), B, I).noalias() += gm * cmap(wv, I, O).transpose();
        if (t.needs_grad(wid))
            mmap(t.grad_buffer(wid), I, O).noalias() += cmap(xv, B, I).transpose() * gm;
        if (t.needs_grad(bid)) {
            Array& bg = t.grad_buffer(bid);
            Eigen::Map<Eigen::RowVectorXd>(bg.data(), O) += gm.colwise().sum();
        }
    });
}

Var tanh_op(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value_of(self);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Var elu(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value_of(self);
        const Array& x = t.value_of(pid);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i)
            pg[i] += g[i] * (x[i] > 0.0 ? 1.0 : y[i] + 1.0);
    });
}

Var softplus(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& x = t.value_of(pid);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * stable_sigmoid(x[i]);
    });
}

Var exp_op(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]);
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value_of(self);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * y[i];
    });
}

Var log_op(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(x[i]);
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& x = t.value_of(pid);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] / x[i];
    });
}

Var sigmoid(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value_of(self);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var add(Var a, Var b) {
    Tape& t = *a.tape;
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    require_same_shape("add", av, bv);
    Array y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    int aid = a.id, bid = b.id;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return make_node(t, std::move(y), ng, [aid, bid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        if (t.needs_grad(aid)) {
            Array& ga = t.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(bid)) {
            Array& gb = t.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = *a.tape;
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    require_same_shape("sub", av, bv);
    Array y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    int aid = a.id, bid = b.id;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return make_node(t, std::move(y), ng, [aid, bid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        if (t.needs_grad(aid)) {
            Array& ga = t.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(bid)) {
            Array& gb = t.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = *a.tape;
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    require_same_shape("mul", av, bv);
    Array y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    int aid = a.id, bid = b.id;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return make_node(t, std::move(y), ng, [aid, bid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& av = t.value_of(aid);
        const Array& bv = t.value_of(bid);
        if (t.needs_grad(aid)) {
            Array& ga = t.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(bid)) {
            Array& gb = t.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b) {
    Tape& t = *a.tape;
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    require_same_shape("div", av, bv);
    Array y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
    int aid = a.id, bid = b.id;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return make_node(t, std::move(y), ng, [aid, bid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& y = t.value_of(self);
        const Array& bv = t.value_of(bid);
        if (t.needs_grad(aid)) {
            Array& ga = t.grad_buffer(aid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.needs_grad(bid)) {
            Array& gb = t.grad_buffer(bid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / bv[i];
        }
    });
}

Var scale(Var v, double k) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = k * x[i];
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid, k](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += k * g[i];
    });
}

Var add_scalar(Var v, double k) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    Array y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + k;
    int pid = v.id;
    return make_node(t, std::move(y), t.needs_grad(v), [pid](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = *a.tape;
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    if (av.shape().size() != 2 || bv.shape().size() != 2 || av.shape()[0] != bv.shape()[0])
        throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(av) + " vs " +
                                    shape_str(bv));
    const int B = av.shape()[0], Ca = av.shape()[1], Cb = bv.shape()[1];
    Array y({B, Ca + Cb});
    for (int r = 0; r < B; ++r) {
        for (int c = 0; c < Ca; ++c) y.at(r, c) = av.at(r, c);
        for (int c = 0; c < Cb; ++c) y.at(r, Ca + c) = bv.at(r, c);
    }
    int aid = a.id, bid = b.id;
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return make_node(t, std::move(y), ng, [=](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        if (t.needs_grad(aid)) {
            Array& ga = t.grad_buffer(aid);
            for (int r = 0; r < B; ++r)
                for (int c = 0; c < Ca; ++c) ga.at(r, c) += g.at(r, c);
        }
        if (t.needs_grad(bid)) {
            Array& gb = t.grad_buffer(bid);
            for (int r = 0; r < B; ++r)
                for (int c = 0; c < Cb; ++c) gb.at(r, c) += g.at(r, Ca + c);
        }
    });
}

Var sum_all(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    int pid = v.id;
    return make_node(t, Array::scalar(s), t.needs_grad(v), [pid](Tape& t, int self) {
        double g = t.grad_buffer(self)[0];
        Array& pg = t.grad_buffer(pid);
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
}

Var mean_all(Var v) {
    Tape& t = *v.tape;
    const Array& x = t.val(v);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
    const double inv_n = 1.0 / static_cast<double>(x.size());
    int pid = v.id;
    return make_node(t, Array::scalar(s * inv_n), t.needs_grad(v),
                     [pid, inv_n](Tape& t, int self) {
                         double g = t.grad_buffer(self)[0] * inv_n;
                         Array& pg = t.grad_buffer(pid);
                         for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g;
                     });
}

Var stop_gradient(Var v) {
    Tape& t = *v.tape;
    return t.constant(t.val(v));
}

Var gaussian_log_prob(Var x, Var mean, Var stddev) {
    Tape& t = *x.tape;
    const Array& xv = t.val(x);
    const Array& mv = t.val(mean);
    const Array& sv = t.val(stddev);
    require_same_shape("gaussian_log_prob", xv, mv);
    require_same_shape("gaussian_log_prob", xv, sv);
    if (xv.shape().size() != 2)
        throw std::invalid_argument("gaussian_log_prob: rank-2 input required, got " +
                                    shape_str(xv));
    require_positive("gaussian_log_prob", sv);
    const int B = xv.shape()[0], D = xv.shape()[1];
    static const double kLog2Pi = std::log(2.0 * M_PI);

    Array y({B});
    for (int r = 0; r < B; ++r) {
        double acc = 0.0;
        for (int c = 0; c < D; ++c) {
            double s = sv.at(r, c);
            double z = (xv.at(r, c) - mv.at(r, c)) / s;
            acc += -0.5 * kLog2Pi - std::log(s) - 0.5 * z * z;
        }
        y[r] = acc;
    }

    int xid = x.id, mid = mean.id, sid = stddev.id;
    bool ng = t.needs_grad(x) || t.needs_grad(mean) || t.needs_grad(stddev);
    return make_node(t, std::move(y), ng, [=](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& xv = t.value_of(xid);
        const Array& mv = t.value_of(mid);
        const Array& sv = t.value_of(sid);
        bool nx = t.needs_grad(xid), nm = t.needs_grad(mid), ns = t.needs_grad(sid);
        Array* gx = nx ? &t.grad_buffer(xid) : nullptr;
        Array* gm = nm ? &t.grad_buffer(mid) : nullptr;
        Array* gs = ns ? &t.grad_buffer(sid) : nullptr;
        for (int r = 0; r < B; ++r) {
            double gr = g[r];
            if (gr == 0.0) continue;
            for (int c = 0; c < D; ++c) {
                double s = sv.at(r, c);
                double d = xv.at(r, c) - mv.at(r, c);
                double inv_s2 = 1.0 / (s * s);
                if (nm) gm->at(r, c) += gr * d * inv_s2;
                if (nx) gx->at(r, c) -= gr * d * inv_s2;
                if (ns) gs->at(r, c) += gr * (d * d * inv_s2 - 1.0) / s;
            }
        }
    });
}

Var diag_gaussian_kl(Var mean_p, Var stddev_p, Var mean_q, Var stddev_q) {
    Tape& t = *mean_p.tape;
    const Array& mp = t.val(mean_p);
    const Array& sp = t.val(stddev_p);
    const Array& mq = t.val(mean_q);
    const Array& sq = t.val(stddev_q);
    require_same_shape("diag_gaussian_kl", mp, sp);
    require_same_shape("diag_gaussian_kl", mp, mq);
    require_same_shape("diag_gaussian_kl", mp, sq);
    if (mp.shape().size() != 2)
        throw std::invalid_argument("diag_gaussian_kl: rank-2 input required, got " +
                                    shape_str(mp));
    require_positive("diag_gaussian_kl", sp);
    require_positive("diag_gaussian_kl", sq);
    const int B = mp.shape()[0], D = mp.shape()[1];

    Array y({B});
    for (int r = 0; r < B; ++r) {
        double acc = 0.0;
        for (int c = 0; c < D; ++c) {
            double a = sp.at(r, c), b = sq.at(r, c);
            double d = mp.at(r, c) - mq.at(r, c);
            acc += std::log(b / a) + (a * a + d * d) / (2.0 * b * b) - 0.5;
        }
        y[r] = acc;
    }

    int mpid = mean_p.id, spid = stddev_p.id, mqid = mean_q.id, sqid = stddev_q.id;
    bool ng = t.needs_grad(mean_p) || t.needs_grad(stddev_p) ||
              t.needs_grad(mean_q) || t.needs_grad(stddev_q);
    return make_node(t, std::move(y), ng, [=](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& mp = t.value_of(mpid);
        const Array& sp = t.value_of(spid);
        const Array& mq = t.value_of(mqid);
        const Array& sq = t.value_of(sqid);
        bool nmp = t.needs_grad(mpid), nsp = t.needs_grad(spid);
        bool nmq = t.needs_grad(mqid), nsq = t.needs_grad(sqid);
        Array* gmp = nmp ? &t.grad_buffer(mpid) : nullptr;
        Array* gsp = nsp ? &t.grad_buffer(spid) : nullptr;
        Array* gmq = nmq ? &t.grad_buffer(mqid) : nullptr;
        Array* gsq = nsq ? &t.grad_buffer(sqid) : nullptr;
        for (int r = 0; r < B; ++r) {
            double gr = g[r];
            if (gr == 0.0) continue;
            for (int c = 0; c < D; ++c) {
                double a = sp.at(r, c), b = sq.at(r, c);
                double d = mp.at(r, c) - mq.at(r, c);
                double inv_b2 = 1.0 / (b * b);
                if (nmp) gmp->at(r, c) += gr * d * inv_b2;
                if (nmq) gmq->at(r, c) -= gr * d * inv_b2;
                if (nsp) gsp->at(r, c) += gr * (a * inv_b2 - 1.0 / a);
                if (nsq) gsq->at(r, c) += gr * (1.0 / b - (a * a + d * d) * inv_b2 / b);
            }
        }
    });
}

Var reparam_sample(Var mean, Var stddev, const Array& noise) {
    Tape& t = *mean.tape;
    const Array& mv = t.val(mean);
    const Array& sv = t.val(stddev);
    require_same_shape("reparam_sample", mv, sv);
    require_same_shape("reparam_sample", mv, noise);
    Array y(mv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = mv[i] + sv[i] * noise[i];
    // noise lives on the tape as a constant so the closure stays small and
    // the draw is visible to debugging, but no gradient ever reaches it
    Var nz = t.constant(noise);
    int mid = mean.id, sid = stddev.id, nid = nz.id;
    bool ng = t.needs_grad(mean) || t.needs_grad(stddev);
    return make_node(t, std::move(y), ng, [=](Tape& t, int self) {
        const Array& g = t.grad_buffer(self);
        const Array& nv = t.value_of(nid);
        if (t.needs_grad(mid)) {
            Array& gm = t.grad_buffer(mid);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.needs_grad(sid)) {
            Array& gs = t.grad_buffer(sid);
            for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * nv[i];
        }
    });
}

}  // namespace lpln::diffmath
