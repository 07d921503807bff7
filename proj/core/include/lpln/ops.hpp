#pragma once

// Differentiable ops over tape variables. All binary elementwise ops demand
// identical shapes; there is no implicit broadcasting anywhere, which keeps
// backward passes trivially auditable. Matrices are [rows, cols] row-major.

#include "lpln/array.hpp"
#include "lpln/tape.hpp"

namespace lpln::diffmath {

// y = x * W + b  with x [B,I], W [I,O], b [O]. The only matmul in the
// library; forward and both weight gradients run as dense GEMMs.
Var affine(Var x, Var W, Var b);

Var tanh_op(Var v);
Var elu(Var v);       // alpha = 1
Var softplus(Var v);  // stable log(1 + e^x)
Var exp_op(Var v);
Var log_op(Var v);
Var sigmoid(Var v);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var v, double k);
Var add_scalar(Var v, double k);

Var concat_cols(Var a, Var b);  // [B,I1] ++ [B,I2] -> [B,I1+I2]

Var sum_all(Var v);   // -> {1}
Var mean_all(Var v);  // -> {1}

// Value passthrough that blocks gradient flow.
Var stop_gradient(Var v);

// Row-wise diagonal Gaussian log density, summed over the feature axis.
// x, mean, stddev all [B,D]; result {B}.
Var gaussian_log_prob(Var x, Var mean, Var stddev);

// Row-wise KL(p || q) between diagonal Gaussians, summed over features.
// All inputs [B,D]; result {B}.
Var diag_gaussian_kl(Var mean_p, Var stddev_p, Var mean_q, Var stddev_q);

// mean + stddev * noise with noise held fixed; the pathwise gradient flows
// to mean and stddev only. noise must match the shape of mean.
Var reparam_sample(Var mean, Var stddev, const Array& noise);

}  // namespace lpln::diffmath
