#pragma once

#include <functional>
#include <vector>

#include "udr/autograd.hpp"

namespace udr::nn {

// Central finite differences against reverse-mode gradients.
//
// evaluate() must return the scalar under test from current parameter values;
// params are wiggled elementwise in place. analytic[i] matches params[i] in
// shape. Relative error uses max(|a|,|n|,denom_floor) as denominator.
template <typename T>
double finite_diff_max_rel_err(const std::function<double()>& evaluate,
                               const std::vector<Tensor<T>*>& params,
                               const std::vector<Tensor<T>>& analytic, double eps,
                               double denom_floor = 1e-3);

// Convenience wrapper: builds requires-grad Vars from the inputs, runs
// fn (which must return a scalar Var, e.g. sum of outputs), and compares the
// reverse-mode input gradients against central differences.
template <typename T>
double grad_check(const std::function<Var<T>(std::vector<Var<T>>&)>& fn,
                  std::vector<Tensor<T>> inputs, double eps = 1e-5);

}  // namespace udr::nn
