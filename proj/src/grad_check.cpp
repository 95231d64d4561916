#include "udr/grad_check.hpp"

#include <cmath>

namespace udr::nn {

template <typename T>
double finite_diff_max_rel_err(const std::function<double()>& evaluate,
                               const std::vector<Tensor<T>*>& params,
                               const std::vector<Tensor<T>>& analytic, double eps,
                               double denom_floor) {
  if (params.size() != analytic.size()) {
    throw ArgumentError("finite_diff_max_rel_err: params/analytic size mismatch");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& t = *params[p];
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const T saved = t[i];
      t[i] = saved + static_cast<T>(eps);
      const double fp = evaluate();
      t[i] = saved - static_cast<T>(eps);
      const double fm = evaluate();
      t[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = static_cast<double>(analytic[p][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

template <typename T>
double grad_check(const std::function<Var<T>(std::vector<Var<T>>&)>& fn,
                  std::vector<Tensor<T>> inputs, double eps) {
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (auto& t : inputs) vars.emplace_back(t, /*requires_grad=*/true);

  Var<T> out = fn(vars);
  out.backward();

  std::vector<Tensor<T>> analytic;
  std::vector<Tensor<T>*> params;
  analytic.reserve(vars.size());
  for (auto& v : vars) {
    analytic.push_back(v.grad());
    params.push_back(&v.value());
  }

  auto evaluate = [&]() {
    NoGradGuard ng;
    Var<T> r = fn(vars);
    return static_cast<double>(r.value()[0]);
  };
  return finite_diff_max_rel_err<T>(evaluate, params, analytic, eps);
}

template double finite_diff_max_rel_err<float>(const std::function<double()>&,
                                               const std::vector<Tensor<float>*>&,
                                               const std::vector<Tensor<float>>&, double, double);
template double finite_diff_max_rel_err<double>(const std::function<double()>&,
                                                const std::vector<Tensor<double>*>&,
                                                const std::vector<Tensor<double>>&, double,
                                                double);
template double grad_check<float>(const std::function<Var<float>(std::vector<Var<float>>&)>&,
                                  std::vector<Tensor<float>>, double);
template double grad_check<double>(const std::function<Var<double>(std::vector<Var<double>>&)>&,
                                   std::vector<Tensor<double>>, double);

}  // namespace udr::nn
