#include "udr/optim.hpp"

#include <cmath>

#include "udr/runtime.hpp"

namespace udr::train {

template <typename T>
void AdamState<T>::init(const model::ParamRegistry<T>& params) {
  m.clear();
  v.clear();
  m.reserve(params.items().size());
  v.reserve(params.items().size());
  for (const auto& [name, var] : params.items()) {
    m.emplace_back(var.value().shape());
    v.emplace_back(var.value().shape());
  }
  step = 0;
}

template <typename T>
void adam_step(model::ParamRegistry<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  if (!state.initialized()) state.init(params);
  if (state.m.size() != params.items().size()) {
    throw ArgumentError("adam_step: optimizer state does not match parameter registry");
  }
  state.step += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.items().size(); ++p) {
    auto& var = params.items()[p].second;
    Tensor<T>& pm = state.m[p];
    Tensor<T>& pv = state.v[p];
    if (!(pm.shape() == var.value().shape())) {
      throw ShapeError("adam_step: moment shape mismatch for " + params.items()[p].first);
    }
    const bool has_grad = var.has_grad();
    const T* g = has_grad ? var.grad().data() : nullptr;
    T* w = var.value().data();
    T* mp = pm.data();
    T* vp = pv.data();
    const std::int64_t n = var.value().numel();
    constexpr std::int64_t kChunk = 1 << 14;
    const std::int64_t chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::int64_t ch) {
      const std::int64_t lo = ch * kChunk;
      const std::int64_t hi = std::min(n, lo + kChunk);
      for (std::int64_t i = lo; i < hi; ++i) {
        const double gi = g ? static_cast<double>(g[i]) : 0.0;
        const double mi = cfg.beta1 * static_cast<double>(mp[i]) + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * static_cast<double>(vp[i]) + (1.0 - cfg.beta2) * gi * gi;
        mp[i] = static_cast<T>(mi);
        vp[i] = static_cast<T>(vi);
        const double mhat = mi / b1t;
        const double vhat = vi / b2t;
        w[i] = static_cast<T>(static_cast<double>(w[i]) -
                              cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
      }
    });
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(model::ParamRegistry<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(model::ParamRegistry<double>&, AdamState<double>&,
                                const AdamConfig&);

}  // namespace udr::train
