#pragma once

#include <cstdint>

#include "udr/model.hpp"

namespace udr::train {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers parallel to the parameter registry.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  void init(const model::ParamRegistry<T>& params);
  bool initialized() const { return !m.empty(); }
};

// Bias-corrected Adam update from the gradients stored on the registry Vars.
// Parameters without an accumulated gradient are treated as zero-gradient.
template <typename T>
void adam_step(model::ParamRegistry<T>& params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace udr::train
