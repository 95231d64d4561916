#pragma once

// Plain serial implementations, written as directly as possible from the
// operation definitions. They are deliberately independent of the kernels in
// src/ and serve as oracles for the unit tests and as the baseline side of
// the benchmark target. Not linked into the core library.

#include "udr/kernels.hpp"
#include "udr/tensor.hpp"

namespace udr::reference {

// Quadruple-loop correlation over (ci, kh, kw) per output element.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias,
                 std::int64_t stride, kernels::Pad pad);

// (x - mu) / sqrt(var + eps) * gamma + beta, channel stats per location.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                     T eps);

// Non-separable gather form: each output pixel samples its four neighbours.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out);

// O(n^2) direct DFT per channel.
template <typename T>
ComplexTensor<T> dft2(const Tensor<T>& x);

}  // namespace udr::reference
