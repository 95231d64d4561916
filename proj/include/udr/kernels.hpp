#pragma once

#include <utility>

#include "udr/tensor.hpp"

namespace udr::kernels {

enum class Pad { kSame, kValid };

// Output spatial dims for a correlation-style convolution.
// kSame pads (k-1)/2 on each side (k odd), so stride 1 preserves dims.
std::pair<std::int64_t, std::int64_t> conv_out_dims(std::int64_t h, std::int64_t w,
                                                    std::int64_t k, std::int64_t stride,
                                                    Pad pad);

// y[b,co,oh,ow] = bias[co] + sum_{ci,kh,kw} x[b,ci,oh*s-p+kh,ow*s-p+kw] * w[co,ci,kh,kw]
// w shape (Co,Ci,k,k), bias length Co (may be empty for no bias).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const std::vector<T>& bias, std::int64_t stride, Pad pad);

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Shape4 x_shape,
                                std::int64_t stride, Pad pad);

template <typename T>
Tensor<T> conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Shape4 w_shape,
                                  std::int64_t stride, Pad pad);

template <typename T>
std::vector<T> conv2d_backward_bias(const Tensor<T>& gy);

// Normalization over the channel axis at each (b,h,w) location.
// Returns y; mean/inv_std (one per location, length B*H*W) are written for backward.
template <typename T>
Tensor<T> layer_norm_forward(const Tensor<T>& x, const std::vector<T>& gamma,
                             const std::vector<T>& beta, T eps,
                             std::vector<T>* mean_out, std::vector<T>* inv_std_out);

template <typename T>
void layer_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const std::vector<T>& gamma,
                         const std::vector<T>& mean, const std::vector<T>& inv_std,
                         Tensor<T>* gx, std::vector<T>* ggamma, std::vector<T>* gbeta);

// (B,C,H,W) -> (B,C*r^2,H/r,W/r); out channel c*r^2 + dy*r + dx holds the
// (dy,dx) subgrid of in channel c (raster order within each block).
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t r);

// Inverse of pixel_unshuffle: (B,C*r^2,H,W) -> (B,C,H*r,W*r).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t r);

// Cyclic rotation of the non-batch axes: value at (b,c,h,w) lands at
// (b,h,w,c), so shape (B,C,H,W) -> (B,H,W,C). Applied three times = identity.
template <typename T>
Tensor<T> rotate_axes(const Tensor<T>& x);

// Bilinear resize with half-pixel centers (align-corners off), separable
// H-pass then W-pass.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out);

// Transpose of resize_bilinear: scatters gy (B,C,Ho,Wo) back to (B,C,Hi,Wi).
template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& gy, std::int64_t h_in, std::int64_t w_in);

enum class Act { kGelu, kRelu, kSigmoid };

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Act kind);

// gx = gy * act'(x)
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& gy, const Tensor<T>& x, Act kind);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

// Deterministic pairwise sum (fixed association regardless of thread count).
template <typename T>
double reduce_sum(const T* data, std::int64_t n);

template <typename T>
double reduce_abs_diff_sum(const Tensor<T>& a, const Tensor<T>& b);

// Reflect-pad (without repeating the edge sample) on the right/bottom only,
// used to round images up to kernel-friendly sizes.
template <typename T>
Tensor<T> pad_reflect_br(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out);

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t h0, std::int64_t w0, std::int64_t h,
               std::int64_t w);

template <typename T>
bool all_finite(const Tensor<T>& x);

}  // namespace udr::kernels
