#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "udr/kernels.hpp"
#include "udr/tensor.hpp"

namespace udr::nn {

using kernels::Act;
using kernels::Pad;

// Thread-local gradient-recording toggle. With recording off, ops return
// bare values and build no graph (the inference path).
struct GradMode {
  static bool enabled();
  static void set(bool on);
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() == 0) grad = Tensor<T>(value.shape());
  }
  void accumulate(const Tensor<T>& g);
};

}  // namespace detail

// Value-semantic handle on a graph node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape4& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_ && node_->grad.numel() != 0; }
  void zero_grad();

  // Reverse pass from a scalar (1,1,1,1) output.
  void backward();

  std::shared_ptr<detail::Node<T>> node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// --- primitive ops ------------------------------------------------------
// Gradients flow to every Var argument that requires them.

// bias may be an undefined Var for bias-free convolution; its shape is (1,Co,1,1).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::int64_t stride, Pad pad);

// gamma/beta have shape (1,C,1,1); normalization is over the channel axis at
// each spatial location.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

template <typename T>
Var<T> activation(const Var<T>& x, Act kind);

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::int64_t r);
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::int64_t r);

template <typename T>
Var<T> interpolate_bilinear(const Var<T>& x, std::int64_t h_out, std::int64_t w_out);

template <typename T>
Var<T> rotate_axes(const Var<T>& x);

// (B,C,H,W) -> (B,2C,H,W): channels [0,C) hold Re of the per-channel 2-D DFT,
// [C,2C) hold Im. Unnormalized forward transform.
template <typename T>
Var<T> fft2_to_channels(const Var<T>& x);

// (B,2C,H,W) -> (B,C,H,W): real part of the 1/(H*W)-normalized inverse DFT of
// the channel-packed spectrum.
template <typename T>
Var<T> ifft2_real_from_channels(const Var<T>& z);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);

// Mean absolute difference, shape (1,1,1,1).
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target);

// Sum of all elements, shape (1,1,1,1).
template <typename T>
Var<T> sum(const Var<T>& x);

}  // namespace udr::nn
