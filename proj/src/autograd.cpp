#include "udr/autograd.hpp"

#include <algorithm>
#include <unordered_set>

#include "udr/fft.hpp"
#include "udr/runtime.hpp"

namespace udr::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

namespace detail {

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  ensure_grad();
  T* dst = grad.data();
  const T* src = g.data();
  const std::int64_t n = grad.numel();
  constexpr std::int64_t kChunk = 1 << 14;
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) dst[i] += src[i];
  });
}

template struct Node<float>;
template struct Node<double>;

}  // namespace detail

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<detail::Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void Var<T>::zero_grad() {
  if (node_ && node_->grad.numel() != 0) {
    std::fill(node_->grad.vec().begin(), node_->grad.vec().end(), T(0));
  }
}

template <typename T>
void Var<T>::backward() {
  if (!node_) throw ArgumentError("backward: undefined Var");
  if (node_->value.numel() != 1) {
    throw ArgumentError("backward: output must be scalar, got shape " +
                        node_->value.shape().str());
  }
  // Iterative post-order topo sort over nodes that require gradients.
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> topo;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodeT* p = n->parents[next].get();
      ++next;
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn && n->grad.numel() != 0) n->backward_fn(*n);
  }
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(detail::Node<T>&)> backward_fn) {
  const bool track =
      GradMode::enabled() &&
      std::any_of(parents.begin(), parents.end(), [](const NodePtr<T>& p) {
        return p && p->requires_grad;
      });
  Var<T> out(std::move(value), track);
  if (track) {
    auto node = out.node();
    for (auto& p : parents) {
      if (p) node->parents.push_back(std::move(p));
    }
    node->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::int64_t stride, Pad pad) {
  const std::vector<T> bvec = bias.defined() ? bias.value().vec() : std::vector<T>{};
  Tensor<T> y = kernels::conv2d_forward(x.value(), w.value(), bvec, stride, pad);
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      std::move(y), {xn, wn, bn}, [xn, wn, bn, stride, pad](detail::Node<T>& n) {
        if (xn->requires_grad) {
          xn->accumulate(
              kernels::conv2d_backward_input(n.grad, wn->value, xn->value.shape(), stride, pad));
        }
        if (wn->requires_grad) {
          wn->accumulate(
              kernels::conv2d_backward_weights(n.grad, xn->value, wn->value.shape(), stride, pad));
        }
        if (bn && bn->requires_grad) {
          std::vector<T> gb = kernels::conv2d_backward_bias(n.grad);
          bn->accumulate(Tensor<T>(bn->value.shape(), std::move(gb)));
        }
      });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  auto saved_mean = std::make_shared<std::vector<T>>();
  auto saved_istd = std::make_shared<std::vector<T>>();
  Tensor<T> y = kernels::layer_norm_forward(x.value(), gamma.value().vec(), beta.value().vec(),
                                            eps, saved_mean.get(), saved_istd.get());
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(
      std::move(y), {xn, gn, bn}, [xn, gn, bn, saved_mean, saved_istd](detail::Node<T>& n) {
        Tensor<T> gx;
        std::vector<T> ggamma, gbeta;
        kernels::layer_norm_backward(n.grad, xn->value, gn->value.vec(), *saved_mean, *saved_istd,
                                     &gx, &ggamma, &gbeta);
        if (xn->requires_grad) xn->accumulate(gx);
        if (gn->requires_grad) gn->accumulate(Tensor<T>(gn->value.shape(), std::move(ggamma)));
        if (bn->requires_grad) bn->accumulate(Tensor<T>(bn->value.shape(), std::move(gbeta)));
      });
}

template <typename T>
Var<T> activation(const Var<T>& x, Act kind) {
  Tensor<T> y = kernels::activation_forward(x.value(), kind);
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn, kind](detail::Node<T>& n) {
    xn->accumulate(kernels::activation_backward(n.grad, xn->value, kind));
  });
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, std::int64_t r) {
  Tensor<T> y = kernels::pixel_unshuffle(x.value(), r);
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn, r](detail::Node<T>& n) {
    xn->accumulate(kernels::pixel_shuffle(n.grad, r));
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::int64_t r) {
  Tensor<T> y = kernels::pixel_shuffle(x.value(), r);
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn, r](detail::Node<T>& n) {
    xn->accumulate(kernels::pixel_unshuffle(n.grad, r));
  });
}

template <typename T>
Var<T> interpolate_bilinear(const Var<T>& x, std::int64_t h_out, std::int64_t w_out) {
  Tensor<T> y = kernels::resize_bilinear(x.value(), h_out, w_out);
  auto xn = x.node();
  const std::int64_t hi = x.shape().h;
  const std::int64_t wi = x.shape().w;
  return make_result<T>(std::move(y), {xn}, [xn, hi, wi](detail::Node<T>& n) {
    xn->accumulate(kernels::resize_bilinear_backward(n.grad, hi, wi));
  });
}

template <typename T>
Var<T> rotate_axes(const Var<T>& x) {
  Tensor<T> y = kernels::rotate_axes(x.value());
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn](detail::Node<T>& n) {
    // Inverse rotation = rotating twice more.
    xn->accumulate(kernels::rotate_axes(kernels::rotate_axes(n.grad)));
  });
}

namespace {

template <typename T>
Tensor<T> pack_complex(const ComplexTensor<T>& z) {
  const Shape4 s = z.shape;
  Tensor<T> out(Shape4{s.b, 2 * s.c, s.h, s.w});
  const std::int64_t chw = s.c * s.h * s.w;
  T* op = out.data();
  for (std::int64_t b = 0; b < s.b; ++b) {
    std::copy(z.re.begin() + b * chw, z.re.begin() + (b + 1) * chw, op + b * 2 * chw);
    std::copy(z.im.begin() + b * chw, z.im.begin() + (b + 1) * chw, op + b * 2 * chw + chw);
  }
  return out;
}

template <typename T>
ComplexTensor<T> unpack_complex(const Tensor<T>& t) {
  const Shape4 s = t.shape();
  if (s.c % 2 != 0) throw ShapeError("unpack_complex: channel count must be even");
  ComplexTensor<T> z(Shape4{s.b, s.c / 2, s.h, s.w});
  const std::int64_t chw = (s.c / 2) * s.h * s.w;
  const T* tp = t.data();
  for (std::int64_t b = 0; b < s.b; ++b) {
    std::copy(tp + b * 2 * chw, tp + b * 2 * chw + chw, z.re.begin() + b * chw);
    std::copy(tp + b * 2 * chw + chw, tp + b * 2 * chw + 2 * chw, z.im.begin() + b * chw);
  }
  return z;
}

}  // namespace

template <typename T>
Var<T> fft2_to_channels(const Var<T>& x) {
  Tensor<T> y = pack_complex(fft::fft2(x.value()));
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn](detail::Node<T>& n) {
    // d/dx of (ReF, ImF) pulled back through G = gR + i*gI is Re(N * ifft2(G)).
    ComplexTensor<T> g = unpack_complex(n.grad);
    const T scale_n = static_cast<T>(g.shape.h * g.shape.w);
    Tensor<T> gx = fft::ifft2_real(g);
    xn->accumulate(kernels::scale(gx, scale_n));
  });
}

template <typename T>
Var<T> ifft2_real_from_channels(const Var<T>& z) {
  ComplexTensor<T> zc = unpack_complex(z.value());
  Tensor<T> y = fft::ifft2_real(zc);
  auto zn = z.node();
  return make_result<T>(std::move(y), {zn}, [zn](detail::Node<T>& n) {
    // grad_Re = Re(FFT(g))/N, grad_Im = Im(FFT(g))/N.
    ComplexTensor<T> f = fft::fft2(n.grad);
    const T inv_n = T(1) / static_cast<T>(f.shape.h * f.shape.w);
    Tensor<T> packed = pack_complex(f);
    zn->accumulate(kernels::scale(packed, inv_n));
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = kernels::add(a.value(), b.value());
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(std::move(y), {an, bn}, [an, bn](detail::Node<T>& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(n.grad);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = kernels::mul(a.value(), b.value());
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(std::move(y), {an, bn}, [an, bn](detail::Node<T>& n) {
    if (an->requires_grad) an->accumulate(kernels::mul(n.grad, bn->value));
    if (bn->requires_grad) bn->accumulate(kernels::mul(n.grad, an->value));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> y = kernels::scale(a.value(), s);
  auto an = a.node();
  return make_result<T>(std::move(y), {an}, [an, s](detail::Node<T>& n) {
    an->accumulate(kernels::scale(n.grad, s));
  });
}

template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.shape(), target.shape(), "l1_loss");
  const std::int64_t n = pred.value().numel();
  const double loss = kernels::reduce_abs_diff_sum(pred.value(), target.value()) /
                      static_cast<double>(n);
  Tensor<T> y(Shape4{1, 1, 1, 1});
  y[0] = static_cast<T>(loss);
  auto pn = pred.node();
  auto tn = target.node();
  return make_result<T>(std::move(y), {pn, tn}, [pn, tn, n](detail::Node<T>& nd) {
    const T g = nd.grad[0] / static_cast<T>(n);
    Tensor<T> gp(pn->value.shape());
    const T* a = pn->value.data();
    const T* b = tn->value.data();
    T* gpp = gp.data();
    for (std::int64_t i = 0; i < n; ++i) {
      gpp[i] = a[i] > b[i] ? g : (a[i] < b[i] ? -g : T(0));
    }
    if (pn->requires_grad) pn->accumulate(gp);
    if (tn->requires_grad) {
      Tensor<T> gt = kernels::scale(gp, T(-1));
      tn->accumulate(gt);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  Tensor<T> y(Shape4{1, 1, 1, 1});
  y[0] = static_cast<T>(kernels::reduce_sum(x.value().data(), x.value().numel()));
  auto xn = x.node();
  return make_result<T>(std::move(y), {xn}, [xn](detail::Node<T>& n) {
    xn->accumulate(Tensor<T>::full(xn->value.shape(), n.grad[0]));
  });
}

#define UDR_INSTANTIATE_AUTOGRAD(T)                                                      \
  template class Var<T>;                                                                 \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::int64_t,  \
                            Pad);                                                        \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);        \
  template Var<T> activation<T>(const Var<T>&, Act);                                    \
  template Var<T> pixel_unshuffle<T>(const Var<T>&, std::int64_t);                      \
  template Var<T> pixel_shuffle<T>(const Var<T>&, std::int64_t);                        \
  template Var<T> interpolate_bilinear<T>(const Var<T>&, std::int64_t, std::int64_t);   \
  template Var<T> rotate_axes<T>(const Var<T>&);                                        \
  template Var<T> fft2_to_channels<T>(const Var<T>&);                                   \
  template Var<T> ifft2_real_from_channels<T>(const Var<T>&);                           \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> scale<T>(const Var<T>&, T);                                           \
  template Var<T> l1_loss<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> sum<T>(const Var<T>&);

UDR_INSTANTIATE_AUTOGRAD(float)
UDR_INSTANTIATE_AUTOGRAD(double)

#undef UDR_INSTANTIATE_AUTOGRAD

}  // namespace udr::nn
