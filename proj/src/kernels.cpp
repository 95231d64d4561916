#include "udr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "udr/runtime.hpp"

namespace udr::kernels {

namespace {

std::int64_t pad_amount(std::int64_t k, Pad pad) {
  return pad == Pad::kSame ? (k - 1) / 2 : 0;
}

// Output-index interpolation taps for one axis of a half-pixel bilinear resize.
struct Taps {
  std::vector<std::int64_t> i0, i1;
  std::vector<double> t;  // weight of i1
};

Taps make_taps(std::int64_t in, std::int64_t out) {
  Taps taps;
  taps.i0.resize(static_cast<std::size_t>(out));
  taps.i1.resize(static_cast<std::size_t>(out));
  taps.t.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double f = std::floor(src);
    const std::int64_t i0 = static_cast<std::int64_t>(f);
    taps.i0[static_cast<std::size_t>(o)] = std::clamp<std::int64_t>(i0, 0, in - 1);
    taps.i1[static_cast<std::size_t>(o)] = std::clamp<std::int64_t>(i0 + 1, 0, in - 1);
    taps.t[static_cast<std::size_t>(o)] = src - f;
  }
  return taps;
}

}  // namespace

std::pair<std::int64_t, std::int64_t> conv_out_dims(std::int64_t h, std::int64_t w,
                                                    std::int64_t k, std::int64_t stride,
                                                    Pad pad) {
  const std::int64_t p = pad_amount(k, pad);
  const std::int64_t ho = (h + 2 * p - k) / stride + 1;
  const std::int64_t wo = (w + 2 * p - k) / stride + 1;
  if (ho < 1 || wo < 1) {
    throw ShapeError("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " too small for kernel " + std::to_string(k));
  }
  return {ho, wo};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias,
                         std::int64_t stride, Pad pad) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();  // (Co, Ci, k, k)
  if (ws.h != ws.w) throw ShapeError("conv2d: only square kernels supported");
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ws.c) + " input channels, got " +
                     std::to_string(xs.c));
  }
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != ws.b) {
    throw ShapeError("conv2d: bias length mismatch");
  }
  const std::int64_t k = ws.h;
  const std::int64_t p = pad_amount(k, pad);
  const auto [ho, wo] = conv_out_dims(xs.h, xs.w, k, stride, pad);
  Tensor<T> y(Shape4{xs.b, ws.b, ho, wo});

  const T* xp = x.data();
  const T* wp = w.data();
  T* yp = y.data();
  const std::int64_t planes = xs.b * ws.b;
  parallel_for(planes, [&](std::int64_t plane) {
    const std::int64_t b = plane / ws.b;
    const std::int64_t co = plane % ws.b;
    T* out = yp + plane * ho * wo;
    const T b0 = bias.empty() ? T(0) : bias[static_cast<std::size_t>(co)];
    for (std::int64_t i = 0; i < ho * wo; ++i) out[i] = b0;
    for (std::int64_t ci = 0; ci < xs.c; ++ci) {
      const T* xplane = xp + (b * xs.c + ci) * xs.h * xs.w;
      const T* wk = wp + (co * ws.c + ci) * k * k;
      for (std::int64_t kh = 0; kh < k; ++kh) {
        for (std::int64_t kw = 0; kw < k; ++kw) {
          const T wv = wk[kh * k + kw];
          if (wv == T(0)) continue;
          for (std::int64_t oh = 0; oh < ho; ++oh) {
            const std::int64_t ih = oh * stride - p + kh;
            if (ih < 0 || ih >= xs.h) continue;
            const T* xrow = xplane + ih * xs.w;
            T* orow = out + oh * wo;
            // valid ow range: 0 <= ow*stride - p + kw < W
            std::int64_t ow0 = 0;
            while (ow0 < wo && ow0 * stride - p + kw < 0) ++ow0;
            std::int64_t ow1 = wo;
            while (ow1 > ow0 && (ow1 - 1) * stride - p + kw >= xs.w) --ow1;
            if (stride == 1) {
              const T* xr = xrow + ow0 - p + kw;
              for (std::int64_t ow = ow0; ow < ow1; ++ow) orow[ow] += wv * xr[ow - ow0];
            } else {
              for (std::int64_t ow = ow0; ow < ow1; ++ow) {
                orow[ow] += wv * xrow[ow * stride - p + kw];
              }
            }
          }
        }
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Shape4 x_shape,
                                std::int64_t stride, Pad pad) {
  const Shape4 gs = gy.shape();
  const Shape4 ws = w.shape();
  const std::int64_t k = ws.h;
  const std::int64_t p = pad_amount(k, pad);
  Tensor<T> gx(x_shape);
  const T* gp = gy.data();
  const T* wp = w.data();
  T* op = gx.data();
  const std::int64_t planes = x_shape.b * x_shape.c;
  // Gather form: each input element sums the output positions it fed.
  parallel_for(planes, [&](std::int64_t plane) {
    const std::int64_t b = plane / x_shape.c;
    const std::int64_t ci = plane % x_shape.c;
    T* gxplane = op + plane * x_shape.h * x_shape.w;
    for (std::int64_t co = 0; co < ws.b; ++co) {
      const T* gplane = gp + (b * ws.b + co) * gs.h * gs.w;
      const T* wk = wp + (co * ws.c + ci) * k * k;
      for (std::int64_t kh = 0; kh < k; ++kh) {
        for (std::int64_t kw = 0; kw < k; ++kw) {
          const T wv = wk[kh * k + kw];
          if (wv == T(0)) continue;
          for (std::int64_t oh = 0; oh < gs.h; ++oh) {
            const std::int64_t ih = oh * stride - p + kh;
            if (ih < 0 || ih >= x_shape.h) continue;
            const T* grow = gplane + oh * gs.w;
            T* gxrow = gxplane + ih * x_shape.w;
            std::int64_t ow0 = 0;
            while (ow0 < gs.w && ow0 * stride - p + kw < 0) ++ow0;
            std::int64_t ow1 = gs.w;
            while (ow1 > ow0 && (ow1 - 1) * stride - p + kw >= x_shape.w) --ow1;
            if (stride == 1) {
              T* gxr = gxrow + ow0 - p + kw;
              for (std::int64_t ow = ow0; ow < ow1; ++ow) gxr[ow - ow0] += wv * grow[ow];
            } else {
              for (std::int64_t ow = ow0; ow < ow1; ++ow) {
                gxrow[ow * stride - p + kw] += wv * grow[ow];
              }
            }
          }
        }
      }
    }
  });
  return gx;
}

template <typename T>
Tensor<T> conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Shape4 w_shape,
                                  std::int64_t stride, Pad pad) {
  const Shape4 gs = gy.shape();
  const Shape4 xs = x.shape();
  const std::int64_t k = w_shape.h;
  const std::int64_t p = pad_amount(k, pad);
  Tensor<T> gw(w_shape);
  const T* gp = gy.data();
  const T* xp = x.data();
  T* wp = gw.data();
  const std::int64_t slots = w_shape.b * w_shape.c;
  parallel_for(slots, [&](std::int64_t slot) {
    const std::int64_t co = slot / w_shape.c;
    const std::int64_t ci = slot % w_shape.c;
    T* wk = wp + slot * k * k;
    for (std::int64_t kh = 0; kh < k; ++kh) {
      for (std::int64_t kw = 0; kw < k; ++kw) {
        double acc = 0.0;
        for (std::int64_t b = 0; b < gs.b; ++b) {
          const T* gplane = gp + (b * gs.c + co) * gs.h * gs.w;
          const T* xplane = xp + (b * xs.c + ci) * xs.h * xs.w;
          for (std::int64_t oh = 0; oh < gs.h; ++oh) {
            const std::int64_t ih = oh * stride - p + kh;
            if (ih < 0 || ih >= xs.h) continue;
            const T* grow = gplane + oh * gs.w;
            const T* xrow = xplane + ih * xs.w;
            std::int64_t ow0 = 0;
            while (ow0 < gs.w && ow0 * stride - p + kw < 0) ++ow0;
            std::int64_t ow1 = gs.w;
            while (ow1 > ow0 && (ow1 - 1) * stride - p + kw >= xs.w) --ow1;
            if (stride == 1) {
              const T* xr = xrow + ow0 - p + kw;
              double rowacc = 0.0;
              for (std::int64_t ow = ow0; ow < ow1; ++ow) {
                rowacc += static_cast<double>(grow[ow]) * static_cast<double>(xr[ow - ow0]);
              }
              acc += rowacc;
            } else {
              double rowacc = 0.0;
              for (std::int64_t ow = ow0; ow < ow1; ++ow) {
                rowacc += static_cast<double>(grow[ow]) *
                          static_cast<double>(xrow[ow * stride - p + kw]);
              }
              acc += rowacc;
            }
          }
        }
        wk[kh * k + kw] = static_cast<T>(acc);
      }
    }
  });
  return gw;
}

template <typename T>
std::vector<T> conv2d_backward_bias(const Tensor<T>& gy) {
  const Shape4 gs = gy.shape();
  std::vector<T> gb(static_cast<std::size_t>(gs.c), T(0));
  const T* gp = gy.data();
  parallel_for(gs.c, [&](std::int64_t co) {
    double acc = 0.0;
    for (std::int64_t b = 0; b < gs.b; ++b) {
      const T* plane = gp + (b * gs.c + co) * gs.h * gs.w;
      for (std::int64_t i = 0; i < gs.h * gs.w; ++i) acc += static_cast<double>(plane[i]);
    }
    gb[static_cast<std::size_t>(co)] = static_cast<T>(acc);
  });
  return gb;
}

template <typename T>
Tensor<T> layer_norm_forward(const Tensor<T>& x, const std::vector<T>& gamma,
                             const std::vector<T>& beta, T eps, std::vector<T>* mean_out,
                             std::vector<T>* inv_std_out) {
  const Shape4 s = x.shape();
  if (static_cast<std::int64_t>(gamma.size()) != s.c ||
      static_cast<std::int64_t>(beta.size()) != s.c) {
    throw ShapeError("layer_norm: gamma/beta must have length C=" + std::to_string(s.c));
  }
  if (!(eps > T(0))) throw ArgumentError("layer_norm: eps must be positive");
  Tensor<T> y(s);
  const std::int64_t hw = s.h * s.w;
  const std::int64_t locs = s.b * hw;
  if (mean_out) mean_out->assign(static_cast<std::size_t>(locs), T(0));
  if (inv_std_out) inv_std_out->assign(static_cast<std::size_t>(locs), T(0));
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(locs, [&](std::int64_t loc) {
    const std::int64_t b = loc / hw;
    const std::int64_t pix = loc % hw;
    const T* xc = xp + b * s.c * hw + pix;
    T* yc = yp + b * s.c * hw + pix;
    double mu = 0.0;
    for (std::int64_t c = 0; c < s.c; ++c) mu += static_cast<double>(xc[c * hw]);
    mu /= static_cast<double>(s.c);
    double var = 0.0;
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double d = static_cast<double>(xc[c * hw]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(s.c);
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double xh = (static_cast<double>(xc[c * hw]) - mu) * istd;
      yc[c * hw] = static_cast<T>(xh * static_cast<double>(gamma[static_cast<std::size_t>(c)]) +
                                  static_cast<double>(beta[static_cast<std::size_t>(c)]));
    }
    if (mean_out) (*mean_out)[static_cast<std::size_t>(loc)] = static_cast<T>(mu);
    if (inv_std_out) (*inv_std_out)[static_cast<std::size_t>(loc)] = static_cast<T>(istd);
  });
  return y;
}

template <typename T>
void layer_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const std::vector<T>& gamma,
                         const std::vector<T>& mean, const std::vector<T>& inv_std, Tensor<T>* gx,
                         std::vector<T>* ggamma, std::vector<T>* gbeta) {
  const Shape4 s = x.shape();
  const std::int64_t hw = s.h * s.w;
  const std::int64_t locs = s.b * hw;
  *gx = Tensor<T>(s);
  const T* gp = gy.data();
  const T* xp = x.data();
  T* op = gx->data();
  parallel_for(locs, [&](std::int64_t loc) {
    const std::int64_t b = loc / hw;
    const std::int64_t pix = loc % hw;
    const T* xc = xp + b * s.c * hw + pix;
    const T* gc = gp + b * s.c * hw + pix;
    T* oc = op + b * s.c * hw + pix;
    const double mu = static_cast<double>(mean[static_cast<std::size_t>(loc)]);
    const double istd = static_cast<double>(inv_std[static_cast<std::size_t>(loc)]);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double g = static_cast<double>(gc[c * hw]) *
                       static_cast<double>(gamma[static_cast<std::size_t>(c)]);
      const double xh = (static_cast<double>(xc[c * hw]) - mu) * istd;
      sum_g += g;
      sum_gx += g * xh;
    }
    const double inv_c = 1.0 / static_cast<double>(s.c);
    for (std::int64_t c = 0; c < s.c; ++c) {
      const double g = static_cast<double>(gc[c * hw]) *
                       static_cast<double>(gamma[static_cast<std::size_t>(c)]);
      const double xh = (static_cast<double>(xc[c * hw]) - mu) * istd;
      oc[c * hw] = static_cast<T>((g - sum_g * inv_c - xh * sum_gx * inv_c) * istd);
    }
  });
  // Per-channel reductions over all locations, one channel per task.
  ggamma->assign(static_cast<std::size_t>(s.c), T(0));
  gbeta->assign(static_cast<std::size_t>(s.c), T(0));
  parallel_for(s.c, [&](std::int64_t c) {
    double gg = 0.0, gb = 0.0;
    for (std::int64_t b = 0; b < s.b; ++b) {
      const T* xc = xp + (b * s.c + c) * hw;
      const T* gc = gp + (b * s.c + c) * hw;
      for (std::int64_t pix = 0; pix < hw; ++pix) {
        const std::int64_t loc = b * hw + pix;
        const double mu = static_cast<double>(mean[static_cast<std::size_t>(loc)]);
        const double istd = static_cast<double>(inv_std[static_cast<std::size_t>(loc)]);
        const double xh = (static_cast<double>(xc[pix]) - mu) * istd;
        gg += static_cast<double>(gc[pix]) * xh;
        gb += static_cast<double>(gc[pix]);
      }
    }
    (*ggamma)[static_cast<std::size_t>(c)] = static_cast<T>(gg);
    (*gbeta)[static_cast<std::size_t>(c)] = static_cast<T>(gb);
  });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t r) {
  const Shape4 s = x.shape();
  if (r < 1) throw ArgumentError("pixel_unshuffle: r must be >= 1");
  if (s.h % r != 0 || s.w % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by r=" + std::to_string(r));
  }
  const Shape4 os{s.b, s.c * r * r, s.h / r, s.w / r};
  Tensor<T> y(os);
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(os.b * os.c, [&](std::int64_t plane) {
    const std::int64_t b = plane / os.c;
    const std::int64_t oc = plane % os.c;
    const std::int64_t c = oc / (r * r);
    const std::int64_t dy = (oc % (r * r)) / r;
    const std::int64_t dx = oc % r;
    T* out = yp + plane * os.h * os.w;
    const T* in = xp + (b * s.c + c) * s.h * s.w;
    for (std::int64_t oh = 0; oh < os.h; ++oh) {
      const T* irow = in + (oh * r + dy) * s.w + dx;
      T* orow = out + oh * os.w;
      for (std::int64_t ow = 0; ow < os.w; ++ow) orow[ow] = irow[ow * r];
    }
  });
  return y;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t r) {
  const Shape4 s = x.shape();
  if (r < 1) throw ArgumentError("pixel_shuffle: r must be >= 1");
  if (s.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) +
                     " not divisible by r^2=" + std::to_string(r * r));
  }
  const Shape4 os{s.b, s.c / (r * r), s.h * r, s.w * r};
  Tensor<T> y(os);
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(s.b * s.c, [&](std::int64_t plane) {
    const std::int64_t b = plane / s.c;
    const std::int64_t ic = plane % s.c;
    const std::int64_t c = ic / (r * r);
    const std::int64_t dy = (ic % (r * r)) / r;
    const std::int64_t dx = ic % r;
    const T* in = xp + plane * s.h * s.w;
    T* out = yp + (b * os.c + c) * os.h * os.w;
    for (std::int64_t ih = 0; ih < s.h; ++ih) {
      const T* irow = in + ih * s.w;
      T* orow = out + (ih * r + dy) * os.w + dx;
      for (std::int64_t iw = 0; iw < s.w; ++iw) orow[iw * r] = irow[iw];
    }
  });
  return y;
}

template <typename T>
Tensor<T> rotate_axes(const Tensor<T>& x) {
  const Shape4 s = x.shape();
  const Shape4 os{s.b, s.h, s.w, s.c};
  Tensor<T> y(os);
  const T* xp = x.data();
  T* yp = y.data();
  // out(b, h, w, c) = in(b, c, h, w); write contiguously over the out minor axis.
  parallel_for(os.b * os.c, [&](std::int64_t plane) {
    const std::int64_t b = plane / os.c;
    const std::int64_t h = plane % os.c;  // out axis1 indexes old h
    T* out = yp + plane * os.h * os.w;
    for (std::int64_t w = 0; w < os.h; ++w) {
      T* orow = out + w * os.w;
      const T* in = xp + b * s.c * s.h * s.w + h * s.w + w;
      for (std::int64_t c = 0; c < s.c; ++c) orow[c] = in[c * s.h * s.w];
    }
  });
  return y;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out) {
  if (h_out < 1 || w_out < 1) throw ArgumentError("resize_bilinear: target dims must be >= 1");
  const Shape4 s = x.shape();
  // H pass.
  Tensor<T> mid(Shape4{s.b, s.c, h_out, s.w});
  {
    const Taps taps = make_taps(s.h, h_out);
    const T* xp = x.data();
    T* mp = mid.data();
    parallel_for(s.b * s.c * h_out, [&](std::int64_t row) {
      const std::int64_t plane = row / h_out;
      const std::int64_t oh = row % h_out;
      const T* in = xp + plane * s.h * s.w;
      T* out = mp + plane * h_out * s.w + oh * s.w;
      const T* r0 = in + taps.i0[static_cast<std::size_t>(oh)] * s.w;
      const T* r1 = in + taps.i1[static_cast<std::size_t>(oh)] * s.w;
      const T t = static_cast<T>(taps.t[static_cast<std::size_t>(oh)]);
      const T u = T(1) - t;
      for (std::int64_t w = 0; w < s.w; ++w) out[w] = u * r0[w] + t * r1[w];
    });
  }
  if (w_out == s.w) return mid;
  // W pass.
  Tensor<T> y(Shape4{s.b, s.c, h_out, w_out});
  const Taps taps = make_taps(s.w, w_out);
  const T* mp = mid.data();
  T* yp = y.data();
  parallel_for(s.b * s.c * h_out, [&](std::int64_t row) {
    const T* in = mp + row * s.w;
    T* out = yp + row * w_out;
    for (std::int64_t ow = 0; ow < w_out; ++ow) {
      const T t = static_cast<T>(taps.t[static_cast<std::size_t>(ow)]);
      out[ow] = (T(1) - t) * in[taps.i0[static_cast<std::size_t>(ow)]] +
                t * in[taps.i1[static_cast<std::size_t>(ow)]];
    }
  });
  return y;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& gy, std::int64_t h_in, std::int64_t w_in) {
  const Shape4 gs = gy.shape();
  // Transpose of the W pass: rows stay independent.
  Tensor<T> mid(Shape4{gs.b, gs.c, gs.h, w_in});
  {
    const Taps taps = make_taps(w_in, gs.w);
    const T* gp = gy.data();
    T* mp = mid.data();
    parallel_for(gs.b * gs.c * gs.h, [&](std::int64_t row) {
      const T* in = gp + row * gs.w;
      T* out = mp + row * w_in;
      for (std::int64_t ow = 0; ow < gs.w; ++ow) {
        const T t = static_cast<T>(taps.t[static_cast<std::size_t>(ow)]);
        out[taps.i0[static_cast<std::size_t>(ow)]] += (T(1) - t) * in[ow];
        out[taps.i1[static_cast<std::size_t>(ow)]] += t * in[ow];
      }
    });
  }
  // Transpose of the H pass: scatter across rows, one (b,c) plane per task.
  Tensor<T> gx(Shape4{gs.b, gs.c, h_in, w_in});
  const Taps taps = make_taps(h_in, gs.h);
  const T* mp = mid.data();
  T* op = gx.data();
  parallel_for(gs.b * gs.c, [&](std::int64_t plane) {
    const T* in = mp + plane * gs.h * w_in;
    T* out = op + plane * h_in * w_in;
    for (std::int64_t oh = 0; oh < gs.h; ++oh) {
      const T* irow = in + oh * w_in;
      const T t = static_cast<T>(taps.t[static_cast<std::size_t>(oh)]);
      const T u = T(1) - t;
      T* r0 = out + taps.i0[static_cast<std::size_t>(oh)] * w_in;
      T* r1 = out + taps.i1[static_cast<std::size_t>(oh)] * w_in;
      for (std::int64_t w = 0; w < w_in; ++w) {
        r0[w] += u * irow[w];
        r1[w] += t * irow[w];
      }
    }
  });
  return gx;
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

template <typename T>
T act_eval(T x, Act kind) {
  const double v = static_cast<double>(x);
  switch (kind) {
    case Act::kGelu:
      return static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    case Act::kRelu:
      return v > 0.0 ? x : T(0);
    case Act::kSigmoid:
      return static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  }
  return T(0);
}

template <typename T>
T act_grad(T x, Act kind) {
  const double v = static_cast<double>(x);
  switch (kind) {
    case Act::kGelu: {
      const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return static_cast<T>(phi + v * pdf);
    }
    case Act::kRelu:
      return v > 0.0 ? T(1) : T(0);
    case Act::kSigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return static_cast<T>(s * (1.0 - s));
    }
  }
  return T(0);
}

// Elementwise maps are chunked so each task owns a contiguous range.
constexpr std::int64_t kChunk = 1 << 14;

template <typename T, typename F>
Tensor<T> elementwise(const Tensor<T>& a, F&& f) {
  Tensor<T> y(a.shape());
  const std::int64_t n = a.numel();
  const T* ap = a.data();
  T* yp = y.data();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) yp[i] = f(ap[i]);
  });
  return y;
}

}  // namespace

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& x, Act kind) {
  return elementwise(x, [kind](T v) { return act_eval(v, kind); });
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& gy, const Tensor<T>& x, Act kind) {
  check_same_shape(gy.shape(), x.shape(), "activation_backward");
  Tensor<T> gx(x.shape());
  const std::int64_t n = x.numel();
  const T* gp = gy.data();
  const T* xp = x.data();
  T* op = gx.data();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) op[i] = gp[i] * act_grad(xp[i], kind);
  });
  return gx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  const T* bp = b.data();
  const T* ap = a.data();
  T* yp = y.data();
  const std::int64_t n = a.numel();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) yp[i] = ap[i] + bp[i];
  });
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> y(a.shape());
  const T* bp = b.data();
  const T* ap = a.data();
  T* yp = y.data();
  const std::int64_t n = a.numel();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) yp[i] = ap[i] - bp[i];
  });
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  const T* bp = b.data();
  const T* ap = a.data();
  T* yp = y.data();
  const std::int64_t n = a.numel();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) yp[i] = ap[i] * bp[i];
  });
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return elementwise(a, [s](T v) { return v * s; });
}

template <typename T>
double reduce_sum(const T* data, std::int64_t n) {
  // Pairwise with a fixed block size: association independent of threading.
  constexpr std::int64_t kBlock = 1024;
  if (n <= kBlock) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(data[i]);
    return acc;
  }
  const std::int64_t half = ((n / 2) + kBlock - 1) / kBlock * kBlock;
  return reduce_sum(data, half) + reduce_sum(data + half, n - half);
}

template <typename T>
double reduce_abs_diff_sum(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "reduce_abs_diff_sum");
  const std::int64_t n = a.numel();
  std::vector<T> tmp(static_cast<std::size_t>(n));
  const T* ap = a.data();
  const T* bp = b.data();
  T* tp = tmp.data();
  const std::int64_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::int64_t ch) {
    const std::int64_t lo = ch * kChunk;
    const std::int64_t hi = std::min(n, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) tp[i] = std::abs(ap[i] - bp[i]);
  });
  return reduce_sum(tp, n);
}

template <typename T>
Tensor<T> pad_reflect_br(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out) {
  const Shape4 s = x.shape();
  if (h_out < s.h || w_out < s.w) throw ArgumentError("pad_reflect_br: target smaller than input");
  if (h_out >= 2 * s.h || w_out >= 2 * s.w) {
    throw ArgumentError("pad_reflect_br: reflection pad must be smaller than the input");
  }
  Tensor<T> y(Shape4{s.b, s.c, h_out, w_out});
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(s.b * s.c, [&](std::int64_t plane) {
    const T* in = xp + plane * s.h * s.w;
    T* out = yp + plane * h_out * w_out;
    for (std::int64_t h = 0; h < h_out; ++h) {
      const std::int64_t ih = h < s.h ? h : 2 * s.h - 2 - h;
      const T* irow = in + ih * s.w;
      T* orow = out + h * w_out;
      for (std::int64_t w = 0; w < w_out; ++w) {
        const std::int64_t iw = w < s.w ? w : 2 * s.w - 2 - w;
        orow[w] = irow[iw];
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::int64_t h0, std::int64_t w0, std::int64_t h,
               std::int64_t w) {
  const Shape4 s = x.shape();
  if (h0 < 0 || w0 < 0 || h0 + h > s.h || w0 + w > s.w) {
    throw ArgumentError("crop: window out of bounds");
  }
  Tensor<T> y(Shape4{s.b, s.c, h, w});
  const T* xp = x.data();
  T* yp = y.data();
  parallel_for(s.b * s.c, [&](std::int64_t plane) {
    const T* in = xp + plane * s.h * s.w;
    T* out = yp + plane * h * w;
    for (std::int64_t r = 0; r < h; ++r) {
      std::copy(in + (h0 + r) * s.w + w0, in + (h0 + r) * s.w + w0 + w, out + r * w);
    }
  });
  return y;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(x[i]))) return false;
  }
  return true;
}

#define UDR_INSTANTIATE_KERNELS(T)                                                              \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&, \
                                       std::int64_t, Pad);                                      \
  template Tensor<T> conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, Shape4,      \
                                              std::int64_t, Pad);                              \
  template Tensor<T> conv2d_backward_weights<T>(const Tensor<T>&, const Tensor<T>&, Shape4,    \
                                                std::int64_t, Pad);                            \
  template std::vector<T> conv2d_backward_bias<T>(const Tensor<T>&);                           \
  template Tensor<T> layer_norm_forward<T>(const Tensor<T>&, const std::vector<T>&,            \
                                           const std::vector<T>&, T, std::vector<T>*,          \
                                           std::vector<T>*);                                   \
  template void layer_norm_backward<T>(const Tensor<T>&, const Tensor<T>&,                     \
                                       const std::vector<T>&, const std::vector<T>&,           \
                                       const std::vector<T>&, Tensor<T>*, std::vector<T>*,     \
                                       std::vector<T>*);                                       \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, std::int64_t);                       \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, std::int64_t);                         \
  template Tensor<T> rotate_axes<T>(const Tensor<T>&);                                         \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::int64_t, std::int64_t);         \
  template Tensor<T> resize_bilinear_backward<T>(const Tensor<T>&, std::int64_t, std::int64_t); \
  template Tensor<T> activation_forward<T>(const Tensor<T>&, Act);                             \
  template Tensor<T> activation_backward<T>(const Tensor<T>&, const Tensor<T>&, Act);          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template double reduce_sum<T>(const T*, std::int64_t);                                       \
  template double reduce_abs_diff_sum<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> pad_reflect_br<T>(const Tensor<T>&, std::int64_t, std::int64_t);          \
  template Tensor<T> crop<T>(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t,       \
                             std::int64_t);                                                    \
  template bool all_finite<T>(const Tensor<T>&);

UDR_INSTANTIATE_KERNELS(float)
UDR_INSTANTIATE_KERNELS(double)

#undef UDR_INSTANTIATE_KERNELS

}  // namespace udr::kernels
