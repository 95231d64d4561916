#include "reference_kernels.hpp"

#include <cmath>

namespace udr::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias,
                 std::int64_t stride, kernels::Pad pad) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  const std::int64_t k = ws.h;
  const std::int64_t p = pad == kernels::Pad::kSame ? (k - 1) / 2 : 0;
  const auto [ho, wo] = kernels::conv_out_dims(xs.h, xs.w, k, stride, pad);
  Tensor<T> y(Shape4{xs.b, ws.b, ho, wo});
  for (std::int64_t b = 0; b < xs.b; ++b) {
    for (std::int64_t co = 0; co < ws.b; ++co) {
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[static_cast<std::size_t>(co)]);
          for (std::int64_t ci = 0; ci < xs.c; ++ci) {
            for (std::int64_t kh = 0; kh < k; ++kh) {
              for (std::int64_t kw = 0; kw < k; ++kw) {
                const std::int64_t ih = oh * stride - p + kh;
                const std::int64_t iw = ow * stride - p + kw;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += static_cast<double>(x.at(b, ci, ih, iw)) *
                       static_cast<double>(w.at(co, ci, kh, kw));
              }
            }
          }
          y.at(b, co, oh, ow) = static_cast<T>(acc);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                     T eps) {
  const Shape4 s = x.shape();
  Tensor<T> y(s);
  for (std::int64_t b = 0; b < s.b; ++b) {
    for (std::int64_t h = 0; h < s.h; ++h) {
      for (std::int64_t w = 0; w < s.w; ++w) {
        double mu = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) mu += static_cast<double>(x.at(b, c, h, w));
        mu /= static_cast<double>(s.c);
        double var = 0.0;
        for (std::int64_t c = 0; c < s.c; ++c) {
          const double d = static_cast<double>(x.at(b, c, h, w)) - mu;
          var += d * d;
        }
        var /= static_cast<double>(s.c);
        for (std::int64_t c = 0; c < s.c; ++c) {
          const double xh = (static_cast<double>(x.at(b, c, h, w)) - mu) /
                            std::sqrt(var + static_cast<double>(eps));
          y.at(b, c, h, w) =
              static_cast<T>(xh * static_cast<double>(gamma[static_cast<std::size_t>(c)]) +
                             static_cast<double>(beta[static_cast<std::size_t>(c)]));
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t h_out, std::int64_t w_out) {
  const Shape4 s = x.shape();
  Tensor<T> y(Shape4{s.b, s.c, h_out, w_out});
  const double sh = static_cast<double>(s.h) / static_cast<double>(h_out);
  const double sw = static_cast<double>(s.w) / static_cast<double>(w_out);
  auto clampi = [](std::int64_t v, std::int64_t hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (std::int64_t b = 0; b < s.b; ++b) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t oh = 0; oh < h_out; ++oh) {
        const double fy = (static_cast<double>(oh) + 0.5) * sh - 0.5;
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        const double ty = fy - std::floor(fy);
        for (std::int64_t ow = 0; ow < w_out; ++ow) {
          const double fx = (static_cast<double>(ow) + 0.5) * sw - 0.5;
          const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
          const double tx = fx - std::floor(fx);
          const std::int64_t y0c = clampi(y0, s.h - 1), y1c = clampi(y0 + 1, s.h - 1);
          const std::int64_t x0c = clampi(x0, s.w - 1), x1c = clampi(x0 + 1, s.w - 1);
          const double v00 = x.at(b, c, y0c, x0c);
          const double v01 = x.at(b, c, y0c, x1c);
          const double v10 = x.at(b, c, y1c, x0c);
          const double v11 = x.at(b, c, y1c, x1c);
          const double top = v00 * (1.0 - tx) + v01 * tx;
          const double bot = v10 * (1.0 - tx) + v11 * tx;
          y.at(b, c, oh, ow) = static_cast<T>(top * (1.0 - ty) + bot * ty);
        }
      }
    }
  }
  return y;
}

template <typename T>
ComplexTensor<T> dft2(const Tensor<T>& x) {
  const Shape4 s = x.shape();
  ComplexTensor<T> out(s);
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::int64_t b = 0; b < s.b; ++b) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      for (std::int64_t kh = 0; kh < s.h; ++kh) {
        for (std::int64_t kw = 0; kw < s.w; ++kw) {
          double re = 0.0, im = 0.0;
          for (std::int64_t h = 0; h < s.h; ++h) {
            for (std::int64_t w = 0; w < s.w; ++w) {
              const double ang = -kTwoPi * (static_cast<double>(kh * h) / static_cast<double>(s.h) +
                                            static_cast<double>(kw * w) / static_cast<double>(s.w));
              const double v = static_cast<double>(x.at(b, c, h, w));
              re += v * std::cos(ang);
              im += v * std::sin(ang);
            }
          }
          const std::int64_t idx = ((b * s.c + c) * s.h + kh) * s.w + kw;
          out.re[static_cast<std::size_t>(idx)] = static_cast<T>(re);
          out.im[static_cast<std::size_t>(idx)] = static_cast<T>(im);
        }
      }
    }
  }
  return out;
}

#define UDR_INSTANTIATE_REF(T)                                                              \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&,  \
                               std::int64_t, kernels::Pad);                                \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const std::vector<T>&,                \
                                   const std::vector<T>&, T);                              \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::int64_t, std::int64_t);     \
  template ComplexTensor<T> dft2<T>(const Tensor<T>&);

UDR_INSTANTIATE_REF(float)
UDR_INSTANTIATE_REF(double)

#undef UDR_INSTANTIATE_REF

}  // namespace udr::reference
