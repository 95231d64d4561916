#include "udr/rain.hpp"

#include <algorithm>
#include <cmath>

#include "udr/kernels.hpp"
#include "udr/runtime.hpp"

namespace udr::rain {

namespace {
constexpr double kDegToRad = 0.01745329251994329576923690768489;
}

void RainConfig::validate() const {
  if (density < 0.0 || density > 1.0) throw ArgumentError("rain: density must be in [0,1]");
  if (length_min > length_max || length_min < 1.0) {
    throw ArgumentError("rain: length range must be well-ordered and >= 1");
  }
  if (angle_min > angle_max) throw ArgumentError("rain: angle range must be well-ordered");
  if (thickness < 1.0) throw ArgumentError("rain: thickness must be >= 1");
  if (alpha_min > alpha_max || alpha_min < 0.0 || alpha_max > 1.0) {
    throw ArgumentError("rain: alpha range must be well-ordered in [0,1]");
  }
  if (streak_brightness < 0.0 || streak_brightness > 1.0) {
    throw ArgumentError("rain: streak_brightness must be in [0,1]");
  }
  if (base_width < 1) throw ArgumentError("rain: base_width must be >= 1");
  if (passes < 1) throw ArgumentError("rain: passes must be >= 1");
}

Tensor<double> motion_blur_kernel(double length, double angle_deg, double thickness) {
  if (length < 1.0) throw ArgumentError("motion_blur_kernel: length must be >= 1");
  if (thickness < 1.0) throw ArgumentError("motion_blur_kernel: thickness must be >= 1");
  if (length == 1.0) {
    Tensor<double> k(Shape4{1, 1, 1, 1});
    k[0] = 1.0;
    return k;
  }
  double dy = std::cos(angle_deg * kDegToRad);
  double dx = std::sin(angle_deg * kDegToRad);
  if (std::abs(dy) < 1e-12) dy = 0.0;
  if (std::abs(dx) < 1e-12) dx = 0.0;
  const double half_len = (length - 1.0) / 2.0;
  const double sigma = thickness / 2.0;
  const double margin = std::ceil(3.0 * sigma);
  const std::int64_t ey = static_cast<std::int64_t>(std::ceil(half_len * std::abs(dy)) + margin);
  const std::int64_t ex = static_cast<std::int64_t>(std::ceil(half_len * std::abs(dx)) + margin);
  Tensor<double> k(Shape4{1, 1, 2 * ey + 1, 2 * ex + 1});
  double sum = 0.0;
  for (std::int64_t y = -ey; y <= ey; ++y) {
    for (std::int64_t x = -ex; x <= ex; ++x) {
      // Distance from the pixel center to the segment [-half_len, half_len]*dir.
      const double proj = std::clamp(static_cast<double>(y) * dy + static_cast<double>(x) * dx,
                                     -half_len, half_len);
      const double ry = static_cast<double>(y) - proj * dy;
      const double rx = static_cast<double>(x) - proj * dx;
      const double d2 = ry * ry + rx * rx;
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      k.at(0, 0, y + ey, x + ex) = v;
      sum += v;
    }
  }
  const double inv = 1.0 / sum;
  for (std::int64_t i = 0; i < k.numel(); ++i) k[i] *= inv;
  return k;
}

RainLayer seed_noise(std::int64_t h, std::int64_t w, double density, std::uint64_t seed) {
  if (density < 0.0 || density > 1.0) throw ArgumentError("seed_noise: density must be in [0,1]");
  RainLayer layer(Shape4{1, 1, h, w});
  Rng rng(seed);
  for (std::int64_t i = 0; i < layer.numel(); ++i) {
    const double gate = rng.uniform();
    const double mag = rng.uniform();  // always drawn, keeps the stream stable
    layer[i] = gate < density ? static_cast<float>(mag) : 0.0f;
  }
  return layer;
}

RainLayer render_streaks(const RainLayer& noise, const Tensor<double>& kernel, double gain) {
  const Shape4 ns = noise.shape();
  const Shape4 ks = kernel.shape();
  const std::int64_t py = (ks.h - 1) / 2;
  const std::int64_t px = (ks.w - 1) / 2;
  RainLayer out(ns);
  const float* np = noise.data();
  const double* kp = kernel.data();
  float* op = out.data();
  const float g = static_cast<float>(gain);
  parallel_for(ns.h, [&](std::int64_t y) {
    for (std::int64_t x = 0; x < ns.w; ++x) {
      double acc = 0.0;
      for (std::int64_t ky = 0; ky < ks.h; ++ky) {
        const std::int64_t iy = y - py + ky;
        if (iy < 0 || iy >= ns.h) continue;
        const float* nrow = np + iy * ns.w;
        const double* krow = kp + ky * ks.w;
        for (std::int64_t kx = 0; kx < ks.w; ++kx) {
          const std::int64_t ix = x - px + kx;
          if (ix < 0 || ix >= ns.w) continue;
          acc += static_cast<double>(nrow[ix]) * static_cast<double>(krow[kx]);
        }
      }
      op[y * ns.w + x] = std::clamp(static_cast<float>(acc) * g, 0.0f, 1.0f);
    }
  });
  return out;
}

RainLayer scale_streak_layer(const RainLayer& layer, double s) {
  if (!(s > 0.0)) throw ArgumentError("scale_streak_layer: scale must be positive");
  const Shape4 ls = layer.shape();
  const std::int64_t ho = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(static_cast<double>(ls.h) * s)));
  const std::int64_t wo = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(static_cast<double>(ls.w) * s)));
  return kernels::resize_bilinear(layer, ho, wo);
}

image::Image alpha_blend(const image::Image& bg, const RainLayer& rainlayer, double alpha,
                         double brightness) {
  const Shape4 bs = bg.shape();
  const Shape4 rs = rainlayer.shape();
  if (bs.h != rs.h || bs.w != rs.w) {
    throw ShapeError("alpha_blend: rain layer dims " + rs.str() + " do not match background " +
                     bs.str());
  }
  image::Image out(bs);
  const float al = static_cast<float>(alpha);
  const float br = static_cast<float>(brightness);
  const float* rp = rainlayer.data();
  const float* bp = bg.data();
  float* op = out.data();
  const std::int64_t hw = bs.h * bs.w;
  parallel_for(bs.h, [&](std::int64_t y) {
    for (std::int64_t x = 0; x < bs.w; ++x) {
      const std::int64_t pix = y * bs.w + x;
      const float a = al * rp[pix];
      for (std::int64_t c = 0; c < 3; ++c) {
        const float v = (1.0f - a) * bp[c * hw + pix] + a * br;
        op[c * hw + pix] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  });
  return out;
}

image::ImagePair synthesize_pair(const image::Image& bg, const RainConfig& cfg,
                                 std::uint64_t image_index) {
  cfg.validate();
  const Shape4 bs = bg.shape();
  const std::int64_t base_w = cfg.base_width;
  const std::int64_t base_h = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(
             std::llround(static_cast<double>(bs.h) * static_cast<double>(base_w) /
                          static_cast<double>(bs.w))));

  Rng rng(substream_seed(cfg.seed, 0x7261696eULL /*"rain"*/, image_index));
  const double alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);

  RainLayer combined(Shape4{1, 1, base_h, base_w});
  for (int p = 0; p < cfg.passes; ++p) {
    const double length = rng.uniform(cfg.length_min, cfg.length_max);
    const double angle = rng.uniform(cfg.angle_min, cfg.angle_max);
    const std::uint64_t noise_seed = rng.next_u64();
    const Tensor<double> kernel = motion_blur_kernel(length, angle, cfg.thickness);
    const RainLayer noise = seed_noise(base_h, base_w, cfg.density, noise_seed);
    const RainLayer layer = render_streaks(noise, kernel, length * cfg.thickness);
    for (std::int64_t i = 0; i < combined.numel(); ++i) {
      combined[i] = std::max(combined[i], layer[i]);
    }
  }

  RainLayer scaled = (base_h == bs.h && base_w == bs.w)
                         ? combined
                         : kernels::resize_bilinear(combined, bs.h, bs.w);

  image::ImagePair pair;
  pair.rain = alpha_blend(bg, scaled, alpha, cfg.streak_brightness);
  pair.gt = bg;
  return pair;
}

}  // namespace udr::rain
