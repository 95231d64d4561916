#pragma once

#include <cstdint>

#include "udr/image.hpp"
#include "udr/rng.hpp"
#include "udr/tensor.hpp"

namespace udr::rain {

struct RainConfig {
  double density = 0.002;       // expected fraction of seed pixels
  double length_min = 15.0;     // streak length range, px at base_width
  double length_max = 45.0;
  double angle_min = -20.0;     // degrees from vertical
  double angle_max = 20.0;
  double thickness = 1.5;       // px, Gaussian cross-section
  double alpha_min = 0.6;       // blend opacity range
  double alpha_max = 0.9;
  double streak_brightness = 0.9;
  int base_width = 1024;        // reference render width
  int passes = 2;               // independent kernel passes per image
  std::uint64_t seed = 0;

  void validate() const;
};

// Single-channel (1,1,H,W) map in [0,1].
using RainLayer = Tensor<float>;

// Line segment of the given length/angle rasterized with a Gaussian
// cross-section (sigma = thickness/2), normalized to sum 1. Angle is degrees
// from vertical; length 1 collapses to the 1x1 identity kernel.
Tensor<double> motion_blur_kernel(double length, double angle_deg, double thickness);

// Bernoulli(density) seeds with uniform [0,1] magnitudes.
RainLayer seed_noise(std::int64_t h, std::int64_t w, double density, std::uint64_t seed);

// clamp(correlate(noise, kernel) * gain, 0, 1) with zero-padded borders.
RainLayer render_streaks(const RainLayer& noise, const Tensor<double>& kernel, double gain);

// Bilinear rescale by factor s in both dimensions.
RainLayer scale_streak_layer(const RainLayer& layer, double s);

// Per-pixel opacity a = alpha * rain; out = (1-a)*bg + a*brightness.
image::Image alpha_blend(const image::Image& bg, const RainLayer& rainlayer, double alpha,
                         double brightness);

// Full pipeline: render passes at base_width scale, rescale to the background
// size, blend. Ground truth is the background unchanged. Deterministic in
// (bg, cfg.seed, image_index).
image::ImagePair synthesize_pair(const image::Image& bg, const RainConfig& cfg,
                                 std::uint64_t image_index = 0);

}  // namespace udr::rain
