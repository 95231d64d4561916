#pragma once

#include <string>
#include <vector>

#include "udr/image.hpp"

namespace udr::metrics {

// All metrics work on the 8-bit scale: [0,1] images are mapped to 0..255
// internally and computed in double.

// Mean squared difference over all pixels and channels.
double mse(const image::Image& a, const image::Image& b);

// 10*log10(255^2/mse), capped at 100 dB so identical pairs stay finite.
double psnr(const image::Image& a, const image::Image& b);
constexpr double kPsnrCap = 100.0;

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// L=255, valid-region mean. luminance_only averages the channels first
// (ITU-R BT.601 weights); otherwise per-channel SSIM values are averaged.
double ssim(const image::Image& a, const image::Image& b, bool luminance_only = false);

// KL divergence (nats) between pooled intensity histograms of two image sets,
// with additive smoothing eps=1e-8 after normalization.
double histogram_kld(const std::vector<image::Image>& set_p,
                     const std::vector<image::Image>& set_q, int bins);

struct ImageRecord {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
};

struct MetricsReport {
  std::vector<ImageRecord> records;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_mse = 0.0;

  void finalize();  // recomputes the aggregate means
  // CSV: header id,psnr,ssim,mse; one row per image; final MEAN row.
  std::string to_csv() const;
};

}  // namespace udr::metrics
