#include "udr/metrics.hpp"

#include <cmath>
#include <sstream>

#include "udr/kernels.hpp"
#include "udr/runtime.hpp"

namespace udr::metrics {

namespace {

void check_dims(const image::Image& a, const image::Image& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": image dims differ, " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace

double mse(const image::Image& a, const image::Image& b) {
  check_dims(a, b, "mse");
  const std::int64_t n = a.numel();
  double acc = 0.0;
  const float* ap = a.data();
  const float* bp = b.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = (static_cast<double>(ap[i]) - static_cast<double>(bp[i])) * 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

double psnr(const image::Image& a, const image::Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  const double v = 10.0 * std::log10(255.0 * 255.0 / m);
  return std::min(v, kPsnrCap);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kL = 255.0;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWin);
  const int half = kWin / 2;
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = static_cast<double>(i - half);
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-mode separable Gaussian filter of an HxW plane.
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& win) {
  const std::int64_t oh = h - kWin + 1;
  const std::int64_t ow = w - kWin + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += win[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y * w + x + k)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += win[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>((y + k) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, std::int64_t h,
                  std::int64_t w) {
  const std::vector<double> win = gaussian_window();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = filter_valid(x, h, w, win);
  const auto mu_y = filter_valid(y, h, w, win);
  const auto m_xx = filter_valid(xx, h, w, win);
  const auto m_yy = filter_valid(yy, h, w, win);
  const auto m_xy = filter_valid(xy, h, w, win);
  const double c1 = (kK1 * kL) * (kK1 * kL);
  const double c2 = (kK2 * kL) * (kK2 * kL);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double sxx = m_xx[i] - mu_x[i] * mu_x[i];
    const double syy = m_yy[i] - mu_y[i] * mu_y[i];
    const double sxy = m_xy[i] - mu_x[i] * mu_y[i];
    const double num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * sxy + c2);
    const double den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (sxx + syy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_x.size());
}

}  // namespace

double ssim(const image::Image& a, const image::Image& b, bool luminance_only) {
  check_dims(a, b, "ssim");
  const Shape4 s = a.shape();
  if (s.h < kWin || s.w < kWin) {
    throw ArgumentError("ssim: image dims must be at least " + std::to_string(kWin));
  }
  const std::size_t hw = static_cast<std::size_t>(s.h * s.w);
  auto to_plane = [&](const image::Image& img, std::int64_t c) {
    std::vector<double> p(hw);
    const float* base = img.data() + c * s.h * s.w;
    for (std::size_t i = 0; i < hw; ++i) p[i] = static_cast<double>(base[i]) * 255.0;
    return p;
  };
  if (luminance_only) {
    std::vector<double> pa(hw, 0.0), pb(hw, 0.0);
    const double wgt[3] = {0.299, 0.587, 0.114};
    for (std::int64_t c = 0; c < 3; ++c) {
      const float* ba = a.data() + c * s.h * s.w;
      const float* bb = b.data() + c * s.h * s.w;
      for (std::size_t i = 0; i < hw; ++i) {
        pa[i] += wgt[c] * static_cast<double>(ba[i]) * 255.0;
        pb[i] += wgt[c] * static_cast<double>(bb[i]) * 255.0;
      }
    }
    return ssim_plane(pa, pb, s.h, s.w);
  }
  double acc = 0.0;
  for (std::int64_t c = 0; c < 3; ++c) {
    acc += ssim_plane(to_plane(a, c), to_plane(b, c), s.h, s.w);
  }
  return acc / 3.0;
}

double histogram_kld(const std::vector<image::Image>& set_p,
                     const std::vector<image::Image>& set_q, int bins) {
  if (bins < 2) throw ArgumentError("histogram_kld: bins must be >= 2");
  if (set_p.empty() || set_q.empty()) throw ArgumentError("histogram_kld: image sets must be nonempty");
  auto pooled = [bins](const std::vector<image::Image>& set) {
    std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
    double total = 0.0;
    for (const auto& img : set) {
      for (std::int64_t i = 0; i < img.numel(); ++i) {
        const float v = img[i];
        std::int64_t bin = static_cast<std::int64_t>(static_cast<double>(v) * bins);
        if (bin < 0) bin = 0;
        if (bin >= bins) bin = bins - 1;
        hist[static_cast<std::size_t>(bin)] += 1.0;
        total += 1.0;
      }
    }
    constexpr double kEps = 1e-8;
    double norm = 0.0;
    for (auto& h : hist) {
      h = h / total + kEps;
      norm += h;
    }
    for (auto& h : hist) h /= norm;
    return hist;
  };
  const auto p = pooled(set_p);
  const auto q = pooled(set_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

void MetricsReport::finalize() {
  mean_psnr = mean_ssim = mean_mse = 0.0;
  if (records.empty()) return;
  for (const auto& r : records) {
    mean_psnr += r.psnr;
    mean_ssim += r.ssim;
    mean_mse += r.mse;
  }
  const double n = static_cast<double>(records.size());
  mean_psnr /= n;
  mean_ssim /= n;
  mean_mse /= n;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "id,psnr,ssim,mse\n";
  for (const auto& r : records) {
    os << r.id << "," << r.psnr << "," << r.ssim << "," << r.mse << "\n";
  }
  os << "MEAN," << mean_psnr << "," << mean_ssim << "," << mean_mse << "\n";
  return os.str();
}

}  // namespace udr::metrics
