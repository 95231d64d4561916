#include "udr/fft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "udr/runtime.hpp"

namespace udr::fft {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

std::int64_t next_pow2(std::int64_t n) {
  std::int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Precomputed tables for one transform length. Twiddles are evaluated in
// double regardless of T so float transforms keep full twiddle accuracy.
struct Plan {
  std::int64_t n = 0;
  std::vector<std::uint32_t> bitrev;          // radix-2 only
  std::vector<double> tw_re, tw_im;           // stage twiddles, packed
  // Bluestein extras (empty when n is a power of two).
  std::int64_t m = 0;                         // convolution length, power of two
  std::vector<double> chirp_re, chirp_im;     // e^{-i pi k^2 / n}
  std::vector<double> bfre, bfim;             // FFT of the padded conjugate chirp
  std::shared_ptr<const Plan> inner;          // radix-2 plan of length m
};

std::shared_ptr<const Plan> get_plan(std::int64_t n);

std::shared_ptr<const Plan> make_radix2_plan(std::int64_t n) {
  auto plan = std::make_shared<Plan>();
  plan->n = n;
  plan->bitrev.resize(static_cast<std::size_t>(n));
  std::uint32_t bits = 0;
  while ((std::int64_t{1} << bits) < n) ++bits;
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint32_t r = 0;
    for (std::uint32_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    plan->bitrev[static_cast<std::size_t>(i)] = r;
  }
  // One half-length twiddle row per stage: w_j = e^{-2pi i j / len}.
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    for (std::int64_t j = 0; j < len / 2; ++j) {
      const double ang = -kTwoPi * static_cast<double>(j) / static_cast<double>(len);
      plan->tw_re.push_back(std::cos(ang));
      plan->tw_im.push_back(std::sin(ang));
    }
  }
  return plan;
}

template <typename T>
void radix2_inplace(const Plan& plan, T* re, T* im, bool inverse) {
  const std::int64_t n = plan.n;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = plan.bitrev[static_cast<std::size_t>(i)];
    if (j > i) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  const double sgn = inverse ? 1.0 : -1.0;
  std::size_t tw = 0;
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    const std::int64_t half = len / 2;
    for (std::int64_t base = 0; base < n; base += len) {
      for (std::int64_t j = 0; j < half; ++j) {
        const double wr = plan.tw_re[tw + static_cast<std::size_t>(j)];
        const double wi = sgn * plan.tw_im[tw + static_cast<std::size_t>(j)];
        const std::int64_t a = base + j;
        const std::int64_t b = a + half;
        const double xr = static_cast<double>(re[b]) * wr - static_cast<double>(im[b]) * wi;
        const double xi = static_cast<double>(re[b]) * wi + static_cast<double>(im[b]) * wr;
        const double ar = re[a];
        const double ai = im[a];
        re[a] = static_cast<T>(ar + xr);
        im[a] = static_cast<T>(ai + xi);
        re[b] = static_cast<T>(ar - xr);
        im[b] = static_cast<T>(ai - xi);
      }
    }
    tw += static_cast<std::size_t>(half);
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      re[i] = static_cast<T>(static_cast<double>(re[i]) * inv);
      im[i] = static_cast<T>(static_cast<double>(im[i]) * inv);
    }
  }
}

std::shared_ptr<const Plan> make_bluestein_plan(std::int64_t n) {
  auto plan = std::make_shared<Plan>();
  plan->n = n;
  plan->m = next_pow2(2 * n - 1);
  plan->inner = get_plan(plan->m);
  plan->chirp_re.resize(static_cast<std::size_t>(n));
  plan->chirp_im.resize(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large n.
    const std::int64_t k2 = (k * k) % (2 * n);
    const double ang = -kTwoPi * 0.5 * static_cast<double>(k2) / static_cast<double>(n);
    plan->chirp_re[static_cast<std::size_t>(k)] = std::cos(ang);
    plan->chirp_im[static_cast<std::size_t>(k)] = std::sin(ang);
  }
  std::vector<double> bre(static_cast<std::size_t>(plan->m), 0.0);
  std::vector<double> bim(static_cast<std::size_t>(plan->m), 0.0);
  bre[0] = 1.0;
  for (std::int64_t k = 1; k < n; ++k) {
    bre[static_cast<std::size_t>(k)] = bre[static_cast<std::size_t>(plan->m - k)] =
        plan->chirp_re[static_cast<std::size_t>(k)];
    bim[static_cast<std::size_t>(k)] = bim[static_cast<std::size_t>(plan->m - k)] =
        -plan->chirp_im[static_cast<std::size_t>(k)];
  }
  radix2_inplace(*plan->inner, bre.data(), bim.data(), false);
  plan->bfre = std::move(bre);
  plan->bfim = std::move(bim);
  return plan;
}

template <typename T>
void bluestein(const Plan& plan, T* re, T* im, bool inverse) {
  const std::int64_t n = plan.n;
  const std::int64_t m = plan.m;
  // Inverse via conjugation: ifft(x) = conj(fft(conj(x))) / n.
  const double csgn = inverse ? -1.0 : 1.0;
  std::vector<double> are(static_cast<std::size_t>(m), 0.0);
  std::vector<double> aim(static_cast<std::size_t>(m), 0.0);
  for (std::int64_t k = 0; k < n; ++k) {
    const double xr = static_cast<double>(re[k]);
    const double xi = csgn * static_cast<double>(im[k]);
    const double cr = plan.chirp_re[static_cast<std::size_t>(k)];
    const double ci = plan.chirp_im[static_cast<std::size_t>(k)];
    are[static_cast<std::size_t>(k)] = xr * cr - xi * ci;
    aim[static_cast<std::size_t>(k)] = xr * ci + xi * cr;
  }
  radix2_inplace(*plan.inner, are.data(), aim.data(), false);
  for (std::int64_t k = 0; k < m; ++k) {
    const double xr = are[static_cast<std::size_t>(k)];
    const double xi = aim[static_cast<std::size_t>(k)];
    const double br = plan.bfre[static_cast<std::size_t>(k)];
    const double bi = plan.bfim[static_cast<std::size_t>(k)];
    are[static_cast<std::size_t>(k)] = xr * br - xi * bi;
    aim[static_cast<std::size_t>(k)] = xr * bi + xi * br;
  }
  radix2_inplace(*plan.inner, are.data(), aim.data(), true);
  const double inv = inverse ? 1.0 / static_cast<double>(n) : 1.0;
  for (std::int64_t k = 0; k < n; ++k) {
    const double cr = plan.chirp_re[static_cast<std::size_t>(k)];
    const double ci = plan.chirp_im[static_cast<std::size_t>(k)];
    const double xr = are[static_cast<std::size_t>(k)];
    const double xi = aim[static_cast<std::size_t>(k)];
    const double yr = xr * cr - xi * ci;
    const double yi = xr * ci + xi * cr;
    re[k] = static_cast<T>(yr * inv);
    im[k] = static_cast<T>(csgn * yi * inv);
  }
}

std::mutex g_plan_mutex;
std::map<std::int64_t, std::shared_ptr<const Plan>> g_plans;

// Plans are built without the lock held (Bluestein recurses for the inner
// power-of-two length). A losing racer's duplicate plan is discarded.
std::shared_ptr<const Plan> get_plan(std::int64_t n) {
  {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto it = g_plans.find(n);
    if (it != g_plans.end()) return it->second;
  }
  auto plan = is_pow2(n) ? make_radix2_plan(n) : make_bluestein_plan(n);
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  return g_plans.emplace(n, plan).first->second;
}

template <typename T>
void transform_rows(T* re, T* im, std::int64_t rows, std::int64_t n, bool inverse) {
  if (n == 1) return;  // length-1 DFT is the identity
  auto plan = get_plan(n);
  for (std::int64_t r = 0; r < rows; ++r) {
    T* pr = re + r * n;
    T* pi = im + r * n;
    if (plan->m == 0) {
      radix2_inplace(*plan, pr, pi, inverse);
    } else {
      bluestein(*plan, pr, pi, inverse);
    }
  }
}

template <typename T>
void transform_cols(T* re, T* im, std::int64_t h, std::int64_t w, bool inverse) {
  if (h == 1) return;
  auto plan = get_plan(h);
  std::vector<T> cre(static_cast<std::size_t>(h)), cim(static_cast<std::size_t>(h));
  for (std::int64_t col = 0; col < w; ++col) {
    for (std::int64_t r = 0; r < h; ++r) {
      cre[static_cast<std::size_t>(r)] = re[r * w + col];
      cim[static_cast<std::size_t>(r)] = im[r * w + col];
    }
    if (plan->m == 0) {
      radix2_inplace(*plan, cre.data(), cim.data(), inverse);
    } else {
      bluestein(*plan, cre.data(), cim.data(), inverse);
    }
    for (std::int64_t r = 0; r < h; ++r) {
      re[r * w + col] = cre[static_cast<std::size_t>(r)];
      im[r * w + col] = cim[static_cast<std::size_t>(r)];
    }
  }
}

template <typename T>
void fft2_inplace_channel(T* re, T* im, std::int64_t h, std::int64_t w, bool inverse) {
  transform_rows(re, im, h, w, inverse);
  transform_cols(re, im, h, w, inverse);
}

}  // namespace

template <typename T>
void dft_1d(T* re, T* im, std::int64_t n, bool inverse) {
  if (n <= 1) return;
  transform_rows(re, im, 1, n, inverse);
}

template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& x) {
  const Shape4 s = x.shape();
  ComplexTensor<T> out(s);
  std::copy(x.vec().begin(), x.vec().end(), out.re.begin());
  const std::int64_t planes = s.b * s.c;
  const std::int64_t hw = s.h * s.w;
  T* re = out.re.data();
  T* im = out.im.data();
  parallel_for(planes, [&](std::int64_t p) {
    fft2_inplace_channel(re + p * hw, im + p * hw, s.h, s.w, false);
  });
  return out;
}

template <typename T>
ComplexTensor<T> ifft2(const ComplexTensor<T>& x) {
  ComplexTensor<T> out = x;
  const std::int64_t planes = x.shape.b * x.shape.c;
  const std::int64_t hw = x.shape.h * x.shape.w;
  T* re = out.re.data();
  T* im = out.im.data();
  parallel_for(planes, [&](std::int64_t p) {
    fft2_inplace_channel(re + p * hw, im + p * hw, x.shape.h, x.shape.w, true);
  });
  return out;
}

template <typename T>
Tensor<T> ifft2_real(const ComplexTensor<T>& x) {
  ComplexTensor<T> full = ifft2(x);
  return Tensor<T>(x.shape, std::move(full.re));
}

template <typename T>
double ifft2_imag_residue(const ComplexTensor<T>& x) {
  ComplexTensor<T> full = ifft2(x);
  double nre = 0.0, nim = 0.0;
  for (std::size_t i = 0; i < full.re.size(); ++i) {
    nre += static_cast<double>(full.re[i]) * static_cast<double>(full.re[i]);
    nim += static_cast<double>(full.im[i]) * static_cast<double>(full.im[i]);
  }
  if (nre == 0.0) return nim == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(nim / nre);
}

template void dft_1d<float>(float*, float*, std::int64_t, bool);
template void dft_1d<double>(double*, double*, std::int64_t, bool);
template ComplexTensor<float> fft2<float>(const Tensor<float>&);
template ComplexTensor<double> fft2<double>(const Tensor<double>&);
template ComplexTensor<float> ifft2<float>(const ComplexTensor<float>&);
template ComplexTensor<double> ifft2<double>(const ComplexTensor<double>&);
template Tensor<float> ifft2_real<float>(const ComplexTensor<float>&);
template Tensor<double> ifft2_real<double>(const ComplexTensor<double>&);
template double ifft2_imag_residue<float>(const ComplexTensor<float>&);
template double ifft2_imag_residue<double>(const ComplexTensor<double>&);

}  // namespace udr::fft
