// Serial reference vs OpenMP kernels on model-typical shapes.
#include <benchmark/benchmark.h>

#include "reference/reference_kernels.hpp"
#include "udr/fft.hpp"
#include "udr/kernels.hpp"
#include "udr/rng.hpp"
#include "udr/runtime.hpp"

using namespace udr;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape4 s, std::uint64_t seed) {
  Tensor<T> t(s);
  Rng rng(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

const Shape4 kFeat{1, 48, 256, 256};   // level-1 features at 1024 input
const Shape4 kKernel{96, 48, 3, 3};    // FFL expansion conv

void bm_conv2d_reference(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 1);
  auto w = random_tensor<float>(kKernel, 2);
  std::vector<float> b(96, 0.1f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::conv2d(x, w, b, 1, kernels::Pad::kSame));
  }
}
BENCHMARK(bm_conv2d_reference)->Unit(benchmark::kMillisecond);

void bm_conv2d_serial(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 1);
  auto w = random_tensor<float>(kKernel, 2);
  std::vector<float> b(96, 0.1f);
  runtime::SerialGuard serial;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, b, 1, kernels::Pad::kSame));
  }
}
BENCHMARK(bm_conv2d_serial)->Unit(benchmark::kMillisecond);

void bm_conv2d_openmp(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 1);
  auto w = random_tensor<float>(kKernel, 2);
  std::vector<float> b(96, 0.1f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::conv2d_forward(x, w, b, 1, kernels::Pad::kSame));
  }
}
BENCHMARK(bm_conv2d_openmp)->Unit(benchmark::kMillisecond);

void bm_layer_norm_serial(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 3);
  std::vector<float> gamma(48, 1.0f), beta(48, 0.0f);
  runtime::SerialGuard serial;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::layer_norm_forward<float>(x, gamma, beta, 1e-6f, nullptr, nullptr));
  }
}
BENCHMARK(bm_layer_norm_serial)->Unit(benchmark::kMillisecond);

void bm_layer_norm_openmp(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 3);
  std::vector<float> gamma(48, 1.0f), beta(48, 0.0f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::layer_norm_forward<float>(x, gamma, beta, 1e-6f, nullptr, nullptr));
  }
}
BENCHMARK(bm_layer_norm_openmp)->Unit(benchmark::kMillisecond);

void bm_fft2_serial(benchmark::State& state) {
  auto x = random_tensor<float>(Shape4{1, 64, 256, 256}, 4);
  runtime::SerialGuard serial;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fft::fft2(x));
  }
}
BENCHMARK(bm_fft2_serial)->Unit(benchmark::kMillisecond);

void bm_fft2_openmp(benchmark::State& state) {
  auto x = random_tensor<float>(Shape4{1, 64, 256, 256}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fft::fft2(x));
  }
}
BENCHMARK(bm_fft2_openmp)->Unit(benchmark::kMillisecond);

void bm_resize_serial(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 5);
  runtime::SerialGuard serial;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::resize_bilinear(x, 384, 384));
  }
}
BENCHMARK(bm_resize_serial)->Unit(benchmark::kMillisecond);

void bm_resize_openmp(benchmark::State& state) {
  auto x = random_tensor<float>(kFeat, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::resize_bilinear(x, 384, 384));
  }
}
BENCHMARK(bm_resize_openmp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
