#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <queue>

#include "udr/rain.hpp"

using namespace udr;
using rain::RainConfig;
using rain::RainLayer;

namespace {

// Structure-tensor estimate of the dominant orientation, in degrees from
// vertical, normalized to (-90, 90]. Scharr gradients: central differences
// carry several degrees of orientation anisotropy on rasterized streaks.
double dominant_orientation_deg(const RainLayer& layer) {
  const Shape4 s = layer.shape();
  auto at = [&](std::int64_t y, std::int64_t x) {
    return static_cast<double>(layer.at(0, 0, y, x));
  };
  double jxx = 0.0, jyy = 0.0, jxy = 0.0;
  for (std::int64_t y = 1; y < s.h - 1; ++y) {
    for (std::int64_t x = 1; x < s.w - 1; ++x) {
      const double gx = (3 * at(y - 1, x + 1) + 10 * at(y, x + 1) + 3 * at(y + 1, x + 1) -
                         3 * at(y - 1, x - 1) - 10 * at(y, x - 1) - 3 * at(y + 1, x - 1)) /
                        32.0;
      const double gy = (3 * at(y + 1, x - 1) + 10 * at(y + 1, x) + 3 * at(y + 1, x + 1) -
                         3 * at(y - 1, x - 1) - 10 * at(y - 1, x) - 3 * at(y - 1, x + 1)) /
                        32.0;
      jxx += gx * gx;
      jyy += gy * gy;
      jxy += gx * gy;
    }
  }
  const double phi_g = 0.5 * std::atan2(2.0 * jxy, jxx - jyy);  // gradient direction from x-axis
  double deg = -phi_g * 180.0 / 3.14159265358979323846;
  if (deg > 90.0) deg -= 180.0;
  if (deg <= -90.0) deg += 180.0;
  return deg;
}

double angular_distance_deg(double a, double b) {
  double d = std::fmod(std::abs(a - b), 180.0);
  return std::min(d, 180.0 - d);
}

// Mean major-axis extent of thresholded connected components (8-neighbour).
double mean_component_length(const RainLayer& layer, float threshold, std::size_t min_px = 8) {
  const Shape4 s = layer.shape();
  std::vector<char> seen(static_cast<std::size_t>(s.h * s.w), 0);
  std::vector<double> lengths;
  for (std::int64_t sy = 0; sy < s.h; ++sy) {
    for (std::int64_t sx = 0; sx < s.w; ++sx) {
      const std::size_t start = static_cast<std::size_t>(sy * s.w + sx);
      if (seen[start] || layer.at(0, 0, sy, sx) < threshold) continue;
      // BFS
      std::vector<std::pair<std::int64_t, std::int64_t>> pixels;
      std::queue<std::pair<std::int64_t, std::int64_t>> frontier;
      frontier.emplace(sy, sx);
      seen[start] = 1;
      while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop();
        pixels.emplace_back(y, x);
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dx = -1; dx <= 1; ++dx) {
            const std::int64_t ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= s.h || nx < 0 || nx >= s.w) continue;
            const std::size_t idx = static_cast<std::size_t>(ny * s.w + nx);
            if (!seen[idx] && layer.at(0, 0, ny, nx) >= threshold) {
              seen[idx] = 1;
              frontier.emplace(ny, nx);
            }
          }
        }
      }
      if (pixels.size() < min_px) continue;
      // Principal axis via the 2x2 covariance eigenvector.
      double my = 0.0, mx = 0.0;
      for (const auto& [y, x] : pixels) {
        my += static_cast<double>(y);
        mx += static_cast<double>(x);
      }
      my /= static_cast<double>(pixels.size());
      mx /= static_cast<double>(pixels.size());
      double cyy = 0.0, cxx = 0.0, cxy = 0.0;
      for (const auto& [y, x] : pixels) {
        const double fy = static_cast<double>(y) - my;
        const double fx = static_cast<double>(x) - mx;
        cyy += fy * fy;
        cxx += fx * fx;
        cxy += fy * fx;
      }
      const double tr = cxx + cyy;
      const double det = cxx * cyy - cxy * cxy;
      const double lam = 0.5 * tr + std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
      double ey, ex;
      if (std::abs(cxy) > 1e-12) {
        ex = lam - cyy;
        ey = cxy;
      } else if (cxx >= cyy) {
        ex = 1.0;
        ey = 0.0;
      } else {
        ex = 0.0;
        ey = 1.0;
      }
      const double norm = std::sqrt(ex * ex + ey * ey);
      ex /= norm;
      ey /= norm;
      double lo = 1e30, hi = -1e30;
      for (const auto& [y, x] : pixels) {
        const double t = (static_cast<double>(y) - my) * ey + (static_cast<double>(x) - mx) * ex;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      lengths.push_back(hi - lo + 1.0);
    }
  }
  if (lengths.empty()) return 0.0;
  double acc = 0.0;
  for (double l : lengths) acc += l;
  return acc / static_cast<double>(lengths.size());
}

image::Image gradient_background(std::int64_t h, std::int64_t w) {
  image::Image bg = image::make_image(h, w);
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        bg.at(0, c, y, x) = static_cast<float>(
            0.15 + 0.6 * (static_cast<double>(y) / h) * (static_cast<double>(c + 1) / 3.0) +
            0.2 * static_cast<double>(x) / w);
      }
    }
  }
  return bg;
}

}  // namespace

TEST_CASE("motion blur kernel basics") {
  SUBCASE("length one is the identity kernel") {
    Tensor<double> k = rain::motion_blur_kernel(1.0, 35.0, 3.0);
    CHECK(k.shape() == Shape4{1, 1, 1, 1});
    CHECK(k[0] == 1.0f);
  }
  SUBCASE("kernels are normalized") {
    for (double angle : {-60.0, 0.0, 12.5, 90.0}) {
      Tensor<double> k = rain::motion_blur_kernel(17.0, angle, 2.0);
      double sum = 0.0;
      for (std::int64_t i = 0; i < k.numel(); ++i) sum += static_cast<double>(k[i]);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("90 degrees equals the transpose of 0 degrees") {
    Tensor<double> k0 = rain::motion_blur_kernel(15.0, 0.0, 1.5);
    Tensor<double> k90 = rain::motion_blur_kernel(15.0, 90.0, 1.5);
    REQUIRE(k90.shape().h == k0.shape().w);
    REQUIRE(k90.shape().w == k0.shape().h);
    for (std::int64_t y = 0; y < k0.shape().h; ++y) {
      for (std::int64_t x = 0; x < k0.shape().w; ++x) {
        CHECK(k90.at(0, 0, x, y) == doctest::Approx(k0.at(0, 0, y, x)).epsilon(1e-9));
      }
    }
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(rain::motion_blur_kernel(0.0, 0.0, 1.0), ArgumentError);
    CHECK_THROWS_AS(rain::motion_blur_kernel(5.0, 0.0, 0.0), ArgumentError);
  }
}

TEST_CASE("seed noise") {
  SUBCASE("zero density gives all zeros") {
    RainLayer l = rain::seed_noise(64, 64, 0.0, 9);
    for (std::int64_t i = 0; i < l.numel(); ++i) CHECK(l[i] == 0.0f);
  }
  SUBCASE("nonzero fraction within the 4-sigma binomial interval") {
    const double p = 0.01;
    RainLayer l = rain::seed_noise(512, 512, p, 10);
    std::int64_t nz = 0;
    for (std::int64_t i = 0; i < l.numel(); ++i) nz += l[i] > 0.0f ? 1 : 0;
    const double n = 512.0 * 512.0;
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK(static_cast<double>(nz) >= n * p - 4 * sigma);
    CHECK(static_cast<double>(nz) <= n * p + 4 * sigma);
  }
  SUBCASE("deterministic per seed") {
    RainLayer a = rain::seed_noise(32, 32, 0.05, 11);
    RainLayer b = rain::seed_noise(32, 32, 0.05, 11);
    CHECK(a.vec() == b.vec());
    RainLayer c = rain::seed_noise(32, 32, 0.05, 12);
    CHECK(a.vec() != c.vec());
  }
}

TEST_CASE("render streaks") {
  SUBCASE("zero noise stays zero, output clamped to [0,1]") {
    RainLayer zero(Shape4{1, 1, 32, 32});
    Tensor<double> k = rain::motion_blur_kernel(9.0, 10.0, 1.0);
    RainLayer out = rain::render_streaks(zero, k, 100.0);
    for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0f);

    RainLayer noise = rain::seed_noise(64, 64, 0.05, 13);
    RainLayer big = rain::render_streaks(noise, k, 1e6);
    for (std::int64_t i = 0; i < big.numel(); ++i) {
      CHECK(big[i] >= 0.0f);
      CHECK(big[i] <= 1.0f);
    }
  }
  SUBCASE("structure-tensor orientation tracks the kernel angle") {
    for (double angle : {-30.0, 0.0, 15.0, 40.0}) {
      Tensor<double> k = rain::motion_blur_kernel(25.0, angle, 1.5);
      RainLayer noise = rain::seed_noise(256, 256, 0.005, 14);
      RainLayer out = rain::render_streaks(noise, k, 25.0 * 1.5);
      const double est = dominant_orientation_deg(out);
      CHECK(angular_distance_deg(est, angle) <= 2.0);
    }
  }
}

TEST_CASE("scale streak layer") {
  RainLayer noise = rain::seed_noise(128, 96, 0.01, 15);
  SUBCASE("identity at s=1") {
    RainLayer same = rain::scale_streak_layer(noise, 1.0);
    CHECK(same.shape() == noise.shape());
    double m = 0.0;
    for (std::int64_t i = 0; i < same.numel(); ++i) {
      m = std::max(m, std::abs(static_cast<double>(same[i]) - static_cast<double>(noise[i])));
    }
    CHECK(m <= 1e-6);
  }
  SUBCASE("shape doubles at s=2") {
    RainLayer twice = rain::scale_streak_layer(noise, 2.0);
    CHECK(twice.shape() == Shape4{1, 1, 256, 192});
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(rain::scale_streak_layer(noise, 0.0), ArgumentError);
  }
  SUBCASE("component length scales with the layer") {
    Tensor<double> k = rain::motion_blur_kernel(21.0, 12.0, 1.5);
    RainLayer sparse = rain::seed_noise(256, 256, 0.002, 16);
    RainLayer streaks = rain::render_streaks(sparse, k, 21.0 * 1.5);
    RainLayer scaled = rain::scale_streak_layer(streaks, 2.0);
    const double len1 = mean_component_length(streaks, 0.12f);
    const double len2 = mean_component_length(scaled, 0.12f);
    REQUIRE(len1 > 0.0);
    CHECK(len2 / len1 >= 1.7);
    CHECK(len2 / len1 <= 2.3);
  }
}

TEST_CASE("alpha blend") {
  image::Image bg = gradient_background(24, 32);
  RainLayer layer(Shape4{1, 1, 24, 32});
  for (std::int64_t i = 0; i < layer.numel(); ++i) {
    layer[i] = (i % 7 == 0) ? 0.8f : 0.0f;
  }
  SUBCASE("alpha zero returns the background bit-exactly") {
    image::Image out = rain::alpha_blend(bg, layer, 0.0, 0.9);
    CHECK(out.vec() == bg.vec());
  }
  SUBCASE("zero rain layer returns the background bit-exactly") {
    RainLayer zero(Shape4{1, 1, 24, 32});
    image::Image out = rain::alpha_blend(bg, zero, 0.7, 0.9);
    CHECK(out.vec() == bg.vec());
  }
  SUBCASE("background preserved exactly wherever the layer is zero") {
    image::Image out = rain::alpha_blend(bg, layer, 0.7, 0.9);
    const std::int64_t hw = 24 * 32;
    for (std::int64_t i = 0; i < hw; ++i) {
      if (layer[i] == 0.0f) {
        for (std::int64_t c = 0; c < 3; ++c) CHECK(out[c * hw + i] == bg[c * hw + i]);
      }
    }
  }
  SUBCASE("full opacity paints the streak brightness") {
    RainLayer ones = RainLayer::full(Shape4{1, 1, 24, 32}, 1.0f);
    image::Image out = rain::alpha_blend(bg, ones, 1.0, 0.9);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out[i] == doctest::Approx(0.9f).epsilon(1e-6));
    }
  }
  SUBCASE("dim mismatch") {
    RainLayer small(Shape4{1, 1, 8, 8});
    CHECK_THROWS_AS(rain::alpha_blend(bg, small, 0.5, 0.9), ShapeError);
  }
}

TEST_CASE("synthesize pair") {
  image::Image bg = gradient_background(128, 192);
  RainConfig cfg;
  cfg.base_width = 192;
  cfg.density = 0.004;
  cfg.length_min = 11;
  cfg.length_max = 21;
  cfg.seed = 99;

  SUBCASE("ground truth is the background bit-exactly") {
    image::ImagePair pair = rain::synthesize_pair(bg, cfg, 0);
    CHECK(pair.gt.vec() == bg.vec());
    CHECK(pair.rain.shape() == bg.shape());
    for (std::int64_t i = 0; i < pair.rain.numel(); ++i) {
      CHECK(pair.rain[i] >= 0.0f);
      CHECK(pair.rain[i] <= 1.0f);
    }
  }
  SUBCASE("zero density reproduces the ground truth") {
    RainConfig c2 = cfg;
    c2.density = 0.0;
    image::ImagePair pair = rain::synthesize_pair(bg, c2, 0);
    CHECK(pair.rain.vec() == pair.gt.vec());
  }
  SUBCASE("zero alpha reproduces the ground truth") {
    RainConfig c2 = cfg;
    c2.alpha_min = c2.alpha_max = 0.0;
    image::ImagePair pair = rain::synthesize_pair(bg, c2, 0);
    CHECK(pair.rain.vec() == pair.gt.vec());
  }
  SUBCASE("bit-identical on repeat, different across seeds and indices") {
    image::ImagePair a = rain::synthesize_pair(bg, cfg, 3);
    image::ImagePair b = rain::synthesize_pair(bg, cfg, 3);
    CHECK(a.rain.vec() == b.rain.vec());
    image::ImagePair c = rain::synthesize_pair(bg, cfg, 4);
    CHECK(a.rain.vec() != c.rain.vec());
    RainConfig c2 = cfg;
    c2.seed = 100;
    image::ImagePair d = rain::synthesize_pair(bg, c2, 3);
    CHECK(a.rain.vec() != d.rain.vec());
  }
  SUBCASE("streak geometry scales with target resolution") {
    // Same seed at double the resolution: streak length should double since
    // rendering happens at base_width and is rescaled to the target.
    image::Image bg2 = gradient_background(256, 384);
    RainConfig strong = cfg;
    strong.density = 0.0015;
    strong.alpha_min = strong.alpha_max = 1.0;
    strong.length_min = strong.length_max = 19.0;
    image::ImagePair small = rain::synthesize_pair(bg, strong, 0);
    image::ImagePair large = rain::synthesize_pair(bg2, strong, 0);
    // Difference image isolates the rain component over the shared content.
    auto rain_map = [](const image::ImagePair& p) {
      const Shape4 s = p.rain.shape();
      RainLayer diff(Shape4{1, 1, s.h, s.w});
      const std::int64_t hw = s.h * s.w;
      for (std::int64_t i = 0; i < hw; ++i) {
        float acc = 0.0f;
        for (std::int64_t c = 0; c < 3; ++c) {
          acc += std::abs(p.rain[c * hw + i] - p.gt[c * hw + i]);
        }
        diff[i] = acc / 3.0f;
      }
      return diff;
    };
    const double len_small = mean_component_length(rain_map(small), 0.05f);
    const double len_large = mean_component_length(rain_map(large), 0.05f);
    REQUIRE(len_small > 0.0);
    const double ratio = len_large / len_small;
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
  }
}
