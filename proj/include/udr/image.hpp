#pragma once

#include <cstdint>
#include <string>

#include "udr/tensor.hpp"

namespace udr::image {

// Images are (1,3,H,W) float tensors with values in [0,1].
using Image = Tensor<float>;

struct ImagePair {
  Image rain;
  Image gt;
};

Image make_image(std::int64_t h, std::int64_t w);

// Decodes an 8-bit RGB PNG (palette/gray/alpha inputs are converted).
Image read_png(const std::string& path);

// Encodes 8-bit RGB; values are clamped to [0,1] and quantized round-half-up.
void write_png(const std::string& path, const Image& img);

std::uint8_t quantize_u8(float v);

}  // namespace udr::image
