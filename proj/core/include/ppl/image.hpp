#pragma once

#include <cstddef>
#include <vector>

#include "ppl/common.hpp"

namespace ppl {

// One image: row-major (y, x, channel) float intensities in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw InvalidArgument("Image: dimensions must be positive");
  }

  std::size_t size() const { return data.size(); }

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const float& at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// 8-bit quantized image as stored on disk; round(v*255) per value.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<unsigned char> data;
};

Image8 quantize_u8(const Image& img);
Image dequantize_u8(const Image8& img);

}  // namespace ppl
