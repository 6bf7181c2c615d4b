#pragma once

#include <filesystem>

#include "ppl/image.hpp"

namespace ppl {

// 8-bit PNG, gray (1 channel) or RGB (3 channels), no interlace.
void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

inline void write_png(const std::filesystem::path& path, const Image& img) {
  write_png(path, quantize_u8(img));
}
inline Image read_png_unit(const std::filesystem::path& path) {
  return dequantize_u8(read_png(path));
}

// True when the build carries a JPEG codec.
bool jpeg_supported();

// In-memory JPEG encode/decode round trip at the given quality (1..100).
// Throws InvalidArgument when no codec is available.
Image jpeg_roundtrip(const Image& img, int quality);

}  // namespace ppl
