#include "ppl/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#if defined(PPL_HAVE_JPEG)
#include <jpeglib.h>
#endif

namespace ppl {

Image8 quantize_u8(const Image& img) {
  Image8 out;
  out.height = img.height;
  out.width = img.width;
  out.channels = img.channels;
  out.data.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = clamp01(img.data[i]);
    out.data[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  return out;
}

Image dequantize_u8(const Image8& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<float>(img.data[i]) / 255.0f;
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidArgument("write_png: only 1- or 3-channel images");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("write_png: cannot open " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  const int color =
      img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t stride =
      static_cast<std::size_t>(img.width) * img.channels;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(img.data.data() + y * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("read_png: cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: malformed PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize any input to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image8 out;
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.channels = static_cast<int>(png_get_channels(png, info));
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: unsupported channel count in " +
                      path.string());
  }
  const std::size_t stride =
      static_cast<std::size_t>(out.width) * out.channels;
  out.data.resize(stride * out.height);
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
    rows[static_cast<std::size_t>(y)] = out.data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

#if defined(PPL_HAVE_JPEG)

bool jpeg_supported() { return true; }

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100)
    throw InvalidArgument("jpeg_roundtrip: quality must be in [1,100]");
  if (img.channels != 1 && img.channels != 3)
    throw InvalidArgument("jpeg_roundtrip: only 1- or 3-channel images");

  const Image8 in = quantize_u8(img);

  // Encode to memory.
  jpeg_compress_struct enc{};
  jpeg_error_mgr jerr{};
  enc.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&enc);
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  jpeg_mem_dest(&enc, &buf, &buf_size);
  enc.image_width = static_cast<JDIMENSION>(in.width);
  enc.image_height = static_cast<JDIMENSION>(in.height);
  enc.input_components = in.channels;
  enc.in_color_space = in.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&enc);
  jpeg_set_quality(&enc, quality, TRUE);
  jpeg_start_compress(&enc, TRUE);
  const std::size_t stride = static_cast<std::size_t>(in.width) * in.channels;
  while (enc.next_scanline < enc.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(in.data.data() +
                                        enc.next_scanline * stride);
    jpeg_write_scanlines(&enc, &row, 1);
  }
  jpeg_finish_compress(&enc);
  jpeg_destroy_compress(&enc);

  // Decode back.
  jpeg_decompress_struct dec{};
  jpeg_error_mgr jerr2{};
  dec.err = jpeg_std_error(&jerr2);
  jpeg_create_decompress(&dec);
  jpeg_mem_src(&dec, buf, buf_size);
  jpeg_read_header(&dec, TRUE);
  dec.out_color_space = in.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&dec);

  Image out(img.height, img.width, img.channels);
  std::vector<unsigned char> row_buf(stride);
  int y = 0;
  while (dec.output_scanline < dec.output_height) {
    JSAMPROW row = row_buf.data();
    jpeg_read_scanlines(&dec, &row, 1);
    for (std::size_t i = 0; i < stride; ++i)
      out.data[static_cast<std::size_t>(y) * stride + i] =
          static_cast<float>(row_buf[i]) / 255.0f;
    ++y;
  }
  jpeg_finish_decompress(&dec);
  jpeg_destroy_decompress(&dec);
  std::free(buf);
  return out;
}

#else

bool jpeg_supported() { return false; }

Image jpeg_roundtrip(const Image&, int) {
  throw InvalidArgument("jpeg_roundtrip: built without a JPEG codec");
}

#endif

}  // namespace ppl
