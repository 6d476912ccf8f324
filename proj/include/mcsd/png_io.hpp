#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mcsd/common.hpp"

namespace mcsd {

// Row-major interleaved 8-bit pixels, `channels` values per pixel.
struct ImageU8 {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 1;
  std::vector<uint8_t> pixels;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Decodes any 8/16-bit gray, palette, or RGB(A) PNG to 8-bit grayscale.
inline ImageU8 read_png_gray(const std::string& path) {
  detail::FileHandle file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng setup failed for " + path);
  }
  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("undecodable PNG " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.height = static_cast<int64_t>(png_get_image_height(png, info));
  img.width = static_cast<int64_t>(png_get_image_width(png, info));
  img.channels = 1;
  img.pixels.assign(static_cast<size_t>(img.height * img.width), 0);
  rows.resize(static_cast<size_t>(img.height));
  for (int64_t r = 0; r < img.height; ++r) rows[static_cast<size_t>(r)] = img.pixels.data() + r * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace detail {

inline void write_png(const std::string& path, const ImageU8& img, int color_type) {
  const int64_t ch = img.channels;
  if (img.height <= 0 || img.width <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.height * img.width * ch))
    throw DataError("inconsistent image buffer for " + path);
  FileHandle file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng setup failed for " + path);
  }
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG encode failed for " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t r = 0; r < img.height; ++r)
    rows[static_cast<size_t>(r)] = const_cast<png_bytep>(img.pixels.data() + r * img.width * ch);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_png_gray(const std::string& path, const ImageU8& img) {
  if (img.channels != 1) throw DataError("write_png_gray wants 1 channel, got " + std::to_string(img.channels));
  detail::write_png(path, img, PNG_COLOR_TYPE_GRAY);
}

inline void write_png_rgb(const std::string& path, const ImageU8& img) {
  if (img.channels != 3) throw DataError("write_png_rgb wants 3 channels, got " + std::to_string(img.channels));
  detail::write_png(path, img, PNG_COLOR_TYPE_RGB);
}

}  // namespace mcsd
