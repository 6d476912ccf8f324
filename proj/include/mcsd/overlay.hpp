#pragma once

#include <algorithm>
#include <cstdint>

#include "mcsd/common.hpp"
#include "mcsd/png_io.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

// Paints a confusion map over a grayscale frame: hits green, misses red,
// false alarms blue, correct rejections keep the underlying pixel.
template <typename T>
ImageU8 overlay_frame(const Tensor<T>& image, const Tensor<T>& pred, const Tensor<T>& gt) {
  check(image.rank() == 2,
        "overlay_frame wants rank-2 frames, got " + shape_str(image.shape()));
  check(image.shape() == pred.shape() && image.shape() == gt.shape(),
        "overlay_frame shapes disagree: image " + shape_str(image.shape()) + ", pred " +
            shape_str(pred.shape()) + ", gt " + shape_str(gt.shape()));
  const int64_t h = image.shape()[0];
  const int64_t w = image.shape()[1];
  ImageU8 out;
  out.height = h;
  out.width = w;
  out.channels = 3;
  out.pixels.resize(static_cast<size_t>(h * w * 3));
  const T* img = image.data();
  const T* p = pred.data();
  const T* g = gt.data();
  for (int64_t i = 0; i < h * w; ++i) {
    if (p[i] != T(0) && p[i] != T(1))
      throw DataError("overlay_frame: prediction is not binary at flat index " + std::to_string(i));
    if (g[i] != T(0) && g[i] != T(1))
      throw DataError("overlay_frame: ground truth is not binary at flat index " + std::to_string(i));
    uint8_t* px = out.pixels.data() + i * 3;
    const bool hit = p[i] == T(1);
    const bool pos = g[i] == T(1);
    if (hit && pos) {
      px[0] = 0; px[1] = 255; px[2] = 0;
    } else if (!hit && pos) {
      px[0] = 255; px[1] = 0; px[2] = 0;
    } else if (hit && !pos) {
      px[0] = 0; px[1] = 0; px[2] = 255;
    } else {
      const double v = std::clamp(static_cast<double>(img[i]), 0.0, 1.0);
      const auto gray = static_cast<uint8_t>(v * 255.0 + 0.5);
      px[0] = gray; px[1] = gray; px[2] = gray;
    }
  }
  return out;
}

// Converts a binary rank-2 mask to an 8-bit grayscale image (0 or 255).
template <typename T>
ImageU8 mask_to_image(const Tensor<T>& mask) {
  check(mask.rank() == 2, "mask_to_image wants rank-2 masks, got " + shape_str(mask.shape()));
  const int64_t h = mask.shape()[0];
  const int64_t w = mask.shape()[1];
  ImageU8 out;
  out.height = h;
  out.width = w;
  out.channels = 1;
  out.pixels.resize(static_cast<size_t>(h * w));
  const T* m = mask.data();
  for (int64_t i = 0; i < h * w; ++i) {
    if (m[i] != T(0) && m[i] != T(1))
      throw DataError("mask_to_image: mask is not binary at flat index " + std::to_string(i));
    out.pixels[static_cast<size_t>(i)] = m[i] == T(1) ? 255 : 0;
  }
  return out;
}

}  // namespace mcsd
