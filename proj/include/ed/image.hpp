#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ed/error.hpp"

namespace ed {

/// Interleaved 8-bit image, row-major, `channels` samples per pixel.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int ch) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }

  bool operator==(const RawImage&) const = default;
};

/// Throws InputError unless the image is non-degenerate and self-consistent.
inline void validate(const RawImage& image) {
  if (image.height < 1 || image.width < 1) {
    throw InputError("image has a zero dimension (" + std::to_string(image.width) +
                     "x" + std::to_string(image.height) + ")");
  }
  if (image.channels != 1 && image.channels != 3) {
    throw InputError("image must have 1 or 3 channels, got " +
                     std::to_string(image.channels));
  }
  const auto expected = static_cast<std::size_t>(image.height) * image.width * image.channels;
  if (image.pixels.size() != expected) {
    throw InputError("image pixel buffer has " + std::to_string(image.pixels.size()) +
                     " bytes, expected " + std::to_string(expected));
  }
}

/// Bilinear resize, reference kernel.
///
/// For output pixel (x, y) the source coordinate is
///   sx = (x + 0.5) * W_in / W_out - 0.5,   sy likewise,
/// clamped to [0, W_in - 1] / [0, H_in - 1]. With x0 = floor(sx),
/// x1 = min(x0 + 1, W_in - 1), fx = sx - x0 (and the same along y) the
/// sample is
///   v = (1 - fy) * ((1 - fx) * p00 + fx * p01) + fy * ((1 - fx) * p10 + fx * p11)
/// evaluated in double precision in exactly that order, and stored as
/// floor(v + 0.5) clamped to [0, 255].
inline RawImage resize_bilinear(const RawImage& src, int out_h, int out_w) {
  validate(src);
  if (out_h < 1 || out_w < 1) {
    throw InputError("resize target has a zero dimension");
  }
  if (out_h == src.height && out_w == src.width) return src;

  RawImage dst(out_h, out_w, src.channels);
  const double scale_y = static_cast<double>(src.height) / out_h;
  const double scale_x = static_cast<double>(src.width) / out_w;

  for (int y = 0; y < out_h; ++y) {
    double sy = (y + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      double sx = (x + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      for (int ch = 0; ch < src.channels; ++ch) {
        const double top = (1.0 - fx) * src.at(y0, x0, ch) + fx * src.at(y0, x1, ch);
        const double bottom = (1.0 - fx) * src.at(y1, x0, ch) + fx * src.at(y1, x1, ch);
        const double v = (1.0 - fy) * top + fy * bottom;
        dst.at(y, x, ch) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return dst;
}

inline RawImage crop(const RawImage& src, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > src.width || y + h > src.height) {
    throw InputError("crop rectangle outside image bounds");
  }
  RawImage dst(h, w, src.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * src.channels;
  for (int row = 0; row < h; ++row) {
    const auto* from = &src.pixels[(static_cast<std::size_t>(y + row) * src.width + x) * src.channels];
    std::copy_n(from, row_bytes, &dst.pixels[static_cast<std::size_t>(row) * row_bytes]);
  }
  return dst;
}

/// Mean luminance in [0, 1] of the pixel rectangle [x0, x1) x [y0, y1).
/// Channels are averaged with equal weight.
inline double mean_brightness(const RawImage& img, int x0, int y0, int x1, int y1) {
  double sum = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int ch = 0; ch < img.channels; ++ch) sum += img.at(y, x, ch);
    }
  }
  const double count = static_cast<double>(x1 - x0) * (y1 - y0) * img.channels;
  return count > 0 ? sum / (count * 255.0) : 0.0;
}

}  // namespace ed
