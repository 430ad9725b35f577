#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ed/error.hpp"
#include "ed/image.hpp"

namespace ed::cli {

/// Decodes PNG, JPEG or PNM into an RGB RawImage.
inline RawImage load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) throw InputError("image not found: " + path);
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot decode image: " + path);
  RawImage img(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

}  // namespace ed::cli
