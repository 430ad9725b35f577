#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ed/image.hpp"

namespace test {

inline ed::RawImage filled(int h, int w, std::uint8_t v, int channels = 3) {
  return ed::RawImage(h, w, channels, v);
}

inline ed::RawImage noise(int h, int w, std::uint64_t seed, int channels = 3) {
  ed::RawImage img(h, w, channels);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

// Dark image whose top-left h/2 x w/2 quadrant is bright.
inline ed::RawImage bright_quadrant(int h, int w) {
  ed::RawImage img(h, w, 3, 16);
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 240;
  return img;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double total = 0.0;
  for (auto& x : v) total += (x = e(rng));
  for (auto& x : v) x /= total;
  return v;
}

}  // namespace test
