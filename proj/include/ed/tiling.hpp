#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "ed/config.hpp"
#include "ed/error.hpp"
#include "ed/image.hpp"

namespace ed {

struct TileOffset {
  int x = 0;
  int y = 0;
  bool operator==(const TileOffset&) const = default;
};

/// The (possibly resized) original image and its N overlapping c x c tiles,
/// ordered row-major over the tile grid.
struct TileSet {
  RawImage original;
  std::vector<RawImage> tiles;
  std::vector<TileOffset> offsets;
  int tile_size = 0;
  int grid = 0;  // tiles per axis, sqrt(N)

  std::size_t size() const { return tiles.size(); }
  bool operator==(const TileSet&) const = default;
};

/// Patch-to-tile membership over the encoder's d x d patch grid.
/// membership[i * d + j] lists the tile indices (0-based) containing the
/// center of patch (i, j).
struct RegionMap {
  int grid_side = 0;
  int region_count = 0;
  std::vector<std::vector<int>> membership;

  const std::vector<int>& at(int i, int j) const {
    return membership[static_cast<std::size_t>(i) * grid_side + j];
  }
  bool operator==(const RegionMap&) const = default;
};

namespace detail {

// Evenly anchored offsets along one axis: round(i * (dim - c) / (g - 1)),
// ties rounded up.
inline std::vector<int> axis_offsets(int dim, int tile, int grid) {
  std::vector<int> out(static_cast<std::size_t>(grid), 0);
  if (grid == 1) return out;
  const long long span = dim - tile;
  const long long denom = grid - 1;
  for (int i = 0; i < grid; ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>((2 * i * span + denom) / (2 * denom));
  }
  return out;
}

}  // namespace detail

/// Brings an image to a size the tile grid covers exactly.
///
/// Images whose larger side exceeds grid * c are squashed to S x S with
/// S = c * (grid + 2) / 3 (448 for c = 336 on a 2 x 2 grid). Images whose
/// smaller side is below c are first upscaled, keeping aspect ratio, until
/// the smaller side equals c. For grid = 1 the result is always c x c.
inline RawImage normalize_for_tiling(const RawImage& image, int grid, int tile) {
  RawImage out = image;
  const int limit = grid * tile;
  const int square = static_cast<int>(std::lround(tile * (grid + 2) / 3.0));

  if (std::max(out.height, out.width) > limit) {
    out = resize_bilinear(out, square, square);
  }
  if (std::min(out.height, out.width) < tile) {
    const int short_side = std::min(out.height, out.width);
    const double scale = static_cast<double>(tile) / short_side;
    const int h = out.height == short_side ? tile
                                           : std::max(tile, static_cast<int>(std::lround(out.height * scale)));
    const int w = out.width == short_side ? tile
                                          : std::max(tile, static_cast<int>(std::lround(out.width * scale)));
    out = resize_bilinear(out, h, w);
    // A very elongated image can overshoot the grid after upscaling.
    if (std::max(out.height, out.width) > limit) {
      out = resize_bilinear(out, square, square);
    }
  }
  return out;
}

inline TileSet split_image(const RawImage& image, int n, int tile_size) {
  const int grid = grid_side_for(n);
  if (grid == 0) {
    throw ConfigError("number of sub-images must be a perfect square, got " + std::to_string(n));
  }
  if (tile_size < 1) throw ConfigError("tile size must be positive");
  validate(image);

  TileSet ts;
  ts.tile_size = tile_size;
  ts.grid = grid;
  ts.original = normalize_for_tiling(image, grid, tile_size);

  const auto xs = detail::axis_offsets(ts.original.width, tile_size, grid);
  const auto ys = detail::axis_offsets(ts.original.height, tile_size, grid);
  ts.tiles.reserve(static_cast<std::size_t>(n));
  ts.offsets.reserve(static_cast<std::size_t>(n));
  for (int y : ys) {
    for (int x : xs) {
      ts.offsets.push_back({x, y});
      ts.tiles.push_back(crop(ts.original, x, y, tile_size, tile_size));
    }
  }
  return ts;
}

inline TileSet split_image(const RawImage& image, const DecodeConfig& config) {
  return split_image(image, config.n, config.tile_size);
}

inline RegionMap build_region_map(const TileSet& tiles, int grid_side) {
  if (grid_side < 1) throw ConfigError("patch grid side must be >= 1");
  if (tiles.tiles.empty()) throw InputError("tile set is empty");

  RegionMap map;
  map.grid_side = grid_side;
  map.region_count = static_cast<int>(tiles.size());
  map.membership.resize(static_cast<std::size_t>(grid_side) * grid_side);

  const double w = tiles.original.width;
  const double h = tiles.original.height;
  const double c = tiles.tile_size;
  for (int i = 0; i < grid_side; ++i) {
    const double cy = (i + 0.5) * h / grid_side;
    for (int j = 0; j < grid_side; ++j) {
      const double cx = (j + 0.5) * w / grid_side;
      auto& members = map.membership[static_cast<std::size_t>(i) * grid_side + j];
      for (std::size_t k = 0; k < tiles.size(); ++k) {
        const auto& o = tiles.offsets[k];
        if (cx >= o.x && cx < o.x + c && cy >= o.y && cy < o.y + c) {
          members.push_back(static_cast<int>(k));
        }
      }
    }
  }
  return map;
}

/// Debug dump: geometry plus per-region patch counts.
inline nlohmann::json to_json(const TileSet& ts, const RegionMap* regions = nullptr) {
  nlohmann::json j;
  j["original"] = {{"width", ts.original.width}, {"height", ts.original.height},
                   {"channels", ts.original.channels}};
  j["tile_size"] = ts.tile_size;
  j["grid"] = ts.grid;
  auto& tiles = j["tiles"] = nlohmann::json::array();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    tiles.push_back({{"index", k},
                     {"x", ts.offsets[k].x},
                     {"y", ts.offsets[k].y},
                     {"width", ts.tiles[k].width},
                     {"height", ts.tiles[k].height}});
  }
  if (regions != nullptr) {
    std::vector<int> counts(static_cast<std::size_t>(regions->region_count), 0);
    std::size_t shared = 0;
    for (const auto& m : regions->membership) {
      for (int k : m) ++counts[static_cast<std::size_t>(k)];
      if (m.size() > 1) ++shared;
    }
    j["regions"] = {{"grid_side", regions->grid_side},
                    {"patches_per_region", counts},
                    {"shared_patches", shared}};
  }
  return j;
}

}  // namespace ed
