#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "ed/error.hpp"
#include "ed/tiling.hpp"

namespace ed {

/// Attention rows from the current query position over the image-patch keys,
/// for every layer and head: element (layer, head, patch) with patch in
/// [0, d*d) row-major over the patch grid.
template <typename T>
struct AttentionStack {
  int layer_count = 0;
  int head_count = 0;
  int grid_side = 0;
  std::vector<T> data;

  AttentionStack() = default;
  AttentionStack(int layers, int heads, int d)
      : layer_count(layers), head_count(heads), grid_side(d),
        data(static_cast<std::size_t>(layers) * heads * d * d, T{}) {}

  std::size_t patch_count() const { return static_cast<std::size_t>(grid_side) * grid_side; }

  T& at(int layer, int head, std::size_t patch) {
    return data[(static_cast<std::size_t>(layer) * head_count + head) * patch_count() + patch];
  }
  T at(int layer, int head, std::size_t patch) const {
    return data[(static_cast<std::size_t>(layer) * head_count + head) * patch_count() + patch];
  }

  std::span<const T> row(int layer, int head) const {
    return {data.data() + (static_cast<std::size_t>(layer) * head_count + head) * patch_count(),
            patch_count()};
  }

  bool operator==(const AttentionStack&) const = default;
};

/// Refined d x d attention map, row-major.
struct RefinedAttention {
  int grid_side = 0;
  std::vector<double> map;

  double at(int i, int j) const { return map[static_cast<std::size_t>(i) * grid_side + j]; }
};

using ScoreVector = std::vector<double>;
using WeightVector = std::vector<double>;

template <typename T>
void validate(const AttentionStack<T>& stack) {
  if (stack.layer_count < 1 || stack.head_count < 1 || stack.grid_side < 1) {
    throw InputError("attention stack needs at least one layer, head and patch");
  }
  if (stack.data.size() != static_cast<std::size_t>(stack.layer_count) * stack.head_count *
                               stack.patch_count()) {
    throw InputError("attention stack size does not match its shape");
  }
  for (T v : stack.data) {
    if (!(v >= T{0}) || !std::isfinite(static_cast<double>(v))) {
      throw InputError("attention entries must be finite and non-negative");
    }
  }
}

namespace detail {

// Indices of the `keep` largest values; ties go to the lower index.
inline std::vector<int> top_indices(std::span<const double> values, int keep) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](int a, int b) {
    const double va = values[static_cast<std::size_t>(a)];
    const double vb = values[static_cast<std::size_t>(b)];
    return va > vb || (va == vb && a < b);
  });
  idx.resize(static_cast<std::size_t>(keep));
  return idx;
}

}  // namespace detail

/// Collapses a multi-layer multi-head stack into one d x d map.
///
/// Layers are ranked by their mean over all heads and patches and the top
/// `top_layers` are averaged elementwise. Heads of that averaged layer are
/// then ranked by their mean over patches and the top `top_heads` averaged.
template <typename T>
RefinedAttention refine_attention(const AttentionStack<T>& stack, int top_layers, int top_heads) {
  validate(stack);
  if (top_layers < 1 || top_layers > stack.layer_count) {
    throw ConfigError("k must lie in [1, " + std::to_string(stack.layer_count) + "], got " +
                      std::to_string(top_layers));
  }
  if (top_heads < 1 || top_heads > stack.head_count) {
    throw ConfigError("h must lie in [1, " + std::to_string(stack.head_count) + "], got " +
                      std::to_string(top_heads));
  }

  const std::size_t patches = stack.patch_count();
  const std::size_t heads = static_cast<std::size_t>(stack.head_count);

  std::vector<double> layer_mean(static_cast<std::size_t>(stack.layer_count), 0.0);
  for (int l = 0; l < stack.layer_count; ++l) {
    double sum = 0.0;
    for (int h = 0; h < stack.head_count; ++h) {
      for (T v : stack.row(l, h)) sum += static_cast<double>(v);
    }
    layer_mean[static_cast<std::size_t>(l)] = sum / static_cast<double>(heads * patches);
  }
  auto layers = detail::top_indices(layer_mean, top_layers);
  std::sort(layers.begin(), layers.end());

  // Representative layer: heads x patches.
  std::vector<double> merged(heads * patches, 0.0);
  for (int l : layers) {
    for (int h = 0; h < stack.head_count; ++h) {
      auto row = stack.row(l, h);
      double* out = merged.data() + static_cast<std::size_t>(h) * patches;
      for (std::size_t p = 0; p < patches; ++p) out[p] += static_cast<double>(row[p]);
    }
  }
  for (double& v : merged) v /= top_layers;

  std::vector<double> head_mean(heads, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    double sum = 0.0;
    for (std::size_t p = 0; p < patches; ++p) sum += merged[h * patches + p];
    head_mean[h] = sum / static_cast<double>(patches);
  }
  auto chosen = detail::top_indices(head_mean, top_heads);
  std::sort(chosen.begin(), chosen.end());

  RefinedAttention out{stack.grid_side, std::vector<double>(patches, 0.0)};
  for (int h : chosen) {
    const double* row = merged.data() + static_cast<std::size_t>(h) * patches;
    for (std::size_t p = 0; p < patches; ++p) out.map[p] += row[p];
  }
  for (double& v : out.map) v /= top_heads;
  return out;
}

/// Sums the refined map over each tile's patch region. Patches shared by
/// several tiles count toward each of them.
inline ScoreVector aggregate_regions(const RefinedAttention& refined, const RegionMap& regions) {
  if (refined.grid_side != regions.grid_side) {
    throw ConfigError("attention grid " + std::to_string(refined.grid_side) +
                      " does not match region grid " + std::to_string(regions.grid_side));
  }
  ScoreVector s(static_cast<std::size_t>(regions.region_count), 0.0);
  for (std::size_t p = 0; p < regions.membership.size(); ++p) {
    for (int k : regions.membership[p]) s[static_cast<std::size_t>(k)] += refined.map[p];
  }
  return s;
}

/// Temperature softmax over region scores, evaluated with max subtraction.
inline WeightVector attention_weights(std::span<const double> scores, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive and finite");
  if (scores.empty()) throw InputError("score vector is empty");
  for (double v : scores) {
    if (!std::isfinite(v)) throw InputError("score vector has a non-finite entry");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  WeightVector f(scores.size());
  double total = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    f[k] = std::exp((scores[k] - top) / tau);
    total += f[k];
  }
  for (double& v : f) v /= total;
  return f;
}

inline WeightVector uniform_weights(std::size_t n) {
  return WeightVector(n, 1.0 / static_cast<double>(n));
}

/// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace ed
