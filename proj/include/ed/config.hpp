#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ed/error.hpp"

namespace ed {

enum class Mode { ED, FastED, Regular };
enum class Sampling { Greedy, Multinomial };

/// Softmax temperature for the attention-guided weights, by answer length.
inline constexpr double kShortAnswerTau = 1e-2;
inline constexpr double kLongAnswerTau = 1e-4;

struct DecodeConfig {
  int n = 4;              // sub-images; must be a perfect square
  int tile_size = 336;    // sub-image side c in pixels
  double alpha = 0.5;     // weight of the sub-image ensemble against the original
  double beta = 0.5;      // plausibility truncation strength
  double tau = kShortAnswerTau;
  int top_layers = 3;     // K
  int top_heads = 3;      // H
  Mode mode = Mode::ED;
  Sampling sampling = Sampling::Multinomial;
  std::uint64_t seed = 0;
  int max_tokens = 64;
  bool weighted_lhs = false;    // apply f to both sides of the plausibility test
  bool renormalize = true;      // rescale surviving mass after masking
  bool uniform_weights = false; // f = 1/N instead of attention-guided weights

  bool operator==(const DecodeConfig&) const = default;
};

/// Side length of the tile grid, or 0 when n is not a positive perfect square.
inline int grid_side_for(int n) {
  if (n < 1) return 0;
  const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  return root * root == n ? root : 0;
}

inline void validate(const DecodeConfig& c) {
  if (grid_side_for(c.n) == 0) {
    throw ConfigError("n must be a positive perfect square, got " + std::to_string(c.n));
  }
  if (c.tile_size < 1) throw ConfigError("tile size must be positive");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(c.alpha));
  }
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) {
    throw ConfigError("beta must lie in [0, 1], got " + std::to_string(c.beta));
  }
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) {
    throw ConfigError("tau must be a positive finite number");
  }
  if (c.top_layers < 1) throw ConfigError("k (top layers) must be >= 1");
  if (c.top_heads < 1) throw ConfigError("h (top heads) must be >= 1");
  if (c.max_tokens < 0) throw ConfigError("max tokens must be >= 0");
}

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::ED: return "ed";
    case Mode::FastED: return "fasted";
    case Mode::Regular: return "regular";
  }
  return "?";
}

inline std::string_view to_string(Sampling s) {
  return s == Sampling::Greedy ? "greedy" : "multinomial";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "ed") return Mode::ED;
  if (s == "fasted") return Mode::FastED;
  if (s == "regular") return Mode::Regular;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected ed, fasted or regular)");
}

inline Sampling parse_sampling(std::string_view s) {
  if (s == "greedy") return Sampling::Greedy;
  if (s == "multinomial") return Sampling::Multinomial;
  throw ConfigError("unknown sampling '" + std::string(s) + "' (expected greedy or multinomial)");
}

// Config files and run manifests use these keys.
inline nlohmann::json to_json(const DecodeConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"n", c.n},
      {"tile_size", c.tile_size},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"tau", c.tau},
      {"k", c.top_layers},
      {"h", c.top_heads},
      {"sampling", to_string(c.sampling)},
      {"seed", c.seed},
      {"max_tokens", c.max_tokens},
      {"weighted_lhs", c.weighted_lhs},
      {"renormalize", c.renormalize},
      {"uniform_weights", c.uniform_weights},
  };
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline DecodeConfig merge_config(DecodeConfig base, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") base.mode = parse_mode(value.get<std::string>());
      else if (key == "n") base.n = value.get<int>();
      else if (key == "tile_size") base.tile_size = value.get<int>();
      else if (key == "alpha") base.alpha = value.get<double>();
      else if (key == "beta") base.beta = value.get<double>();
      else if (key == "tau") base.tau = value.get<double>();
      else if (key == "k") base.top_layers = value.get<int>();
      else if (key == "h") base.top_heads = value.get<int>();
      else if (key == "sampling") base.sampling = parse_sampling(value.get<std::string>());
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "max_tokens") base.max_tokens = value.get<int>();
      else if (key == "weighted_lhs") base.weighted_lhs = value.get<bool>();
      else if (key == "renormalize") base.renormalize = value.get<bool>();
      else if (key == "uniform_weights") base.uniform_weights = value.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return base;
}

}  // namespace ed
