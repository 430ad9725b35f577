#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ed/attention.hpp"
#include "ed/backend.hpp"
#include "ed/config.hpp"
#include "ed/ensemble.hpp"
#include "ed/error.hpp"
#include "ed/sampling.hpp"
#include "ed/tiling.hpp"

namespace ed {

/// Per-token record. `forwards` counts the backend calls whose outputs feed
/// this token's distribution; catch-up calls for a FastED sub-stream that
/// fell behind are reported separately as `replays`.
struct StepTrace {
  std::size_t step = 0;
  ScoreVector scores;    // empty in Regular mode
  WeightVector weights;  // empty in Regular mode
  int best_tile = -1;    // k*: highest-weight sub-image, -1 in Regular mode
  std::size_t mask_size = 0;
  int token = 0;
  int forwards = 0;
  int replays = 0;

  bool operator==(const StepTrace&) const = default;
};

enum class GenerationStatus { Ok, Error };

struct GenerationResult {
  std::vector<int> tokens;
  std::string text;
  std::vector<StepTrace> traces;
  std::vector<double> token_ms;  // wall-clock time per generated token
  GenerationStatus status = GenerationStatus::Ok;
  std::optional<ErrorKind> error_kind;
  std::string error;

  bool ok() const { return status == GenerationStatus::Ok; }
  long total_forwards() const {
    long n = 0;
    for (const auto& t : traces) n += t.forwards;
    return n;
  }
  long total_replays() const {
    long n = 0;
    for (const auto& t : traces) n += t.replays;
    return n;
  }
};

inline nlohmann::json to_json(const StepTrace& t) {
  return {{"t", t.step},       {"scores", t.scores},       {"weights", t.weights},
          {"k_star", t.best_tile}, {"mask_size", t.mask_size}, {"token", t.token},
          {"forwards", t.forwards}, {"replays", t.replays}};
}

/// One JSON object per line; timing is left out so traces stay reproducible.
inline void write_trace(std::ostream& out, const GenerationResult& result) {
  for (const auto& t : result.traces) out << to_json(t).dump() << '\n';
}

namespace detail {

// Closes every stream it tracks when the generation ends, however it ends.
class StreamGuard {
 public:
  explicit StreamGuard(Session& s) : session_(s) {}
  ~StreamGuard() {
    for (auto* h : handles_) {
      if (h != nullptr) {
        try {
          session_.close_stream(*h);
        } catch (...) {
        }
      }
    }
  }
  void track(StreamHandle* h) { handles_.push_back(h); }

 private:
  Session& session_;
  std::vector<StreamHandle*> handles_;
};

struct LiveStream {
  bool open = false;
  StreamHandle handle;
  StepOutput latest;
  std::size_t consumed = 0;  // generated tokens already fed
};

inline LogitVector widen(const std::vector<float>& v) { return LogitVector(v.begin(), v.end()); }

}  // namespace detail

/// Autoregressive decoding with Ensemble Decoding, FastED or plain sampling.
///
/// Every mode conditions the original stream on the tiling-normalized image
/// so that the degenerate settings of ED coincide with Regular decoding.
/// All live streams are fed the same sampled token. Backend failures after
/// the first token end the generation early with an error status and the
/// tokens produced so far.
inline GenerationResult generate(Session& session, const RawImage& image, std::span<const int> prompt,
                                 const DecodeConfig& config) {
  validate(config);
  validate(image);
  if (prompt.empty()) throw InputError("prompt is empty");

  const SessionInfo& info = session.info();
  const bool ensemble = config.mode != Mode::Regular;
  const bool needs_attention = ensemble;
  if (needs_attention) {
    if (config.top_layers > info.layer_count) {
      throw ConfigError("k = " + std::to_string(config.top_layers) + " exceeds the backend's " +
                        std::to_string(info.layer_count) + " layers");
    }
    if (config.top_heads > info.head_count) {
      throw ConfigError("h = " + std::to_string(config.top_heads) + " exceeds the backend's " +
                        std::to_string(info.head_count) + " heads");
    }
  }

  GenerationResult result;
  if (config.max_tokens == 0) return result;

  const TileSet tiles = split_image(image, config);
  const RegionMap regions = build_region_map(tiles, info.grid_side);
  const std::size_t n = tiles.size();

  Rng rng(config.seed);
  detail::LiveStream original;
  std::vector<detail::LiveStream> subs(n);
  // declared after the streams so it runs first on the way out
  detail::StreamGuard guard(session);

  auto open = [&](detail::LiveStream& s, const RawImage& img, StreamKind kind, int tile) {
    auto opened = session.init_stream(img, prompt, kind, tile);
    s.open = true;
    s.handle = opened.handle;
    s.latest = std::move(opened.output);
    s.consumed = 0;
    guard.track(&s.handle);
  };

  int pending_forwards = 0;
  auto step_start = std::chrono::steady_clock::now();
  open(original, tiles.original, StreamKind::Original, -1);
  ++pending_forwards;
  if (config.mode == Mode::ED) {
    for (std::size_t k = 0; k < n; ++k) {
      open(subs[k], tiles.tiles[k], StreamKind::Sub, static_cast<int>(k));
      ++pending_forwards;
    }
  }

  try {
    for (std::size_t t = 0; t < static_cast<std::size_t>(config.max_tokens); ++t) {
      StepTrace trace;
      trace.step = t;
      trace.forwards = pending_forwards;
      pending_forwards = 0;

      const LogitVector orig_logits = detail::widen(original.latest.logits);
      ProbVector probs;

      if (ensemble) {
        if (!original.latest.attention) {
          throw ConnectionError("backend returned no attention for the original-image stream");
        }
        const RefinedAttention refined =
            refine_attention(*original.latest.attention, config.top_layers, config.top_heads);
        trace.scores = aggregate_regions(refined, regions);
        trace.weights = config.uniform_weights ? uniform_weights(n)
                                               : attention_weights(trace.scores, config.tau);
        trace.best_tile = static_cast<int>(argmax(trace.scores));
      }

      if (config.mode == Mode::ED) {
        std::vector<LogitVector> sub_logits;
        sub_logits.reserve(n);
        for (const auto& s : subs) sub_logits.push_back(detail::widen(s.latest.logits));
        auto step = ed_step(orig_logits, sub_logits, trace.weights, config.alpha, config.beta,
                            config.weighted_lhs, config.renormalize);
        trace.mask_size = step.mask.count();
        probs = std::move(step.probs);
        if (!config.renormalize) {
          // Drawing from the zeroed vector needs its mass rescaled anyway, so
          // the token choice is the same either way.
          double total = 0.0;
          for (double p : probs) total += p;
          if (total > 0.0) {
            for (double& p : probs) p /= total;
          } else {
            probs = apply_mask(probs, step.mask);
          }
        }
      } else if (config.mode == Mode::FastED) {
        auto& best = subs[static_cast<std::size_t>(trace.best_tile)];
        if (!best.open) {
          open(best, tiles.tiles[static_cast<std::size_t>(trace.best_tile)], StreamKind::Sub,
               trace.best_tile);
          if (t == 0) ++trace.forwards;
          else ++trace.replays;
        }
        while (best.consumed < t) {
          best.latest = session.step(best.handle, result.tokens[best.consumed]);
          ++best.consumed;
          if (best.consumed == t) ++trace.forwards;
          else ++trace.replays;
        }
        probs = fast_ed(orig_logits, detail::widen(best.latest.logits), config.alpha);
        trace.mask_size = probs.size();
      } else {
        probs = softmax(orig_logits);
        trace.mask_size = probs.size();
      }

      const int token = static_cast<int>(sample(probs, config.sampling, rng));
      trace.token = token;
      result.tokens.push_back(token);
      result.traces.push_back(std::move(trace));

      const bool done = token == info.eos_token || t + 1 == static_cast<std::size_t>(config.max_tokens);
      if (!done) {
        original.latest = session.step(original.handle, token);
        ++original.consumed;
        ++pending_forwards;
        if (config.mode == Mode::ED) {
          for (auto& s : subs) {
            s.latest = session.step(s.handle, token);
            ++s.consumed;
            ++pending_forwards;
          }
        }
      }

      const auto now = std::chrono::steady_clock::now();
      result.token_ms.push_back(std::chrono::duration<double, std::milli>(now - step_start).count());
      step_start = now;
      if (done) break;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    result.status = GenerationStatus::Error;
    result.error_kind = e.kind();
    result.error = e.what();
    while (result.token_ms.size() < result.tokens.size()) result.token_ms.push_back(0.0);
  }

  try {
    result.text = session.detokenize(result.tokens);
  } catch (const Error& e) {
    if (result.ok()) {
      result.status = GenerationStatus::Error;
      result.error_kind = e.kind();
      result.error = e.what();
    }
  }
  return result;
}

}  // namespace ed
