#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ed/attention.hpp"
#include "ed/image.hpp"

namespace ed {

inline constexpr int kProtoVersion = 1;

/// Capabilities negotiated when a session opens.
struct SessionInfo {
  int vocab_size = 0;
  int grid_side = 0;
  int layer_count = 0;
  int head_count = 0;
  int eos_token = 0;
  bool deterministic = false;
  std::string model;
  std::vector<std::string> vocab;  // optional surface forms, may be empty

  bool operator==(const SessionInfo&) const = default;
};

enum class StreamKind { Original, Sub };

inline std::string_view to_string(StreamKind k) { return k == StreamKind::Original ? "original" : "sub"; }

/// One conditioning context (image + prompt + generated prefix) owned by the
/// backend. `position` counts consumed tokens, prompt included.
struct StreamHandle {
  std::uint64_t id = 0;
  StreamKind kind = StreamKind::Original;
  int tile = -1;  // sub-image index for Sub streams
  std::size_t position = 0;
};

/// Next-token logits after the stream's latest token. Attention is only
/// returned for the original-image stream.
struct StepOutput {
  std::vector<float> logits;
  std::optional<AttentionStack<float>> attention;

  bool operator==(const StepOutput&) const = default;
};

struct OpenedStream {
  StreamHandle handle;
  StepOutput output;  // prediction for the first generated token
};

/// A live backend session. Calls on one stream must not overlap; distinct
/// streams may be driven from different threads when the implementation
/// allows it.
class Session {
 public:
  virtual ~Session() = default;

  virtual const SessionInfo& info() const = 0;

  /// Conditions a new stream on (image, prompt) and runs the prompt forward.
  virtual OpenedStream init_stream(const RawImage& image, std::span<const int> prompt,
                                   StreamKind kind, int tile = -1) = 0;

  /// Appends `token` and returns the prediction for the following position.
  virtual StepOutput step(StreamHandle& stream, int token) = 0;

  virtual void close_stream(const StreamHandle& stream) = 0;

  virtual std::vector<int> tokenize(std::string_view text) = 0;
  virtual std::string detokenize(std::span<const int> tokens) = 0;
};

}  // namespace ed
