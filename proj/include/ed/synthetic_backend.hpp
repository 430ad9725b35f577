#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "ed/backend.hpp"
#include "ed/error.hpp"
#include "ed/image.hpp"

namespace ed {

// Deterministic stand-in for a vision-language model.
//
// Per stream image the backend computes a d x d patch brightness grid
// b[p] in [0, 1]: the mean luminance over pixel rows
// [floor(i*H/d), max(floor(i*H/d) + 1, floor((i+1)*H/d))) and the same
// column rule. For a vocabulary of V tokens the visual feature of token v is
// phi[v] = mean of b[p] over patches with p mod V == v (b[v mod d^2] when
// d^2 < V).
//
// With `position` the number of consumed tokens and `hist` a splitmix64 fold
// of (seed, tokens...):
//   logit[v] = 4 (phi[v] - mean(phi)) + 2 (2 u(hist, v) - 1)
//   logit[eos] += min(3, -3 + 0.1 * position)
//   attention(l, h)[p] = w[p] / sum(w),  w[p] = (b[p] + 1/256)^g,
//   g = 1 + (l + 2h + position) mod 4
// Every row sums to one, so layer and head means agree up to float32
// rounding and the top-K/top-H ranking is decided by that rounding.
// where u(.) maps a splitmix64 hash to [0, 1). Logits and attention are
// rounded to float32. The stream kind plays no role, so identical images
// yield identical logits on every stream.

struct SyntheticOptions {
  std::uint64_t seed = 0;
  int grid_side = 24;
  int layer_count = 4;
  int head_count = 4;
  std::size_t max_prompt = 4096;
};

inline const std::vector<std::string>& synthetic_vocabulary() {
  static const std::vector<std::string> vocab = {
      "</s>", "<unk>", "yes", "no", "there", "is", "a", "the", "in", "on", "of", "and",
      "with", "image", "this", "it", "are", "two", "some", "next", "to", "near", "person",
      "dog", "cat", "car", "bicycle", "motorcycle", "bus", "truck", "bird", "horse",
      "sheep", "cow", "chair", "couch", "bed", "dining table", "tv", "laptop", "cup",
      "bottle", "bowl", "banana", "apple", "pizza", "cake", "clock", "book", "umbrella",
      "boat", "train", "kite", "skateboard", "surfboard", "bench", "traffic light",
      "stop sign", "zebra", "giraffe", "elephant", "sink", "oven", "."};
  return vocab;
}

namespace synth {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline double unit(std::uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

inline std::uint64_t history_seed(std::uint64_t seed) { return mix(seed, 0x5eedULL); }

inline std::vector<double> patch_brightness(const RawImage& img, int d) {
  std::vector<double> b(static_cast<std::size_t>(d) * d);
  auto span_of = [d](int i, int dim) {
    const int lo = static_cast<int>(static_cast<long long>(i) * dim / d);
    const int hi = std::max(lo + 1, static_cast<int>(static_cast<long long>(i + 1) * dim / d));
    return std::pair{lo, std::min(hi, dim)};
  };
  for (int i = 0; i < d; ++i) {
    const auto [y0, y1] = span_of(i, img.height);
    for (int j = 0; j < d; ++j) {
      const auto [x0, x1] = span_of(j, img.width);
      b[static_cast<std::size_t>(i) * d + j] = mean_brightness(img, x0, y0, x1, y1);
    }
  }
  return b;
}

inline std::vector<double> token_features(const std::vector<double>& brightness, int vocab) {
  std::vector<double> phi(static_cast<std::size_t>(vocab), 0.0);
  const std::size_t patches = brightness.size();
  if (patches >= static_cast<std::size_t>(vocab)) {
    std::vector<int> counts(static_cast<std::size_t>(vocab), 0);
    for (std::size_t p = 0; p < patches; ++p) {
      phi[p % vocab] += brightness[p];
      ++counts[p % vocab];
    }
    for (std::size_t v = 0; v < phi.size(); ++v) phi[v] /= counts[v];
  } else {
    for (std::size_t v = 0; v < phi.size(); ++v) phi[v] = brightness[v % patches];
  }
  return phi;
}

inline StepOutput forward(const std::vector<double>& brightness, const std::vector<double>& phi,
                          std::uint64_t hist, std::size_t position, int eos,
                          const SyntheticOptions& opt, bool with_attention) {
  StepOutput out;
  double mean_phi = 0.0;
  for (double v : phi) mean_phi += v;
  mean_phi /= static_cast<double>(phi.size());

  out.logits.resize(phi.size());
  for (std::size_t v = 0; v < phi.size(); ++v) {
    double z = 4.0 * (phi[v] - mean_phi) + 2.0 * (2.0 * unit(mix(hist, v)) - 1.0);
    if (static_cast<int>(v) == eos) z += std::min(3.0, -3.0 + 0.1 * static_cast<double>(position));
    out.logits[v] = static_cast<float>(z);
  }

  if (with_attention) {
    AttentionStack<float> att(opt.layer_count, opt.head_count, opt.grid_side);
    std::vector<double> w(brightness.size());
    for (int l = 0; l < opt.layer_count; ++l) {
      for (int h = 0; h < opt.head_count; ++h) {
        const int power = 1 + static_cast<int>((static_cast<std::size_t>(l + 2 * h) + position) % 4);
        double total = 0.0;
        for (std::size_t p = 0; p < brightness.size(); ++p) {
          const double base = brightness[p] + 1.0 / 256.0;
          double v = base;
          for (int e = 1; e < power; ++e) v *= base;
          w[p] = v;
          total += v;
        }
        for (std::size_t p = 0; p < brightness.size(); ++p) {
          att.at(l, h, p) = static_cast<float>(w[p] / total);
        }
      }
    }
    out.attention = std::move(att);
  }
  return out;
}

}  // namespace synth

/// Stateless evaluation of the synthetic model on a full token sequence
/// (prompt plus generated tokens). Streams compute the same thing
/// incrementally.
inline StepOutput synth_forward(const RawImage& image, std::span<const int> tokens,
                                const SyntheticOptions& opt = {}, bool with_attention = true) {
  validate(image);
  const int vocab = static_cast<int>(synthetic_vocabulary().size());
  const auto b = synth::patch_brightness(image, opt.grid_side);
  const auto phi = synth::token_features(b, vocab);
  std::uint64_t hist = synth::history_seed(opt.seed);
  for (int t : tokens) hist = synth::mix(hist, static_cast<std::uint64_t>(t));
  return synth::forward(b, phi, hist, tokens.size(), 0, opt, with_attention);
}

class SyntheticSession final : public Session {
 public:
  explicit SyntheticSession(SyntheticOptions opt = {}) : opt_(opt) {
    if (opt_.grid_side < 1 || opt_.layer_count < 1 || opt_.head_count < 1) {
      throw ConnectionError("synthetic backend options must be positive");
    }
    info_.vocab_size = static_cast<int>(synthetic_vocabulary().size());
    info_.grid_side = opt_.grid_side;
    info_.layer_count = opt_.layer_count;
    info_.head_count = opt_.head_count;
    info_.eos_token = 0;
    info_.deterministic = true;
    info_.model = "synthetic";
    info_.vocab = synthetic_vocabulary();
  }

  /// Accepts {"seed", "grid_side", "layers", "heads"}; anything else is a
  /// handshake error.
  static SyntheticOptions parse_options(const nlohmann::json& j) {
    SyntheticOptions opt;
    if (j.is_null()) return opt;
    if (!j.is_object()) throw ConnectionError("backend options must be a JSON object");
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "seed") opt.seed = value.get<std::uint64_t>();
        else if (key == "grid_side") opt.grid_side = value.get<int>();
        else if (key == "layers") opt.layer_count = value.get<int>();
        else if (key == "heads") opt.head_count = value.get<int>();
        else throw ConnectionError("unknown synthetic backend option '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConnectionError(std::string("bad synthetic backend option: ") + e.what());
    }
    return opt;
  }

  const SessionInfo& info() const override { return info_; }

  OpenedStream init_stream(const RawImage& image, std::span<const int> prompt, StreamKind kind,
                           int tile) override {
    validate(image);
    if (prompt.empty()) throw InputError("prompt is empty");
    if (prompt.size() > opt_.max_prompt) throw InputError("prompt exceeds the backend's context");
    if (kind == StreamKind::Sub && tile < 0) throw InputError("sub-image stream needs a tile index");
    for (int t : prompt) check_token(t);

    State st;
    st.brightness = synth::patch_brightness(image, opt_.grid_side);
    st.phi = synth::token_features(st.brightness, info_.vocab_size);
    st.hist = synth::history_seed(opt_.seed);
    for (int t : prompt) st.hist = synth::mix(st.hist, static_cast<std::uint64_t>(t));
    st.position = prompt.size();
    st.kind = kind;

    OpenedStream opened;
    opened.output = synth::forward(st.brightness, st.phi, st.hist, st.position, info_.eos_token, opt_,
                                   kind == StreamKind::Original);
    std::lock_guard lock(mu_);
    opened.handle = {next_id_++, kind, kind == StreamKind::Sub ? tile : -1, st.position};
    streams_.emplace(opened.handle.id, std::move(st));
    return opened;
  }

  StepOutput step(StreamHandle& stream, int token) override {
    check_token(token);
    State* st = nullptr;
    {
      std::lock_guard lock(mu_);
      auto it = streams_.find(stream.id);
      if (it == streams_.end()) throw UnknownStreamError("unknown or closed stream " + std::to_string(stream.id));
      st = &it->second;
    }
    st->hist = synth::mix(st->hist, static_cast<std::uint64_t>(token));
    ++st->position;
    stream.position = st->position;
    return synth::forward(st->brightness, st->phi, st->hist, st->position, info_.eos_token, opt_,
                          st->kind == StreamKind::Original);
  }

  void close_stream(const StreamHandle& stream) override {
    std::lock_guard lock(mu_);
    if (streams_.erase(stream.id) == 0) {
      throw UnknownStreamError("unknown or closed stream " + std::to_string(stream.id));
    }
  }

  std::vector<int> tokenize(std::string_view text) override {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    };
    for (char ch : text) {
      const auto c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        cur.push_back(static_cast<char>(std::tolower(c)));
      } else {
        flush();
        if (ch == '.') words.emplace_back(".");
      }
    }
    flush();

    const auto& vocab = info_.vocab;
    auto lookup = [&](const std::string& w) -> int {
      auto it = std::find(vocab.begin(), vocab.end(), w);
      return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
    };
    std::vector<int> ids;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i + 1 < words.size()) {
        if (int id = lookup(words[i] + " " + words[i + 1]); id >= 0) {
          ids.push_back(id);
          ++i;
          continue;
        }
      }
      const int id = lookup(words[i]);
      ids.push_back(id >= 0 ? id : 1);
    }
    return ids;
  }

  std::string detokenize(std::span<const int> tokens) override {
    std::string out;
    for (int t : tokens) {
      check_token(t);
      if (t == info_.eos_token) continue;
      const auto& w = info_.vocab[static_cast<std::size_t>(t)];
      if (!out.empty() && w != ".") out.push_back(' ');
      out += w;
    }
    return out;
  }

 private:
  struct State {
    std::vector<double> brightness;
    std::vector<double> phi;
    std::uint64_t hist = 0;
    std::size_t position = 0;
    StreamKind kind = StreamKind::Original;
  };

  void check_token(int t) const {
    if (t < 0 || t >= info_.vocab_size) {
      throw InvalidTokenError("token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(info_.vocab_size));
    }
  }

  SyntheticOptions opt_;
  SessionInfo info_;
  std::mutex mu_;
  std::map<std::uint64_t, State> streams_;
  std::uint64_t next_id_ = 1;
};

}  // namespace ed
