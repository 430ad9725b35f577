#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ed/backend.hpp"
#include "ed/error.hpp"

// Wire protocol, version 1: one JSON object per line in each direction.
//
// Requests                                   Success responses
//   {"type":"hello","proto_version":1,         {"type":"hello_ok","proto_version":1,
//    "model":..., "options":{...}}              "session":{vocab_size, grid_side,
//                                               layer_count, head_count, eos_token,
//                                               deterministic, model, vocab}}
//   {"type":"init_stream","kind":"original"|"sub","tile":k,
//    "image":{height,width,channels,pixels},"prompt":[ids]}
//                                              {"type":"stream_ok","stream":id,"kind":...,
//                                               "tile":k,"position":n,"output":{...}}
//   {"type":"step","stream":id,"token":t}      {"type":"step_ok","stream":id,"position":n,
//                                               "output":{...}}
//   {"type":"close","stream":id}               {"type":"closed","stream":id}
//   {"type":"close"}                           {"type":"closed"}   (ends the session)
//   {"type":"tokenize","text":"..."}           {"type":"tokens","tokens":[ids]}
//   {"type":"detokenize","tokens":[ids]}       {"type":"text","text":"..."}
//
// Failures: {"type":"error","code":C,"message":"..."} with C one of
// version_mismatch, handshake_failed, not_ready, bad_request, unknown_type, unknown_stream,
// invalid_token, invalid_input, internal. A request's optional "seq" field is
// echoed in its response.
//
// Tensors travel as {"dtype":"f32le","shape":[...],"data":base64}; image
// pixels as base64 raw bytes. "output" = {"logits":tensor[V],
// "attention":tensor[L,H,d*d]}, attention present only for original streams.

namespace ed::proto {

using json = nlohmann::json;

inline std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                static_cast<int>(size));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw InputError("base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw InputError("malformed base64 payload");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
  }
  return v;
}

inline json encode_f32(const std::vector<float>& values, json shape) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(&bytes[i * 4], &le, 4);
  }
  return {{"dtype", "f32le"}, {"shape", std::move(shape)}, {"data", base64_encode(bytes.data(), bytes.size())}};
}

inline std::vector<float> decode_f32(const json& tensor, std::size_t expected) {
  if (!tensor.is_object() || tensor.value("dtype", "") != "f32le") {
    throw ConnectionError("tensor must be an f32le object");
  }
  const auto bytes = base64_decode(tensor.at("data").get<std::string>());
  if (bytes.size() != expected * 4) {
    throw ConnectionError("tensor carries " + std::to_string(bytes.size() / 4) + " values, expected " +
                          std::to_string(expected));
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t le;
    std::memcpy(&le, &bytes[i * 4], 4);
    out[i] = std::bit_cast<float>(to_little(le));
  }
  return out;
}

inline json encode_image(const RawImage& img) {
  return {{"height", img.height}, {"width", img.width}, {"channels", img.channels},
          {"pixels", base64_encode(img.pixels.data(), img.pixels.size())}};
}

inline RawImage decode_image(const json& j) {
  RawImage img;
  img.height = j.at("height").get<int>();
  img.width = j.at("width").get<int>();
  img.channels = j.at("channels").get<int>();
  img.pixels = base64_decode(j.at("pixels").get<std::string>());
  validate(img);
  return img;
}

inline json encode_output(const StepOutput& out) {
  json j;
  j["logits"] = encode_f32(out.logits, json::array({out.logits.size()}));
  if (out.attention) {
    const auto& a = *out.attention;
    j["attention"] = encode_f32(a.data, json::array({a.layer_count, a.head_count, a.patch_count()}));
    j["attention"]["grid_side"] = a.grid_side;
  }
  return j;
}

inline StepOutput decode_output(const json& j, const SessionInfo& info) {
  StepOutput out;
  out.logits = decode_f32(j.at("logits"), static_cast<std::size_t>(info.vocab_size));
  if (j.contains("attention")) {
    const auto& t = j.at("attention");
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    const int d = t.at("grid_side").get<int>();
    if (shape.size() != 3 || d != info.grid_side || shape[2] != static_cast<std::size_t>(d) * d) {
      throw ConnectionError("attention tensor shape does not match the session's patch grid");
    }
    AttentionStack<float> a(static_cast<int>(shape[0]), static_cast<int>(shape[1]), d);
    a.data = decode_f32(t, shape[0] * shape[1] * shape[2]);
    out.attention = std::move(a);
  }
  return out;
}

inline json encode_info(const SessionInfo& s) {
  return {{"vocab_size", s.vocab_size}, {"grid_side", s.grid_side},
          {"layer_count", s.layer_count}, {"head_count", s.head_count},
          {"eos_token", s.eos_token}, {"deterministic", s.deterministic},
          {"model", s.model}, {"vocab", s.vocab}};
}

inline SessionInfo decode_info(const json& j) {
  SessionInfo s;
  s.vocab_size = j.at("vocab_size").get<int>();
  s.grid_side = j.at("grid_side").get<int>();
  s.layer_count = j.at("layer_count").get<int>();
  s.head_count = j.at("head_count").get<int>();
  s.eos_token = j.at("eos_token").get<int>();
  s.deterministic = j.value("deterministic", false);
  s.model = j.value("model", "");
  if (j.contains("vocab")) s.vocab = j.at("vocab").get<std::vector<std::string>>();
  if (s.vocab_size < 1 || s.grid_side < 1 || s.layer_count < 1 || s.head_count < 1) {
    throw ConnectionError("backend reported non-positive capabilities");
  }
  return s;
}

inline json error_message(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

/// Client-side mapping of protocol error codes onto engine error kinds.
[[noreturn]] inline void raise(const json& response) {
  const auto code = response.value("code", "internal");
  const auto msg = "backend error [" + code + "]: " + response.value("message", "");
  if (code == "unknown_stream") throw UnknownStreamError(msg);
  if (code == "invalid_token") throw InvalidTokenError(msg);
  if (code == "invalid_input") throw InputError(msg);
  throw ConnectionError(msg);
}

/// Serves the protocol on top of a Session created at "hello" time.
class Server {
 public:
  using Factory = std::function<std::unique_ptr<Session>(const json& hello)>;

  explicit Server(Factory factory) : factory_(std::move(factory)) {}

  bool finished() const { return finished_; }

  json handle(const json& request) {
    json response = dispatch(request);
    if (request.is_object() && request.contains("seq")) response["seq"] = request["seq"];
    return response;
  }

  json handle_line(const std::string& line) {
    json request;
    try {
      request = json::parse(line);
    } catch (const json::parse_error& e) {
      return error_message("bad_request", std::string("unparseable JSON: ") + e.what());
    }
    return handle(request);
  }

  /// Reads requests line by line until EOF or a session-level close.
  void run(std::istream& in, std::ostream& out) {
    std::string line;
    while (!finished_ && std::getline(in, line)) {
      if (line.empty()) continue;
      out << handle_line(line).dump() << '\n';
      out.flush();
    }
  }

 private:
  json dispatch(const json& req) {
    if (!req.is_object() || !req.contains("type") || !req["type"].is_string()) {
      return error_message("bad_request", "request must be an object with a string \"type\"");
    }
    const auto type = req["type"].get<std::string>();
    try {
      if (type == "hello") return hello(req);
      if (!session_) return error_message("not_ready", "send hello first");
      if (type == "init_stream") return init_stream(req);
      if (type == "step") return step(req);
      if (type == "close") return close(req);
      if (type == "tokenize") {
        return {{"type", "tokens"}, {"tokens", session_->tokenize(req.at("text").get<std::string>())}};
      }
      if (type == "detokenize") {
        const auto tokens = req.at("tokens").get<std::vector<int>>();
        return {{"type", "text"}, {"text", session_->detokenize(tokens)}};
      }
      return error_message("unknown_type", "unknown request type '" + type + "'");
    } catch (const json::exception& e) {
      return error_message("bad_request", e.what());
    } catch (const InvalidTokenError& e) {
      return error_message("invalid_token", e.what());
    } catch (const UnknownStreamError& e) {
      return error_message("unknown_stream", e.what());
    } catch (const InputError& e) {
      return error_message("invalid_input", e.what());
    } catch (const ConnectionError& e) {
      return error_message("bad_request", e.what());
    } catch (const std::exception& e) {
      return error_message("internal", e.what());
    }
  }

  json hello(const json& req) {
    const int version = req.value("proto_version", -1);
    if (version != kProtoVersion) {
      return error_message("version_mismatch", "server speaks proto_version " +
                                                   std::to_string(kProtoVersion) + ", got " +
                                                   std::to_string(version));
    }
    if (session_) return error_message("bad_request", "session already open");
    try {
      session_ = factory_(req);
    } catch (const std::exception& e) {
      return error_message("handshake_failed", e.what());
    }
    return {{"type", "hello_ok"}, {"proto_version", kProtoVersion}, {"session", encode_info(session_->info())}};
  }

  json init_stream(const json& req) {
    const auto kind_name = req.at("kind").get<std::string>();
    if (kind_name != "original" && kind_name != "sub") {
      return error_message("bad_request", "kind must be original or sub");
    }
    const auto kind = kind_name == "original" ? StreamKind::Original : StreamKind::Sub;
    const int tile = req.value("tile", -1);
    const RawImage image = decode_image(req.at("image"));
    const auto prompt = req.at("prompt").get<std::vector<int>>();
    auto opened = session_->init_stream(image, prompt, kind, tile);
    streams_[opened.handle.id] = opened.handle;
    return {{"type", "stream_ok"},
            {"stream", opened.handle.id},
            {"kind", kind_name},
            {"tile", opened.handle.tile},
            {"position", opened.handle.position},
            {"output", encode_output(opened.output)}};
  }

  json step(const json& req) {
    const auto id = req.at("stream").get<std::uint64_t>();
    auto it = streams_.find(id);
    if (it == streams_.end()) return error_message("unknown_stream", "unknown or closed stream " + std::to_string(id));
    const int token = req.at("token").get<int>();
    auto out = session_->step(it->second, token);
    return {{"type", "step_ok"},
            {"stream", id},
            {"position", it->second.position},
            {"output", encode_output(out)}};
  }

  json close(const json& req) {
    if (!req.contains("stream")) {
      for (const auto& [id, handle] : streams_) session_->close_stream(handle);
      streams_.clear();
      finished_ = true;
      return {{"type", "closed"}};
    }
    const auto id = req.at("stream").get<std::uint64_t>();
    auto it = streams_.find(id);
    if (it == streams_.end()) return error_message("unknown_stream", "unknown or closed stream " + std::to_string(id));
    session_->close_stream(it->second);
    streams_.erase(it);
    return {{"type", "closed"}, {"stream", id}};
  }

  Factory factory_;
  std::unique_ptr<Session> session_;
  std::map<std::uint64_t, StreamHandle> streams_;
  bool finished_ = false;
};

}  // namespace ed::proto
