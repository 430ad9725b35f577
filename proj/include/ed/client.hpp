#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "ed/backend.hpp"
#include "ed/protocol.hpp"

namespace ed {

/// Carries one request line to a protocol server and returns its reply line.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string exchange(const std::string& line) = 0;
};

/// In-process transport around a proto::Server; exercises the full wire
/// encoding without a child process.
class LoopbackTransport final : public Transport {
 public:
  explicit LoopbackTransport(proto::Server::Factory factory) : server_(std::move(factory)) {}

  std::string exchange(const std::string& line) override { return server_.handle_line(line).dump(); }

 private:
  proto::Server server_;
};

/// Session that speaks the wire protocol over a Transport.
class ProtocolSession final : public Session {
 public:
  ProtocolSession(std::unique_ptr<Transport> transport, const std::string& model,
                  const nlohmann::json& options)
      : transport_(std::move(transport)) {
    nlohmann::json hello = {{"type", "hello"}, {"proto_version", kProtoVersion}, {"model", model},
                            {"options", options.is_null() ? nlohmann::json::object() : options}};
    const auto resp = request(hello, "hello_ok");
    if (resp.value("proto_version", -1) != kProtoVersion) {
      throw ConnectionError("backend answered with an unsupported proto_version");
    }
    try {
      info_ = proto::decode_info(resp.at("session"));
    } catch (const nlohmann::json::exception& e) {
      throw ConnectionError(std::string("malformed hello response: ") + e.what());
    }
  }

  ~ProtocolSession() override {
    try {
      std::lock_guard lock(mu_);
      transport_->exchange(nlohmann::json{{"type", "close"}}.dump());
    } catch (...) {
    }
  }

  const SessionInfo& info() const override { return info_; }

  OpenedStream init_stream(const RawImage& image, std::span<const int> prompt, StreamKind kind,
                           int tile) override {
    nlohmann::json req = {{"type", "init_stream"},
                          {"kind", to_string(kind)},
                          {"tile", tile},
                          {"image", proto::encode_image(image)},
                          {"prompt", std::vector<int>(prompt.begin(), prompt.end())}};
    const auto resp = request(req, "stream_ok");
    OpenedStream opened;
    try {
      opened.handle.id = resp.at("stream").get<std::uint64_t>();
      opened.handle.kind = kind;
      opened.handle.tile = resp.value("tile", tile);
      opened.handle.position = resp.at("position").get<std::size_t>();
      opened.output = proto::decode_output(resp.at("output"), info_);
    } catch (const nlohmann::json::exception& e) {
      throw ConnectionError(std::string("malformed stream_ok response: ") + e.what());
    }
    check_output(opened.output, kind);
    return opened;
  }

  StepOutput step(StreamHandle& stream, int token) override {
    const auto resp = request({{"type", "step"}, {"stream", stream.id}, {"token", token}}, "step_ok");
    StepOutput out;
    try {
      const auto position = resp.at("position").get<std::size_t>();
      if (position <= stream.position) throw ConnectionError("stream position did not advance");
      stream.position = position;
      out = proto::decode_output(resp.at("output"), info_);
    } catch (const nlohmann::json::exception& e) {
      throw ConnectionError(std::string("malformed step_ok response: ") + e.what());
    }
    check_output(out, stream.kind);
    return out;
  }

  void close_stream(const StreamHandle& stream) override {
    request({{"type", "close"}, {"stream", stream.id}}, "closed");
  }

  std::vector<int> tokenize(std::string_view text) override {
    const auto resp = request({{"type", "tokenize"}, {"text", std::string(text)}}, "tokens");
    return resp.at("tokens").get<std::vector<int>>();
  }

  std::string detokenize(std::span<const int> tokens) override {
    const auto resp = request(
        {{"type", "detokenize"}, {"tokens", std::vector<int>(tokens.begin(), tokens.end())}}, "text");
    return resp.at("text").get<std::string>();
  }

 private:
  nlohmann::json request(const nlohmann::json& req, const char* expected_type) {
    std::string line;
    {
      std::lock_guard lock(mu_);
      line = transport_->exchange(req.dump());
    }
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConnectionError(std::string("backend sent unparseable JSON: ") + e.what());
    }
    if (!resp.is_object()) throw ConnectionError("backend response is not a JSON object");
    const auto type = resp.value("type", "");
    if (type == "error") proto::raise(resp);
    if (type != expected_type) {
      throw ConnectionError("expected '" + std::string(expected_type) + "' response, got '" + type + "'");
    }
    return resp;
  }

  void check_output(const StepOutput& out, StreamKind kind) const {
    if (kind == StreamKind::Original && !out.attention) {
      throw ConnectionError("backend returned no attention for the original-image stream");
    }
    if (out.attention && (out.attention->layer_count != info_.layer_count ||
                          out.attention->head_count != info_.head_count)) {
      throw ConnectionError("attention layer/head counts differ from the session's");
    }
  }

  std::unique_ptr<Transport> transport_;
  SessionInfo info_;
  std::mutex mu_;
};

}  // namespace ed
