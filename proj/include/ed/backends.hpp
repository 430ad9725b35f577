#pragma once

#include <memory>
#include <string>

#include "ed/backend.hpp"
#include "ed/client.hpp"
#include "ed/protocol.hpp"
#include "ed/subprocess.hpp"
#include "ed/synthetic_backend.hpp"

namespace ed {

/// Opens a session from a descriptor: "synthetic" or "subprocess:<command>".
inline std::unique_ptr<Session> open_session(const std::string& descriptor,
                                             const nlohmann::json& options = nlohmann::json::object()) {
  if (descriptor == "synthetic") {
    return std::make_unique<SyntheticSession>(SyntheticSession::parse_options(options));
  }
  constexpr std::string_view prefix = "subprocess:";
  if (descriptor.starts_with(prefix) && descriptor.size() > prefix.size()) {
    auto transport = std::make_unique<SubprocessTransport>(descriptor.substr(prefix.size()));
    // The child picks its model from its own command line unless the options name one.
    nlohmann::json rest = options.is_object() ? options : nlohmann::json::object();
    const std::string model = rest.value("model", std::string());
    rest.erase("model");
    return std::make_unique<ProtocolSession>(std::move(transport), model, rest);
  }
  throw ConnectionError("malformed backend descriptor '" + descriptor +
                        "' (expected synthetic or subprocess:<command>)");
}

/// Server-side session factory for the synthetic model: accepts hello
/// messages naming no model or "synthetic".
inline proto::Server::Factory synthetic_factory() {
  return [](const nlohmann::json& hello) -> std::unique_ptr<Session> {
    const auto model = hello.value("model", std::string("synthetic"));
    if (!model.empty() && model != "synthetic") {
      throw ConnectionError("synthetic server cannot load model '" + model + "'");
    }
    return std::make_unique<SyntheticSession>(
        SyntheticSession::parse_options(hello.value("options", nlohmann::json::object())));
  };
}

}  // namespace ed
