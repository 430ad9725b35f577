#pragma once

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ed/client.hpp"
#include "ed/protocol.hpp"

namespace ed::conformance {

using json = nlohmann::json;

// A corpus is a list of transcript steps, each a JSON object:
//   name         label printed in reports
//   send         request object; strings "$var" are replaced by bound values
//   send_raw     literal request line instead of `send`
//   expect       {"type": T, "code": C, "has": [keys],
//                 "equals": {"dotted.path": value},
//                 "logits": true        (length == session vocab_size)
//                 "attention": "present" | "absent"  (shape [L, H, d*d])
//                 "same_logits_as": step name (only when deterministic)}
//   bind         {"var": "response.field"} captured for later steps
// The session parameters are taken from the first hello_ok response.

struct StepResult {
  std::string name;
  bool pass = true;
  std::string detail;
};

namespace detail {

inline const json* lookup(const json& j, const std::string& dotted) {
  const json* cur = &j;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return cur;
}

inline json substitute(const json& j, const std::map<std::string, json>& vars) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s.size() > 1 && s[0] == '$') {
      if (auto it = vars.find(s.substr(1)); it != vars.end()) return it->second;
    }
    return j;
  }
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = substitute(v, vars);
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(substitute(v, vars));
    return out;
  }
  return j;
}

}  // namespace detail

inline std::vector<json> load_corpus(std::istream& in) {
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(json::parse(line));
  }
  return out;
}

inline std::vector<StepResult> run(Transport& transport, const std::vector<json>& corpus) {
  std::vector<StepResult> results;
  std::map<std::string, json> vars;
  std::map<std::string, std::vector<float>> logits_by_step;
  std::optional<SessionInfo> info;

  for (const auto& step : corpus) {
    StepResult r;
    r.name = step.value("name", "step" + std::to_string(results.size()));
    auto fail = [&](const std::string& why) {
      if (r.pass) r.detail = why;
      r.pass = false;
    };

    std::string line = step.contains("send_raw") ? step["send_raw"].get<std::string>()
                                                  : detail::substitute(step.at("send"), vars).dump();
    json resp;
    try {
      resp = json::parse(transport.exchange(line));
    } catch (const std::exception& e) {
      fail(std::string("no valid response: ") + e.what());
      results.push_back(r);
      continue;
    }

    const json expect = step.value("expect", json::object());
    if (expect.contains("type") && resp.value("type", "") != expect["type"]) {
      fail("type '" + resp.value("type", "") + "' != expected '" + expect["type"].get<std::string>() +
           "' (" + resp.value("message", "") + ")");
    }
    if (expect.contains("code") && resp.value("code", "") != expect["code"]) {
      fail("error code '" + resp.value("code", "") + "' != expected '" + expect["code"].get<std::string>() + "'");
    }
    for (const auto& key : expect.value("has", json::array())) {
      if (detail::lookup(resp, key.get<std::string>()) == nullptr) fail("missing field " + key.get<std::string>());
    }
    const json equals = expect.value("equals", json::object());
    for (const auto& [path, value] : equals.items()) {
      const json* got = detail::lookup(resp, path);
      if (got == nullptr || *got != detail::substitute(value, vars)) {
        fail(path + " = " + (got ? got->dump() : "<missing>") + ", expected " + value.dump());
      }
    }

    if (resp.value("type", "") == "hello_ok" && !info) {
      try {
        info = proto::decode_info(resp.at("session"));
      } catch (const std::exception& e) {
        fail(std::string("bad session block: ") + e.what());
      }
    }

    if (r.pass && (expect.value("logits", false) || expect.contains("attention") ||
                   expect.contains("same_logits_as"))) {
      if (!info) {
        fail("output check before a successful hello");
      } else {
        try {
          const auto out = proto::decode_output(resp.at("output"), *info);
          logits_by_step[r.name] = out.logits;
          const auto want = expect.value("attention", std::string());
          if (want == "present") {
            if (!out.attention) fail("attention missing");
            else if (out.attention->layer_count != info->layer_count ||
                     out.attention->head_count != info->head_count) {
              fail("attention layer/head counts differ from the session's");
            }
          } else if (want == "absent" && out.attention) {
            fail("attention returned for a sub-image stream");
          }
          if (expect.contains("same_logits_as") && info->deterministic) {
            const auto other = expect["same_logits_as"].get<std::string>();
            auto it = logits_by_step.find(other);
            if (it == logits_by_step.end()) fail("no recorded logits for step " + other);
            else if (it->second != out.logits) fail("logits differ from step " + other);
          }
        } catch (const std::exception& e) {
          fail(std::string("bad output block: ") + e.what());
        }
      }
    }

    const json binds = step.value("bind", json::object());
    for (const auto& [var, path] : binds.items()) {
      const json* got = detail::lookup(resp, path.get<std::string>());
      if (got == nullptr) fail("cannot bind " + var + " from " + path.get<std::string>());
      else vars[var] = *got;
    }
    results.push_back(r);
  }
  return results;
}

}  // namespace ed::conformance
