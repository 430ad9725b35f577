#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "ed/backends.hpp"
#include "ed/client.hpp"
#include "ed/conformance.hpp"
#include "ed/protocol.hpp"
#include "ed/subprocess.hpp"
#include "support.hpp"

namespace {

using nlohmann::json;

std::vector<json> golden_corpus() {
  std::ifstream in(std::string(ED_DATA_DIR) + "/conformance_golden.jsonl");
  EXPECT_TRUE(in.good());
  return ed::conformance::load_corpus(in);
}

void expect_all_pass(const std::vector<ed::conformance::StepResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

std::string serve_command() { return std::string(ED_CLI_PATH) + " serve-synthetic"; }

}  // namespace

TEST(Base64, RoundTripsArbitraryBytes) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 70; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const auto text = ed::proto::base64_encode(bytes.data(), bytes.size());
    EXPECT_EQ(text.size(), 4 * ((n + 2) / 3));
    EXPECT_EQ(ed::proto::base64_decode(text), bytes);
  }
  EXPECT_EQ(ed::proto::base64_encode(reinterpret_cast<const std::uint8_t*>("Man"), 3), "TWFu");
  EXPECT_THROW(ed::proto::base64_decode("T@Fu"), ed::InputError);
}

TEST(Tensor, FloatsSurviveTransportBitExactly) {
  const std::vector<float> v{0.0f, -0.0f, 1.5f, -3.25e-20f, 3.4e38f, 1e-45f};
  const auto j = ed::proto::encode_f32(v, {6});
  const auto back = ed::proto::decode_f32(j, 6);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back[i]), std::bit_cast<std::uint32_t>(v[i]));
  }
  // 1.0f little-endian is 00 00 80 3f
  EXPECT_EQ(ed::proto::encode_f32({1.0f}, {1})["data"], "AACAPw==");
  EXPECT_THROW(ed::proto::decode_f32(j, 5), ed::ConnectionError);
}

TEST(Server, RejectsOtherProtocolVersions) {
  ed::proto::Server server(ed::synthetic_factory());
  const auto r = server.handle({{"type", "hello"}, {"proto_version", 2}});
  EXPECT_EQ(r["type"], "error");
  EXPECT_EQ(r["code"], "version_mismatch");
}

TEST(Server, ErrorCodesMapToExceptions) {
  EXPECT_THROW(ed::proto::raise(ed::proto::error_message("invalid_token", "x")), ed::InvalidTokenError);
  EXPECT_THROW(ed::proto::raise(ed::proto::error_message("unknown_stream", "x")), ed::UnknownStreamError);
  EXPECT_THROW(ed::proto::raise(ed::proto::error_message("invalid_input", "x")), ed::InputError);
  EXPECT_THROW(ed::proto::raise(ed::proto::error_message("version_mismatch", "x")), ed::ConnectionError);
  // a fault inside the backend is a backend failure, not ours
  EXPECT_THROW(ed::proto::raise(ed::proto::error_message("internal", "x")), ed::ConnectionError);
}

TEST(Conformance, LoopbackPassesGoldenCorpus) {
  ed::LoopbackTransport transport(ed::synthetic_factory());
  expect_all_pass(ed::conformance::run(transport, golden_corpus()));
}

TEST(Conformance, SubprocessPassesGoldenCorpus) {
  ed::SubprocessTransport transport(serve_command());
  expect_all_pass(ed::conformance::run(transport, golden_corpus()));
}

TEST(Conformance, DetectsAMisbehavingBackend) {
  // a server that answers every step with the wrong logits length
  class Broken final : public ed::Transport {
   public:
    std::string exchange(const std::string& line) override {
      auto resp = inner_.exchange(line);
      auto j = json::parse(resp);
      if (j.value("type", "") == "step_ok") j["output"]["logits"] = ed::proto::encode_f32({1.0f}, {1});
      return j.dump();
    }

   private:
    ed::LoopbackTransport inner_{ed::synthetic_factory()};
  } broken;
  const auto results = ed::conformance::run(broken, golden_corpus());
  bool any_failed = false;
  for (const auto& r : results) any_failed |= !r.pass;
  EXPECT_TRUE(any_failed);
}

TEST(Subprocess, SessionMatchesInProcessBackend) {
  const auto remote = ed::open_session("subprocess:" + serve_command(), {{"seed", 2}});
  ed::SyntheticSession local({.seed = 2});
  const auto img = test::noise(40, 60, 3);
  const std::vector<int> prompt{5, 6};
  auto r = remote->init_stream(img, prompt, ed::StreamKind::Original, -1);
  auto l = local.init_stream(img, prompt, ed::StreamKind::Original, -1);
  EXPECT_EQ(r.output.logits, l.output.logits);
  EXPECT_EQ(remote->step(r.handle, 9).attention, local.step(l.handle, 9).attention);
  EXPECT_EQ(remote->tokenize("a dog"), local.tokenize("a dog"));
}

TEST(Subprocess, DeadChildIsConnectionError) {
  EXPECT_THROW(ed::open_session("subprocess:exit 0"), ed::ConnectionError);
  EXPECT_THROW(ed::open_session("subprocess:/nonexistent/binary"), ed::ConnectionError);
}
