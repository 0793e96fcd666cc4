#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

#include "doctest.h"
#include "egoassist/error.hpp"
#include "egoassist/http_providers.hpp"
#include "egoassist/mock_providers.hpp"
#include "egoassist/prompts.hpp"
#include "egoassist/provider_config.hpp"
#include "fixtures.hpp"
#include "httplib.h"

using namespace egoassist;
using nlohmann::json;

TEST_CASE("mock point segmenter") {
  MockPointSegmenter seg(5);
  const Image image(100, 100);
  GazePoint2D p{0, 50, 50, true};
  const auto m = seg.point_segment(image, p).mask;
  // Brute-force radius scan.
  std::size_t expected = 0;
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) expected += (x - 50) * (x - 50) + (y - 50) * (y - 50) <= 25;
  }
  CHECK(m.count() == expected);
  CHECK(m.count() != 121);  // not a Chebyshev square

  p.u = -1;
  p.v = 0;
  try {
    seg.point_segment(image, p);
    FAIL("expected OutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfBounds);
  }

  const auto scripted = Mask::rectangle(100, 100, 1, 2, 3, 4);
  seg.script_mask(3, scripted);
  GazePoint2D q{3, 10, 10, true};
  CHECK(seg.point_segment(image, q).mask == scripted);
}

TEST_CASE("mock mask propagator") {
  MockMaskPropagator prop;
  const Image a(20, 20), b(20, 20);
  const auto rect = Mask::rectangle(20, 20, 2, 2, 5, 6);
  CHECK(prop.propagate_masks(a, b, {{1, rect}}, 1).at(1) == std::optional<Mask>(rect));

  prop.script_lost(7, 2, 2);
  const auto lost = prop.propagate_masks(a, b, {{7, rect}, {8, rect}}, 2);
  CHECK_FALSE(lost.at(7).has_value());
  CHECK(lost.at(8).has_value());

  prop.script_offset(4, 3, 0);
  const auto moved = *prop.propagate_masks(a, b, {{1, rect}}, 4).at(1);
  std::set<std::pair<int, int>> want, got;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      if (rect.get(x, y)) want.insert({x + 3, y});
      if (moved.get(x, y)) got.insert({x, y});
    }
  }
  CHECK(got == want);
}

TEST_CASE("mock vlm scripts") {
  MockScript script;
  script.responses[VlmCallKind::generic] = {std::string("OK")};
  script.exhaustion = ExhaustionPolicy::fail;
  MockVlm vlm(std::move(script));
  VlmRequest r;
  CHECK(vlm.complete(r) == "OK");
  try {
    vlm.complete(r);
    FAIL("expected ProviderFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProviderFailure);
    CHECK(std::string(e.what()).find("script exhausted") != std::string::npos);
  }

  const auto loaded = MockScript::from_json(json::parse(R"({"responses": {"answer": [{"echo": "Q", "json_key": "answer"}]}})"));
  MockVlm echo(loaded);
  VlmRequest q;
  q.kind = VlmCallKind::answer;
  q.prompt = prompt_section("Q", "hello");
  CHECK(json::parse(echo.complete(q)) == json{{"answer", "hello"}});
}

TEST_CASE("hashing embedders") {
  HashingTextEmbedder te(16, 42);
  const auto a = te.embed_text("same text");
  CHECK(a == te.embed_text("same text"));
  CHECK(a.dim() == 16);
  CHECK(std::fabs(a.norm() - 1) < 1e-6);
  int below_one = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = te.embed_text("corpus string " + std::to_string(i));
    const auto y = te.embed_text("corpus string " + std::to_string(i + 1000));
    double dot = 0;
    for (int d = 0; d < 16; ++d) dot += static_cast<double>(x.values[static_cast<std::size_t>(d)]) * y.values[static_cast<std::size_t>(d)];
    below_one += dot < 1 - 1e-9;
    CHECK(x.dim() == 16);
  }
  CHECK(below_one == 1000);
  HashingImageEmbedder ie(32, 1);
  const auto v = ie.embed_image(Image(4, 4, {1, 2, 3}));
  CHECK(v.dim() == 32);
  CHECK(v.modality == Modality::visual);
  CHECK(v != ie.embed_image(Image(4, 4, {1, 2, 4})));
}

TEST_CASE("judges") {
  auto scripted = MockJudge::scripted({3});
  CHECK(scripted.judge_answer("q", "ref", "ref") == 3);
  auto contains = MockJudge::containment();
  CHECK(contains.judge_answer("q", "Blue", "it is blue.") == 3);
  CHECK(contains.judge_answer("q", "Blue", "red") == 1);

  CHECK(parse_judge_score("2 (partially correct)") == 2);
  CHECK(parse_judge_score("Score: 3") == 3);
  CHECK_FALSE(parse_judge_score("great answer").has_value());
  CHECK_FALSE(parse_judge_score("5").has_value());

  MockScript script;
  script.responses[VlmCallKind::judge] = {std::string("great answer")};
  auto vlm = std::make_shared<MockVlm>(std::move(script));
  VlmJudge judge(vlm, PromptLibrary::defaults().judge);
  try {
    judge.judge_answer("q", "r", "c");
    FAIL("expected MalformedReply");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedReply);
  }
  CHECK(vlm->call_count() == 3);
}

TEST_CASE("provider config") {
  SUBCASE("env interpolation") {
    const EnvLookup env = [](const std::string& name) -> std::optional<std::string> {
      if (name == "HOST") return "example.test";
      return std::nullopt;
    };
    CHECK(interpolate_env(std::string("https://${HOST}/v1"), env) == "https://example.test/v1");
    CHECK_THROWS_AS(interpolate_env(std::string("${MISSING}"), env), Error);
  }
  SUBCASE("keys in files are rejected") {
    CHECK_THROWS_AS(ProviderConfig::from_json(json::parse(R"({"vlm": {"kind": "http", "base_url": "http://x", "model": "m", "api_key": "sk"}})")),
                    Error);
  }
  SUBCASE("unknown role") {
    CHECK_THROWS_AS(ProviderConfig::from_json(json::parse(R"({"oracle": {"kind": "mock"}})")), Error);
  }
  SUBCASE("http roles carry their endpoint") {
    const auto c = ProviderConfig::from_json(json::parse(
        R"({"providers": {"vlm": {"kind": "http", "base_url": "http://127.0.0.1:9/v1", "model": "m", "api_key_env": "K", "temperature": 0.2}}})"));
    const auto& vlm = c.roles.at("vlm");
    CHECK(vlm.kind == ProviderKind::http);
    CHECK(vlm.endpoint.model == "m");
    CHECK(vlm.endpoint.api_key_env == "K");
    CHECK(vlm.options.at("temperature") == 0.2);
    CHECK(c.roles.at("judge").kind == ProviderKind::mock);
  }
  SUBCASE("bundled demo config builds") {
    const auto c = ProviderConfig::load(fixture::synthetic_demo_dir() / "providers.json");
    const auto set = build_providers(c, PromptLibrary::defaults(), 42);
    CHECK(set.vlm != nullptr);
    CHECK(set.judge != nullptr);
  }
}

namespace {

struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  StubServer() { port = server.bind_to_any_port("127.0.0.1"); }
  void start() {
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  ProviderEndpoint endpoint(int retries = 2) const {
    ProviderEndpoint e;
    e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    e.model = "stub-model";
    e.max_retries = retries;
    e.timeout_s = 5;
    return e;
  }
};

}  // namespace

TEST_CASE("http client retries 429 once, then succeeds") {
  StubServer stub;
  std::atomic<int> hits{0};
  std::string auth, path;
  json body;
  stub.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      res.set_content("{}", "application/json");
      return;
    }
    auth = req.get_header_value("Authorization");
    path = req.path;
    body = json::parse(req.body);
    res.set_content(R"({"choices": [{"message": {"content": "hi there"}}]})", "application/json");
  });
  stub.start();
  setenv("EGOASSIST_TEST_KEY", "secret-token", 1);
  std::vector<double> slept;
  auto endpoint = stub.endpoint();
  endpoint.api_key_env = "EGOASSIST_TEST_KEY";
  auto client = std::make_shared<JsonHttpClient>(endpoint, 1,
                                                 [&](std::chrono::duration<double> d) { slept.push_back(d.count()); });
  HttpVlm vlm(client, ChatOptions{0.0, 64, true});
  VlmRequest r;
  r.prompt = "say hi";
  r.expects_json = true;
  r.images.push_back({"Frame 0", Image(2, 2, {1, 2, 3})});
  CHECK(vlm.complete(r) == "hi there");
  CHECK(client->retry_count() == 1);
  CHECK(hits == 2);
  REQUIRE(slept.size() == 1);
  CHECK(slept[0] >= 0.4);
  CHECK(slept[0] <= 0.6);
  CHECK(auth == "Bearer secret-token");
  CHECK(path == "/v1/chat/completions");
  CHECK(body["model"] == "stub-model");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["response_format"]["type"] == "json_object");
  const auto& content = body["messages"][0]["content"];
  CHECK(content[0]["text"] == "say hi");
  CHECK(content[1]["text"] == "Frame 0");
  CHECK(content[2]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
  unsetenv("EGOASSIST_TEST_KEY");
}

TEST_CASE("a named but unset key variable fails before sending") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response&) { ++hits; });
  stub.start();
  auto endpoint = stub.endpoint();
  endpoint.api_key_env = "EGOASSIST_UNSET_KEY_FOR_TEST";
  unsetenv(endpoint.api_key_env.c_str());
  auto client = std::make_shared<JsonHttpClient>(endpoint, 1, [](auto) {});
  HttpTextEmbedder te(client);
  CHECK_THROWS_AS(te.embed_text("x"), Error);
  CHECK(hits == 0);
}

TEST_CASE("http client does not retry other 4xx") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 400;
    res.set_content(R"({"error": "bad"})", "application/json");
  });
  stub.start();
  auto client = std::make_shared<JsonHttpClient>(stub.endpoint(), 1, [](auto) {});
  HttpTextEmbedder te(client);
  try {
    te.embed_text("x");
    FAIL("expected ProviderFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProviderFailure);
    CHECK(std::string(e.what()).find("400") != std::string::npos);
  }
  CHECK(hits == 1);
  CHECK(client->retry_count() == 0);
}

TEST_CASE("http client gives up after max_retries on 5xx") {
  StubServer stub;
  std::atomic<int> hits{0};
  stub.server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  stub.start();
  auto client = std::make_shared<JsonHttpClient>(stub.endpoint(3), 1, [](auto) {});
  HttpTextEmbedder te(client);
  CHECK_THROWS_AS(te.embed_text("x"), Error);
  CHECK(hits == 4);
  CHECK(client->retry_count() == 3);
}

TEST_CASE("http embeddings") {
  StubServer stub;
  json seen;
  stub.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(R"({"data": [{"embedding": [3.0, 4.0]}]})", "application/json");
  });
  stub.start();
  auto client = std::make_shared<JsonHttpClient>(stub.endpoint(), 1, [](auto) {});
  HttpImageEmbedder ie(client);
  const auto v = ie.embed_image(Image(2, 2));
  CHECK(v.values == std::vector<float>{3, 4});
  CHECK(seen["input"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
}

TEST_CASE("unreachable endpoint is a provider failure") {
  ProviderEndpoint e;
  e.base_url = "http://127.0.0.1:1/v1";
  e.model = "m";
  e.max_retries = 1;
  e.timeout_s = 1;
  auto client = std::make_shared<JsonHttpClient>(e, 1, [](auto) {});
  HttpTextEmbedder te(client);
  try {
    te.embed_text("x");
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK((err.code() == ErrorCode::ProviderFailure || err.code() == ErrorCode::Timeout));
  }
  CHECK(client->retry_count() == 1);
}

TEST_CASE("backoff schedule") {
  BackoffPolicy b;
  CHECK(b.nominal_delay(0) == 0.5);
  CHECK(b.nominal_delay(1) == 1.0);
  CHECK(b.nominal_delay(2) == 2.0);
}
