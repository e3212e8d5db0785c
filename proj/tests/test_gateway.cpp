#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <set>
#include <thread>

#include "biobench/errors.hpp"
#include "biobench/gateway.hpp"
#include "support.hpp"

using namespace biobench;
using testsupport::TempDir;

namespace {

ChatRequest text_request(const std::string& text,
                         const std::string& model = "m") {
  ChatRequest request;
  request.model_id = model;
  request.parts.push_back(TextPart{text});
  return request;
}

ChatRequest image_request(const std::string& text, std::string image_bytes) {
  auto request = text_request(text);
  request.parts.push_back(ImagePart{"image/jpeg", std::move(image_bytes)});
  return request;
}

}  // namespace

TEST_CASE("request validation") {
  ChatRequest request;
  request.model_id = "m";
  CHECK_THROWS_AS(request.validate(), ContractError);  // no text part
  request.parts.push_back(TextPart{"hi"});
  CHECK_NOTHROW(request.validate());
  request.parts.push_back(ImagePart{"image/jpeg", std::string(32, 'x')});
  CHECK_THROWS_AS(request.validate(16), ContractError);  // payload cap
  request.model_id.clear();
  CHECK_THROWS_AS(request.validate(), ContractError);
}

TEST_CASE("cache keys are content-addressed") {
  SUBCASE("identical requests share a key") {
    CHECK(cache_key(text_request("hello")) == cache_key(text_request("hello")));
  }
  SUBCASE("one flipped image byte changes the key") {
    std::string bytes(128, 'a');
    auto a = cache_key(image_request("same prompt", bytes));
    bytes[64] ^= 1;
    auto b = cache_key(image_request("same prompt", bytes));
    CHECK(a != b);
  }
  SUBCASE("part order is part of the identity") {
    ChatRequest ab = text_request("a");
    ab.parts.push_back(TextPart{"b"});
    ChatRequest ba = text_request("b");
    ba.parts.push_back(TextPart{"a"});
    CHECK(cache_key(ab) != cache_key(ba));
  }
  SUBCASE("decoding parameters are part of the identity") {
    auto a = text_request("p");
    auto b = text_request("p");
    b.decoding.temperature = 0.7;
    CHECK(cache_key(a) != cache_key(b));
    auto c = text_request("p");
    c.decoding.max_tokens = 64;
    CHECK(cache_key(a) != cache_key(c));
  }
  SUBCASE("model id is part of the identity") {
    CHECK(cache_key(text_request("p", "m1")) !=
          cache_key(text_request("p", "m2")));
  }
  SUBCASE("no collisions across a corpus of distinct requests") {
    std::set<std::string> keys;
    std::size_t produced = 0;
    for (int i = 0; i < 200; ++i) {
      keys.insert(cache_key(text_request("prompt " + std::to_string(i))));
      keys.insert(cache_key(
          image_request("prompt", "image-bytes-" + std::to_string(i))));
      produced += 2;
    }
    CHECK(keys.size() == produced);
  }
}

TEST_CASE("mock provider scripting") {
  MockProvider mock;
  auto request = text_request("the prompt");
  std::string key = MockProvider::script_key(request);

  SUBCASE("scripted text comes back verbatim") {
    mock.script(key, "The answer is male.");
    auto reply = mock.complete(request);
    CHECK(reply.status == 200);
    CHECK(reply.text == "The answer is male.");
    CHECK(mock.invocation_log() == std::vector<std::string>{key});
  }
  SUBCASE("unscripted keys fail loudly with the key") {
    try {
      mock.complete(request);
      FAIL("expected MockScriptError");
    } catch (const MockScriptError& e) {
      CHECK(std::string(e.what()).find("the prompt") != std::string::npos);
    }
  }
  SUBCASE("default reply catches everything") {
    mock.set_default({200, "", FinishReason::stop, ""});
    CHECK(mock.complete(request).text.empty());
  }
  SUBCASE("reply sequences are consumed in order, last repeats") {
    mock.script(key, {{429, "", FinishReason::other, "slow down"},
                      {200, "ok", FinishReason::stop, ""}});
    CHECK(mock.complete(request).status == 429);
    CHECK(mock.complete(request).status == 200);
    CHECK(mock.complete(request).status == 200);
    CHECK(mock.call_count() == 3);
  }
  SUBCASE("json scripts load") {
    auto j = nlohmann::json::parse(R"({
      "default": {"status": 200, "text": "fallback"},
      "entries": {
        "the prompt": "hi",
        "retry me": [{"status": 500, "text": ""}, {"status": 200, "text": "ok"}]
      }
    })");
    auto provider = MockProvider::from_json(j);
    CHECK(provider->complete(request).text == "hi");
    CHECK(provider->complete(text_request("anything else")).text == "fallback");
    auto retry = text_request("retry me");
    CHECK(provider->complete(retry).status == 500);
    CHECK(provider->complete(retry).status == 200);
  }
}

TEST_CASE("retry and backoff policy") {
  ManualClock clock;
  ProviderConfig config;
  config.max_retries = 3;
  config.backoff_base_ms = 500;
  config.requests_per_minute = 1000;

  MockProvider mock;
  auto request = text_request("p");
  std::string key = MockProvider::script_key(request);

  SUBCASE("429,429,200 succeeds after two backoffs") {
    mock.script(key, {{429, "", FinishReason::other, ""},
                      {429, "", FinishReason::other, ""},
                      {200, "done", FinishReason::stop, ""}});
    GatewayClient client(mock, config, clock);
    auto t0 = clock.now();
    auto response = client.send(request);
    CHECK(response.text == "done");
    CHECK(mock.call_count() == 3);
    // 500ms + 1000ms of backoff elapsed on the virtual clock.
    CHECK((clock.now() - t0).count() == 1500);
  }
  SUBCASE("401 is fatal with zero retries") {
    mock.script(key, {{401, "", FinishReason::other, "bad key"}});
    GatewayClient client(mock, config, clock);
    CHECK_THROWS_AS(client.send(request), AuthError);
    CHECK(mock.call_count() == 1);
  }
  SUBCASE("exhausted retries raise a transport error with the attempt log") {
    mock.script(key, {{503, "", FinishReason::other, "down"}});
    GatewayClient client(mock, config, clock);
    try {
      client.send(request);
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(e.attempts().size() == 4);  // initial try + 3 retries
    }
    CHECK(mock.call_count() == 4);
  }
  SUBCASE("non-retryable 4xx raises a provider error") {
    mock.script(key, {{400, "", FinishReason::other, "bad request"}});
    GatewayClient client(mock, config, clock);
    CHECK_THROWS_AS(client.send(request), ProviderError);
    CHECK(mock.call_count() == 1);
  }
  SUBCASE("transport failures (status 0) retry") {
    mock.script(key, {{0, "", FinishReason::other, "timeout"},
                      {200, "ok", FinishReason::stop, ""}});
    GatewayClient client(mock, config, clock);
    CHECK(client.send(request).text == "ok");
  }
}

TEST_CASE("rate limiter holds the sliding-window bound") {
  ManualClock clock;
  RateLimiter limiter(3, clock);
  std::vector<std::int64_t> acquired;
  for (int i = 0; i < 10; ++i) {
    limiter.acquire();
    acquired.push_back(clock.now().count());
  }
  // Any 60s window holds at most 3 acquisitions.
  for (std::size_t i = 0; i < acquired.size(); ++i) {
    std::size_t in_window = 0;
    for (std::size_t j = 0; j < acquired.size(); ++j) {
      if (acquired[j] >= acquired[i] && acquired[j] < acquired[i] + 60000) {
        ++in_window;
      }
    }
    CHECK(in_window <= 3);
  }
  CHECK(acquired[2] == 0);      // first burst passes immediately
  CHECK(acquired[3] == 60000);  // fourth waits for the window to roll
}

TEST_CASE("response cache") {
  TempDir dir("cache");
  ResponseCache cache(dir.path / "c");
  ManualClock clock;
  ProviderConfig config;
  config.requests_per_minute = 1000;

  SUBCASE("two identical calls reach the provider once") {
    MockProvider mock;
    auto request = text_request("cached prompt");
    mock.script(MockProvider::script_key(request), "answer");
    GatewayClient client(mock, config, clock);
    auto first = client.send_cached(request, cache);
    auto second = client.send_cached(request, cache);
    CHECK(first.text == "answer");
    CHECK(second.text == "answer");
    CHECK_FALSE(first.from_cache);
    CHECK(second.from_cache);
    CHECK(mock.call_count() == 1);
  }
  SUBCASE("cold cache stores one entry per distinct request") {
    MockProvider mock;
    mock.set_default({200, "x", FinishReason::stop, ""});
    GatewayClient client(mock, config, clock);
    const std::size_t distinct = 17;
    for (std::size_t i = 0; i < distinct; ++i) {
      client.send_cached(text_request("p" + std::to_string(i)), cache);
    }
    CHECK(cache.entry_count() == distinct);
    CHECK(mock.call_count() == distinct);
  }
  SUBCASE("corrupted entries are ignored and overwritten") {
    MockProvider mock;
    auto request = text_request("p");
    mock.script(MockProvider::script_key(request), "fresh");
    GatewayClient client(mock, config, clock);
    client.send_cached(request, cache);

    auto path = cache.entry_path(cache_key(request));
    testsupport::write_file(path, "{not json");
    std::vector<std::string> warnings;
    CHECK_FALSE(cache.lookup(cache_key(request), &warnings).has_value());
    CHECK(warnings.size() == 1);

    auto again = client.send_cached(request, cache);
    CHECK(again.text == "fresh");
    CHECK_FALSE(again.from_cache);
    CHECK(cache.lookup(cache_key(request)).has_value());
  }
  SUBCASE("entries fan out two levels deep") {
    auto path = cache.entry_path(std::string(64, 'a'));
    CHECK(path.parent_path().filename() == "aa");
    CHECK(path.parent_path().parent_path().filename() == "aa");
  }
}

TEST_CASE("base64 and wire format") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");

  SUBCASE("request body shape") {
    auto request = image_request("describe", "IMG");
    auto body = chat_completions_body(request);
    CHECK(body["model"] == "m");
    CHECK(body["max_tokens"] == 512);
    CHECK(body["messages"].size() == 1);
    CHECK(body["messages"][0]["role"] == "user");
    const auto& content = body["messages"][0]["content"];
    REQUIRE(content.size() == 2);
    CHECK(content[0]["type"] == "text");
    CHECK(content[0]["text"] == "describe");
    CHECK(content[1]["type"] == "image_url");
    CHECK(content[1]["image_url"]["url"] ==
          "data:image/jpeg;base64," + base64_encode("IMG"));
  }
  SUBCASE("reply parsing") {
    auto reply = parse_chat_completions_reply(
        200,
        R"({"choices":[{"message":{"content":"hello"},"finish_reason":"stop"}]})");
    CHECK(reply.text == "hello");
    CHECK(reply.finish_reason == FinishReason::stop);

    auto truncated = parse_chat_completions_reply(
        200,
        R"({"choices":[{"message":{"content":"x"},"finish_reason":"length"}]})");
    CHECK(truncated.finish_reason == FinishReason::length);

    CHECK_THROWS_AS(parse_chat_completions_reply(200, "{}"), ProviderError);
    CHECK_THROWS_AS(
        parse_chat_completions_reply(
            200, R"({"choices":[{"message":{"content":null}}]})"),
        ProviderError);
    CHECK_THROWS_AS(parse_chat_completions_reply(200, "not json"),
                    ProviderError);

    auto limited = parse_chat_completions_reply(429, "slow down");
    CHECK(limited.status == 429);
  }
}

TEST_CASE("http provider against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/v1/chat", [&](const httplib::Request& req,
                              httplib::Response& res) {
    int hit = ++hits;
    if (auto it = req.headers.find("Authorization"); it != req.headers.end()) {
      seen_auth = it->second;
    }
    auto body = nlohmann::json::parse(req.body);
    std::string prompt = body["messages"][0]["content"][0]["text"];
    if (prompt == "rate me" && hit == 1) {
      res.status = 429;
      res.set_content("busy", "text/plain");
      return;
    }
    if (prompt == "reject me") {
      res.status = 401;
      res.set_content("who are you", "text/plain");
      return;
    }
    nlohmann::json reply = {
        {"choices",
         {{{"message", {{"content", "echo:" + prompt}}},
           {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::string endpoint =
      "http://127.0.0.1:" + std::to_string(port) + "/v1/chat";
  HttpProvider provider(endpoint, "sekrit-credential", 5);
  ManualClock clock;
  ProviderConfig config;
  config.requests_per_minute = 1000;
  config.max_retries = 2;
  GatewayClient client(provider, config, clock);

  SUBCASE("happy path carries the bearer credential") {
    auto response = client.send(text_request("hello"));
    CHECK(response.text == "echo:hello");
    CHECK(seen_auth == "Bearer sekrit-credential");
  }
  SUBCASE("429 then success") {
    auto response = client.send(text_request("rate me"));
    CHECK(response.text == "echo:rate me");
    CHECK(hits >= 2);
  }
  SUBCASE("401 is fatal") {
    CHECK_THROWS_AS(client.send(text_request("reject me")), AuthError);
  }

  server.stop();
  server_thread.join();
}

TEST_CASE("credential never lands in cache entries") {
  TempDir dir("cred");
  ResponseCache cache(dir.path / "c");
  MockProvider mock;
  mock.set_default({200, "clean answer", FinishReason::stop, ""});
  ManualClock clock;
  ProviderConfig config;
  config.credential = "super-secret-token";
  config.requests_per_minute = 1000;
  GatewayClient client(mock, config, clock);
  client.send_cached(text_request("p1"), cache);
  client.send_cached(image_request("p2", "img"), cache);

  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir.path)) {
    if (!entry.is_regular_file()) continue;
    auto content = testsupport::read_file(entry.path());
    CHECK(content.find("super-secret-token") == std::string::npos);
  }
}
