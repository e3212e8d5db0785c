#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace biobench {

enum class FinishReason { stop, length, filtered, other };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view name);

struct TextPart {
  std::string text;
};

struct ImagePart {
  std::string media_type;  // "image/jpeg", "image/png", ...
  std::string bytes;
};

using MessagePart = std::variant<TextPart, ImagePart>;

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 512;
};

inline constexpr std::size_t kDefaultImagePayloadLimit = 20u << 20;  // 20 MiB

// One single-turn multimodal exchange. Part order is part of the request
// identity.
struct ChatRequest {
  std::string model_id;
  std::vector<MessagePart> parts;
  Decoding decoding;

  // At least one text part; total image bytes within the limit.
  void validate(std::size_t image_payload_limit = kDefaultImagePayloadLimit) const;
};

struct ChatResponse {
  std::string text;  // may be empty, which downstream grades as a failure
  FinishReason finish_reason = FinishReason::stop;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
};

// Content-addressed identity: model id, decoding parameters, and every
// part in order (text bytes, image content digests). Stable across
// processes and platforms.
std::string cache_key(const ChatRequest& request);

struct ProviderConfig {
  std::string endpoint_url;
  std::string credential;  // from the environment; never serialized
  int max_retries = 3;
  int backoff_base_ms = 500;
  int requests_per_minute = 60;
  int timeout_seconds = 120;
  std::size_t image_payload_limit = kDefaultImagePayloadLimit;
};

// Outcome of one transport attempt. status follows HTTP semantics;
// 0 means the transport itself failed (timeout, refused connection).
struct ProviderReply {
  int status = 0;
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::string detail;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// Injectable time source so rate limiting and backoff are testable.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds duration) = 0;
};

class SystemClock : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds duration) override;
};

// Virtual clock: sleeping advances time instantly.
class ManualClock : public Clock {
 public:
  std::chrono::milliseconds now() override;
  void sleep_for(std::chrono::milliseconds duration) override;
  void advance(std::chrono::milliseconds duration);

 private:
  std::mutex mutex_;
  std::chrono::milliseconds now_{0};
};

// Sliding 60-second window: at most `requests_per_minute` acquisitions in
// any window. acquire() blocks (via the clock) until a slot frees up.
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock);
  void acquire();

 private:
  int limit_;
  Clock& clock_;
  std::mutex mutex_;
  std::deque<std::chrono::milliseconds> window_;
};

// Deterministic scripted provider for tests and dry runs. Requests are
// matched by script_key(); per-key reply lists are consumed in order and
// the final entry repeats once exhausted.
class MockProvider : public Provider {
 public:
  // Text parts verbatim and image parts as "[image:<sha256>]", joined by
  // newlines. Readable enough to script against by hand.
  static std::string script_key(const ChatRequest& request);

  void script(const std::string& key, std::string response_text);
  void script(const std::string& key, std::vector<ProviderReply> replies);
  void set_default(ProviderReply reply);

  ProviderReply complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  std::vector<std::string> invocation_log() const;
  std::size_t call_count() const;

  // {"default": {...}, "entries": {key: "text" | {...} | [...]}} where an
  // object reply carries {"status": int, "text": str, "finish_reason": str}.
  static std::shared_ptr<MockProvider> from_json(const nlohmann::json& j);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<ProviderReply>> scripts_;
  std::map<std::string, std::size_t> cursors_;
  std::optional<ProviderReply> default_reply_;
  std::vector<std::string> log_;
};

// Chat-completions wire format: one user message whose content array
// carries the text parts and base64 data-URI image parts in request order.
nlohmann::json chat_completions_body(const ChatRequest& request);
ProviderReply parse_chat_completions_reply(int status, const std::string& body);

std::string base64_encode(std::string_view bytes);

// HTTPS/HTTP transport speaking the chat-completions shape.
class HttpProvider : public Provider {
 public:
  HttpProvider(std::string endpoint_url, std::string credential,
               int timeout_seconds = 120);
  ProviderReply complete(const ChatRequest& request) override;
  std::string name() const override { return "http"; }

 private:
  std::string endpoint_url_;
  std::string credential_;
  int timeout_seconds_;
};

// One JSON file per response under a two-level hex fan-out
// (ab/cd/<key>.json). Writes are atomic (temp file + rename); undecodable
// entries are treated as misses and overwritten.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatResponse> lookup(const std::string& key,
                                     std::vector<std::string>* warnings = nullptr) const;
  void store(const std::string& key, const ChatResponse& response) const;

  std::filesystem::path entry_path(const std::string& key) const;
  std::size_t entry_count() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// Retry, rate-limit and cache wrapper around a provider. Safe for
// concurrent callers; the rate limiter is shared across them.
class GatewayClient {
 public:
  GatewayClient(Provider& provider, ProviderConfig config, Clock& clock);

  // Rate-limited send with exponential backoff on 429/5xx/transport
  // failures. 401/403 raise AuthError immediately; other 4xx raise
  // ProviderError; exhausted retries raise TransportError.
  ChatResponse send(const ChatRequest& request);

  // Cache hit -> stored response, zero provider traffic. Miss -> send and
  // persist before returning.
  ChatResponse send_cached(const ChatRequest& request, const ResponseCache& cache);

 private:
  Provider& provider_;
  ProviderConfig config_;
  Clock& clock_;
  RateLimiter limiter_;
};

}  // namespace biobench
