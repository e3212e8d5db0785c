#include "biobench/gateway.hpp"

#include <atomic>
#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "biobench/digest.hpp"
#include "biobench/errors.hpp"

namespace biobench {

namespace {

constexpr std::chrono::milliseconds kWindow{60 * 1000};
constexpr std::int64_t kBackoffCapMs = 60 * 1000;

std::string double_repr(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::filtered: return "filtered";
    case FinishReason::other: return "other";
  }
  return "other";
}

FinishReason finish_reason_from_string(std::string_view name) {
  if (name == "stop") return FinishReason::stop;
  if (name == "length") return FinishReason::length;
  if (name == "filtered") return FinishReason::filtered;
  return FinishReason::other;
}

void ChatRequest::validate(std::size_t image_payload_limit) const {
  if (model_id.empty()) {
    throw ContractError("chat request needs a model id");
  }
  bool has_text = false;
  std::size_t image_bytes = 0;
  for (const auto& part : parts) {
    if (std::holds_alternative<TextPart>(part)) {
      has_text = true;
    } else {
      image_bytes += std::get<ImagePart>(part).bytes.size();
    }
  }
  if (!has_text) {
    throw ContractError("chat request needs at least one text part");
  }
  if (image_bytes > image_payload_limit) {
    throw ContractError("image payload " + std::to_string(image_bytes) +
                        " exceeds the limit of " +
                        std::to_string(image_payload_limit) + " bytes");
  }
}

std::string cache_key(const ChatRequest& request) {
  std::string stream;
  stream += "biobench.chat.v1\n";
  stream += "model=" + request.model_id + "\n";
  stream += "temperature=" + double_repr(request.decoding.temperature) + "\n";
  stream += "max_tokens=" + std::to_string(request.decoding.max_tokens) + "\n";
  for (const auto& part : request.parts) {
    if (const auto* text = std::get_if<TextPart>(&part)) {
      stream += "text:" + std::to_string(text->text.size()) + "\n";
      stream += text->text;
      stream += "\n";
    } else {
      const auto& image = std::get<ImagePart>(part);
      stream += "image:" + image.media_type + ":" + sha256_hex(image.bytes) +
                "\n";
    }
  }
  return sha256_hex(stream);
}

std::chrono::milliseconds SystemClock::now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(std::chrono::milliseconds duration) {
  std::this_thread::sleep_for(duration);
}

std::chrono::milliseconds ManualClock::now() {
  std::lock_guard<std::mutex> lock(mutex_);
  return now_;
}

void ManualClock::sleep_for(std::chrono::milliseconds duration) {
  advance(duration);
}

void ManualClock::advance(std::chrono::milliseconds duration) {
  std::lock_guard<std::mutex> lock(mutex_);
  now_ += duration;
}

RateLimiter::RateLimiter(int requests_per_minute, Clock& clock)
    : limit_(requests_per_minute), clock_(clock) {
  if (requests_per_minute <= 0) {
    throw ContractError("requests_per_minute must be positive");
  }
}

void RateLimiter::acquire() {
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    auto now = clock_.now();
    while (!window_.empty() && window_.front() + kWindow <= now) {
      window_.pop_front();
    }
    if (static_cast<int>(window_.size()) < limit_) {
      window_.push_back(now);
      return;
    }
    // Queue later callers behind the same wait; the limit is global.
    clock_.sleep_for(window_.front() + kWindow - now);
  }
}

std::string MockProvider::script_key(const ChatRequest& request) {
  std::string key;
  for (const auto& part : request.parts) {
    if (!key.empty()) key += "\n";
    if (const auto* text = std::get_if<TextPart>(&part)) {
      key += text->text;
    } else {
      key += "[image:" + sha256_hex(std::get<ImagePart>(part).bytes) + "]";
    }
  }
  return key;
}

void MockProvider::script(const std::string& key, std::string response_text) {
  script(key, std::vector<ProviderReply>{
                  {200, std::move(response_text), FinishReason::stop, ""}});
}

void MockProvider::script(const std::string& key,
                          std::vector<ProviderReply> replies) {
  if (replies.empty()) {
    throw ContractError("scripted reply list must be non-empty");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  scripts_[key] = std::move(replies);
  cursors_[key] = 0;
}

void MockProvider::set_default(ProviderReply reply) {
  std::lock_guard<std::mutex> lock(mutex_);
  default_reply_ = std::move(reply);
}

ProviderReply MockProvider::complete(const ChatRequest& request) {
  std::string key = script_key(request);
  std::lock_guard<std::mutex> lock(mutex_);
  log_.push_back(key);
  auto it = scripts_.find(key);
  if (it == scripts_.end()) {
    if (default_reply_) return *default_reply_;
    throw MockScriptError("unscripted request key:\n" + key);
  }
  std::size_t index = cursors_[key];
  if (index + 1 < it->second.size()) cursors_[key] = index + 1;
  return it->second[std::min(index, it->second.size() - 1)];
}

std::vector<std::string> MockProvider::invocation_log() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return log_;
}

std::size_t MockProvider::call_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return log_.size();
}

namespace {

ProviderReply reply_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    return {200, j.get<std::string>(), FinishReason::stop, ""};
  }
  ProviderReply reply;
  reply.status = j.value("status", 200);
  reply.text = j.value("text", std::string());
  reply.finish_reason =
      finish_reason_from_string(j.value("finish_reason", "stop"));
  reply.detail = j.value("detail", std::string());
  return reply;
}

}  // namespace

std::shared_ptr<MockProvider> MockProvider::from_json(const nlohmann::json& j) {
  auto provider = std::make_shared<MockProvider>();
  if (j.contains("default")) {
    provider->set_default(reply_from_json(j.at("default")));
  }
  if (j.contains("entries")) {
    for (const auto& [key, value] : j.at("entries").items()) {
      if (value.is_array()) {
        std::vector<ProviderReply> replies;
        for (const auto& item : value) replies.push_back(reply_from_json(item));
        provider->script(key, std::move(replies));
      } else {
        provider->script(key,
                         std::vector<ProviderReply>{reply_from_json(value)});
      }
    }
  }
  return provider;
}

std::string base64_encode(std::string_view bytes) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    std::uint32_t chunk = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                          static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(alphabet[(chunk >> 18) & 0x3F]);
    out.push_back(alphabet[(chunk >> 12) & 0x3F]);
    out.push_back(alphabet[(chunk >> 6) & 0x3F]);
    out.push_back(alphabet[chunk & 0x3F]);
    i += 3;
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t chunk = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(alphabet[(chunk >> 18) & 0x3F]);
    out.push_back(alphabet[(chunk >> 12) & 0x3F]);
    out += "==";
  } else if (rest == 2) {
    std::uint32_t chunk = (static_cast<unsigned char>(bytes[i]) << 16) |
                          (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(alphabet[(chunk >> 18) & 0x3F]);
    out.push_back(alphabet[(chunk >> 12) & 0x3F]);
    out.push_back(alphabet[(chunk >> 6) & 0x3F]);
    out.push_back('=');
  }
  return out;
}

nlohmann::json chat_completions_body(const ChatRequest& request) {
  nlohmann::json content = nlohmann::json::array();
  for (const auto& part : request.parts) {
    if (const auto* text = std::get_if<TextPart>(&part)) {
      content.push_back({{"type", "text"}, {"text", text->text}});
    } else {
      const auto& image = std::get<ImagePart>(part);
      std::string uri = "data:" + image.media_type + ";base64," +
                        base64_encode(image.bytes);
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", uri}}}});
    }
  }
  nlohmann::json body;
  body["model"] = request.model_id;
  body["temperature"] = request.decoding.temperature;
  body["max_tokens"] = request.decoding.max_tokens;
  body["messages"] = nlohmann::json::array(
      {{{"role", "user"}, {"content", std::move(content)}}});
  return body;
}

ProviderReply parse_chat_completions_reply(int status, const std::string& body) {
  if (status != 200) {
    ProviderReply reply;
    reply.status = status;
    reply.detail = body.size() > 512 ? body.substr(0, 512) + "..." : body;
    return reply;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("undecodable provider response: ") +
                        e.what());
  }
  if (!j.contains("choices") || !j.at("choices").is_array() ||
      j.at("choices").empty()) {
    throw ProviderError("provider response has no choices");
  }
  const auto& choice = j.at("choices").at(0);
  const auto& message = choice.at("message");
  if (!message.contains("content") || !message.at("content").is_string()) {
    throw ProviderError("provider response is missing message text");
  }
  ProviderReply reply;
  reply.status = 200;
  reply.text = message.at("content").get<std::string>();
  reply.finish_reason = FinishReason::other;
  if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
    std::string reason = choice.at("finish_reason").get<std::string>();
    if (reason == "stop") reply.finish_reason = FinishReason::stop;
    else if (reason == "length") reply.finish_reason = FinishReason::length;
    else if (reason == "content_filter") reply.finish_reason = FinishReason::filtered;
  }
  return reply;
}

HttpProvider::HttpProvider(std::string endpoint_url, std::string credential,
                           int timeout_seconds)
    : endpoint_url_(std::move(endpoint_url)),
      credential_(std::move(credential)),
      timeout_seconds_(timeout_seconds) {}

ProviderReply HttpProvider::complete(const ChatRequest& request) {
  static const std::regex kUrl(R"((https?)://([^/]+)(/.*)?)",
                               std::regex::icase);
  std::smatch match;
  if (!std::regex_match(endpoint_url_, match, kUrl)) {
    throw ConfigError("endpoint URL must be http(s)://host[:port]/path: " +
                      endpoint_url_);
  }
  std::string base = match[1].str() + "://" + match[2].str();
  std::string path = match[3].matched ? match[3].str() : "/";

  httplib::Client client(base);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_write_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (!credential_.empty()) {
    headers.emplace("Authorization", "Bearer " + credential_);
  }
  auto result = client.Post(path, headers, chat_completions_body(request).dump(),
                            "application/json");
  if (!result) {
    ProviderReply reply;
    reply.status = 0;
    reply.detail = httplib::to_string(result.error());
    return reply;
  }
  return parse_chat_completions_reply(result->status, result->body);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
  if (key.size() < 4) throw ContractError("cache key too short");
  return dir_ / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
}

std::optional<ChatResponse> ResponseCache::lookup(
    const std::string& key, std::vector<std::string>* warnings) const {
  auto path = entry_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("key").get<std::string>() != key) {
      throw ParseError("cache entry key mismatch");
    }
    ChatResponse response;
    response.text = j.at("text").get<std::string>();
    response.finish_reason =
        finish_reason_from_string(j.at("finish_reason").get<std::string>());
    response.latency_ms = j.at("latency_ms").get<std::int64_t>();
    response.from_cache = true;
    return response;
  } catch (const std::exception& e) {
    if (warnings) {
      warnings->push_back("ignoring undecodable cache entry " + path.string() +
                          ": " + e.what());
    }
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key,
                          const ChatResponse& response) const {
  auto path = entry_path(key);
  std::filesystem::create_directories(path.parent_path());
  nlohmann::json j;
  j["schema"] = 1;
  j["key"] = key;
  j["text"] = response.text;
  j["finish_reason"] = std::string(to_string(response.finish_reason));
  j["latency_ms"] = response.latency_ms;

  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);  // last rename wins
}

std::size_t ResponseCache::entry_count() const {
  std::size_t count = 0;
  if (!std::filesystem::exists(dir_)) return 0;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      ++count;
    }
  }
  return count;
}

GatewayClient::GatewayClient(Provider& provider, ProviderConfig config,
                             Clock& clock)
    : provider_(provider),
      config_(std::move(config)),
      clock_(clock),
      limiter_(config_.requests_per_minute, clock) {}

ChatResponse GatewayClient::send(const ChatRequest& request) {
  request.validate(config_.image_payload_limit);
  std::vector<std::string> attempts;
  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    auto start = clock_.now();
    ProviderReply reply = provider_.complete(request);
    auto latency = clock_.now() - start;

    if (reply.status == 200) {
      ChatResponse response;
      response.text = reply.text;
      response.finish_reason = reply.finish_reason;
      response.latency_ms = latency.count();
      response.from_cache = false;
      return response;
    }
    if (reply.status == 401 || reply.status == 403) {
      throw AuthError(reply.status, reply.detail);
    }
    bool retryable =
        reply.status == 0 || reply.status == 429 || reply.status >= 500;
    if (!retryable) {
      throw ProviderError("provider rejected the request (HTTP " +
                          std::to_string(reply.status) + "): " + reply.detail);
    }
    attempts.push_back(
        "attempt " + std::to_string(attempt + 1) + ": " +
        (reply.status == 0 ? "transport failure"
                           : "HTTP " + std::to_string(reply.status)) +
        (reply.detail.empty() ? "" : ": " + reply.detail));
    if (attempt >= config_.max_retries) {
      throw TransportError(std::move(attempts));
    }
    std::int64_t backoff =
        std::min<std::int64_t>(kBackoffCapMs,
                               static_cast<std::int64_t>(config_.backoff_base_ms)
                                   << attempt);
    clock_.sleep_for(std::chrono::milliseconds(backoff));
  }
}

ChatResponse GatewayClient::send_cached(const ChatRequest& request,
                                        const ResponseCache& cache) {
  std::string key = cache_key(request);
  if (auto hit = cache.lookup(key)) {
    return *hit;
  }
  ChatResponse response = send(request);
  cache.store(key, response);
  return response;
}

}  // namespace biobench
