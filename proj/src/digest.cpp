#include "biobench/digest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "biobench/errors.hpp"

namespace biobench {

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingFilesError({path});
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

namespace {
std::mutex g_digest_mutex;
std::unordered_map<std::string, std::string>& digest_memo() {
  static std::unordered_map<std::string, std::string> memo;
  return memo;
}
}  // namespace

std::string file_digest_hex(const std::string& path) {
  {
    std::lock_guard<std::mutex> lock(g_digest_mutex);
    auto it = digest_memo().find(path);
    if (it != digest_memo().end()) {
      return it->second;
    }
  }
  // Hash outside the lock; duplicate computation is allowed and identical.
  std::string digest = sha256_hex(read_file_bytes(path));
  std::lock_guard<std::mutex> lock(g_digest_mutex);
  return digest_memo().emplace(path, std::move(digest)).first->second;
}

std::string iso_utc_now() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char date[24];
  std::strftime(date, sizeof date, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[32];
  std::snprintf(out, sizeof out, "%s.%03dZ", date,
                static_cast<int>(ms.count()));
  return out;
}

}  // namespace biobench
