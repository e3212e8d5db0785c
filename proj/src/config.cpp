#include "biobench/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "biobench/digest.hpp"
#include "biobench/errors.hpp"

namespace biobench {

namespace {

struct ConfigValue {
  enum class Kind { string, integer, floating, boolean, string_array };
  Kind kind = Kind::string;
  std::string string_value;
  std::int64_t int_value = 0;
  double float_value = 0;
  bool bool_value = false;
  std::vector<std::string> array_value;
  std::size_t line = 0;
};

std::string trim(std::string_view text) {
  std::size_t begin = 0, end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
    --end;
  }
  return std::string(text.substr(begin, end - begin));
}

ConfigValue parse_value(const std::string& raw, std::size_t line) {
  ConfigValue value;
  value.line = line;
  if (raw.empty()) {
    throw ConfigError("empty value (line " + std::to_string(line) + ")");
  }
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw ConfigError("unterminated string (line " + std::to_string(line) +
                        ")");
    }
    value.kind = ConfigValue::Kind::string;
    value.string_value = raw.substr(1, raw.size() - 2);
    return value;
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') {
      throw ConfigError("unterminated array (line " + std::to_string(line) +
                        ")");
    }
    value.kind = ConfigValue::Kind::string_array;
    std::string inner = trim(raw.substr(1, raw.size() - 2));
    std::size_t i = 0;
    while (i < inner.size()) {
      while (i < inner.size() &&
             (std::isspace(static_cast<unsigned char>(inner[i])) ||
              inner[i] == ',')) {
        ++i;
      }
      if (i >= inner.size()) break;
      if (inner[i] == '"') {
        std::size_t close = inner.find('"', i + 1);
        if (close == std::string::npos) {
          throw ConfigError("unterminated string in array (line " +
                            std::to_string(line) + ")");
        }
        value.array_value.push_back(inner.substr(i + 1, close - i - 1));
        i = close + 1;
      } else {
        // Bare scalar element (integers in offset pairs).
        std::size_t end = i;
        while (end < inner.size() && inner[end] != ',') ++end;
        value.array_value.push_back(trim(inner.substr(i, end - i)));
        i = end;
      }
    }
    return value;
  }
  if (raw == "true" || raw == "false") {
    value.kind = ConfigValue::Kind::boolean;
    value.bool_value = raw == "true";
    return value;
  }
  // Bare scalar: integer or float.
  try {
    std::size_t used = 0;
    if (raw.find('.') == std::string::npos &&
        raw.find('e') == std::string::npos &&
        raw.find('E') == std::string::npos) {
      value.kind = ConfigValue::Kind::integer;
      value.int_value = std::stoll(raw, &used);
    } else {
      value.kind = ConfigValue::Kind::floating;
      value.float_value = std::stod(raw, &used);
    }
    if (used != raw.size()) throw std::invalid_argument(raw);
  } catch (const std::exception&) {
    throw ConfigError("unreadable value \"" + raw + "\" (line " +
                      std::to_string(line) + ")");
  }
  return value;
}

class ConfigReader {
 public:
  ConfigReader(std::string_view text, std::filesystem::path base_dir)
      : base_dir_(std::move(base_dir)) {
    std::size_t line_no = 0;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      std::string stripped = trim(line);
      if (stripped.empty() || stripped.front() == '#') continue;
      if (stripped.front() == '[') {
        if (stripped.back() != ']') {
          throw ConfigError("unterminated section header (line " +
                            std::to_string(line_no) + ")");
        }
        section = trim(stripped.substr(1, stripped.size() - 2));
        continue;
      }
      auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("expected \"key = value\" (line " +
                          std::to_string(line_no) + ")");
      }
      std::string key = trim(stripped.substr(0, eq));
      std::string raw = trim(stripped.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("empty key (line " + std::to_string(line_no) + ")");
      }
      std::string full = section.empty() ? key : section + "." + key;
      if (values_.count(full)) {
        throw ConfigError("duplicate key \"" + full + "\" (line " +
                          std::to_string(line_no) + ")");
      }
      values_.emplace(full, parse_value(raw, line_no));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string take_string(const std::string& key, std::string fallback) {
    auto it = claim(key);
    if (!it) return fallback;
    if (it->kind != ConfigValue::Kind::string) {
      throw ConfigError("\"" + key + "\" must be a quoted string");
    }
    return it->string_value;
  }

  std::filesystem::path take_path(const std::string& key,
                                  std::filesystem::path fallback) {
    std::string raw = take_string(key, std::string());
    if (raw.empty()) return fallback;
    std::filesystem::path p(raw);
    return p.is_absolute() ? p : base_dir_ / p;
  }

  std::int64_t take_int(const std::string& key, std::int64_t fallback) {
    auto it = claim(key);
    if (!it) return fallback;
    if (it->kind != ConfigValue::Kind::integer) {
      throw ConfigError("\"" + key + "\" must be an integer");
    }
    return it->int_value;
  }

  double take_float(const std::string& key, double fallback) {
    auto it = claim(key);
    if (!it) return fallback;
    if (it->kind == ConfigValue::Kind::integer) {
      return static_cast<double>(it->int_value);
    }
    if (it->kind != ConfigValue::Kind::floating) {
      throw ConfigError("\"" + key + "\" must be a number");
    }
    return it->float_value;
  }

  bool take_bool(const std::string& key, bool fallback) {
    auto it = claim(key);
    if (!it) return fallback;
    if (it->kind != ConfigValue::Kind::boolean) {
      throw ConfigError("\"" + key + "\" must be true or false");
    }
    return it->bool_value;
  }

  std::optional<std::vector<std::string>> take_array(const std::string& key) {
    auto it = claim(key);
    if (!it) return std::nullopt;
    if (it->kind != ConfigValue::Kind::string_array) {
      throw ConfigError("\"" + key + "\" must be a [\"...\"] array");
    }
    return it->array_value;
  }

  void finish() const {
    for (const auto& [key, value] : values_) {
      if (!claimed_.count(key)) {
        throw ConfigError("unknown config key \"" + key + "\" (line " +
                          std::to_string(value.line) + ")");
      }
    }
  }

 private:
  std::optional<ConfigValue> claim(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    claimed_.insert(key);
    return it->second;
  }

  std::filesystem::path base_dir_;
  std::map<std::string, ConfigValue> values_;
  std::set<std::string> claimed_;
};

}  // namespace

std::string_view to_string(JudgeMode mode) {
  return mode == JudgeMode::llm ? "llm" : "offline";
}

JudgeMode judge_mode_from_string(std::string_view name) {
  if (name == "llm") return JudgeMode::llm;
  if (name == "offline") return JudgeMode::offline;
  throw ConfigError("judge mode must be \"llm\" or \"offline\", got \"" +
                    std::string(name) + "\"");
}

ProviderConfig RunConfig::provider_config() const {
  ProviderConfig config;
  config.endpoint_url = provider.endpoint_url;
  config.credential = provider.credential;
  config.max_retries = provider.max_retries;
  config.backoff_base_ms = provider.backoff_base_ms;
  config.requests_per_minute = provider.requests_per_minute;
  config.timeout_seconds = provider.timeout_seconds;
  return config;
}

RunConfig parse_run_config(std::string_view text,
                           const std::filesystem::path& base_dir) {
  ConfigReader reader(text, base_dir);
  RunConfig config;

  config.run_dir = reader.take_path("run.run_dir", config.run_dir);
  config.cache_dir = reader.take_path("run.cache_dir", config.cache_dir);
  config.judge = judge_mode_from_string(
      reader.take_string("run.judge", std::string(to_string(config.judge))));
  config.parallelism = static_cast<int>(
      reader.take_int("run.parallelism", config.parallelism));
  if (config.parallelism < 1) {
    throw ConfigError("run.parallelism must be at least 1");
  }
  config.seed = static_cast<std::uint64_t>(reader.take_int("run.seed", 0));
  config.method_name =
      reader.take_string("run.method_name", config.method_name);

  config.protocol.name =
      reader.take_string("protocol.name", config.protocol.name);
  config.protocol.parser = reader.take_string("protocol.parser", "");
  config.protocol.source = reader.take_path("protocol.source", {});
  config.protocol.image_root = reader.take_path("protocol.image_root", {});
  std::string task = reader.take_string("protocol.task", "");
  if (!task.empty()) config.protocol.task = task_from_string(task);
  config.protocol.labels = reader.take_array("protocol.labels");
  std::int64_t n = reader.take_int("protocol.subsample_n", -1);
  if (n >= 0) config.protocol.subsample_n = static_cast<std::size_t>(n);
  config.protocol.subsample_stratify =
      reader.take_bool("protocol.subsample_stratify", false);

  config.provider.kind =
      reader.take_string("provider.kind", config.provider.kind);
  if (config.provider.kind != "http" && config.provider.kind != "mock") {
    throw ConfigError("provider.kind must be \"http\" or \"mock\"");
  }
  config.provider.endpoint_url =
      reader.take_string("provider.endpoint", config.provider.endpoint_url);
  config.provider.model_id =
      reader.take_string("provider.model", config.provider.model_id);
  config.provider.credential_env = reader.take_string(
      "provider.credential_env", config.provider.credential_env);
  config.provider.mock_script =
      reader.take_path("provider.mock_script", config.provider.mock_script);
  config.provider.temperature =
      reader.take_float("provider.temperature", config.provider.temperature);
  config.provider.max_tokens = static_cast<int>(
      reader.take_int("provider.max_tokens", config.provider.max_tokens));
  config.provider.max_retries = static_cast<int>(
      reader.take_int("provider.max_retries", config.provider.max_retries));
  config.provider.backoff_base_ms = static_cast<int>(reader.take_int(
      "provider.backoff_base_ms", config.provider.backoff_base_ms));
  config.provider.requests_per_minute = static_cast<int>(reader.take_int(
      "provider.requests_per_minute", config.provider.requests_per_minute));
  config.provider.timeout_seconds = static_cast<int>(reader.take_int(
      "provider.timeout_seconds", config.provider.timeout_seconds));

  config.templates_file = reader.take_path("templates.file", {});

  if (auto refusal = reader.take_array("grading.refusal_patterns")) {
    config.grading.refusal_patterns = *refusal;
  }
  if (auto denial = reader.take_array("grading.denial_patterns")) {
    config.grading.denial_patterns = *denial;
  }
  auto decade_pair = [&](const std::string& key, int& lo, int& hi) {
    if (auto pair = reader.take_array(key)) {
      if (pair->size() != 2) {
        throw ConfigError("\"" + key + "\" must hold two offsets");
      }
      try {
        lo = std::stoi((*pair)[0]);
        hi = std::stoi((*pair)[1]);
      } catch (const std::exception&) {
        throw ConfigError("\"" + key + "\" offsets must be integers");
      }
    }
  };
  decade_pair("grading.decade_early", config.grading.decades.early_lo,
              config.grading.decades.early_hi);
  decade_pair("grading.decade_mid", config.grading.decades.mid_lo,
              config.grading.decades.mid_hi);
  decade_pair("grading.decade_late", config.grading.decades.late_lo,
              config.grading.decades.late_hi);
  decade_pair("grading.decade_bare", config.grading.decades.bare_lo,
              config.grading.decades.bare_hi);

  config.baselines_csv = reader.take_path("report.baselines", {});

  reader.finish();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

void resolve_credential(RunConfig& config) {
  if (config.provider.kind != "http") return;
  if (!config.provider.credential.empty()) return;
  if (config.provider.credential_env.empty()) return;
  if (const char* value = std::getenv(config.provider.credential_env.c_str())) {
    config.provider.credential = value;
  }
}

Protocol load_protocol(const RunConfig& config,
                       std::vector<std::string>* warnings) {
  const auto& p = config.protocol;
  Protocol protocol;
  if (p.parser == "lfw_pairs") {
    protocol = parse_lfw_pairs(read_file_bytes(p.source.string()),
                               p.image_root, p.name);
  } else if (p.parser == "pair_list") {
    protocol = parse_pair_list(read_file_bytes(p.source.string()),
                               p.image_root, p.name, warnings);
  } else if (p.parser == "utkface") {
    std::vector<std::string> filenames;
    for (const auto& entry : std::filesystem::directory_iterator(p.source)) {
      if (entry.is_regular_file()) {
        filenames.push_back(entry.path().filename().string());
      }
    }
    std::sort(filenames.begin(), filenames.end());
    std::vector<std::string> skipped;
    protocol = parse_utkface_dir(filenames, p.source, p.name, &skipped);
    if (warnings) {
      for (const auto& name : skipped) {
        warnings->push_back("skipped non-conforming file: " + name);
      }
    }
  } else if (p.parser == "protocol_json") {
    protocol = protocol_from_json(
        nlohmann::json::parse(read_file_bytes(p.source.string())));
  } else if (p.parser == "label_manifest") {
    protocol = parse_label_manifest(read_file_bytes(p.source.string()), p.task,
                                    p.labels, p.image_root, p.name);
  } else {
    throw ConfigError(
        "protocol.parser must be one of lfw_pairs, pair_list, utkface, "
        "label_manifest, protocol_json");
  }
  if (p.subsample_n) {
    protocol =
        subsample(protocol, *p.subsample_n, config.seed, p.subsample_stratify);
  }
  return protocol;
}

PromptSet load_templates(const RunConfig& config, ValidationReport* report) {
  if (config.templates_file.empty()) {
    if (report) *report = ValidationReport{};
    return PromptSet::defaults();
  }
  auto j = nlohmann::json::parse(read_file_bytes(config.templates_file.string()));
  return PromptSet::from_json(j, report);
}

std::string config_digest(const RunConfig& config, const PromptSet& templates) {
  nlohmann::json j;
  j["model"] = config.provider.model_id;
  j["temperature"] = config.provider.temperature;
  j["max_tokens"] = config.provider.max_tokens;
  j["judge"] = std::string(to_string(config.judge));
  j["seed"] = config.seed;
  nlohmann::json protocol;
  protocol["name"] = config.protocol.name;
  protocol["parser"] = config.protocol.parser;
  protocol["source"] = config.protocol.source.filename().string();
  protocol["subsample_n"] = config.protocol.subsample_n
                                ? nlohmann::json(*config.protocol.subsample_n)
                                : nlohmann::json(nullptr);
  protocol["subsample_stratify"] = config.protocol.subsample_stratify;
  j["protocol"] = std::move(protocol);
  nlohmann::json grading;
  grading["refusal_patterns"] = config.grading.refusal_patterns;
  grading["denial_patterns"] = config.grading.denial_patterns;
  grading["decades"] = {config.grading.decades.early_lo,
                        config.grading.decades.early_hi,
                        config.grading.decades.mid_lo,
                        config.grading.decades.mid_hi,
                        config.grading.decades.late_lo,
                        config.grading.decades.late_hi,
                        config.grading.decades.bare_lo,
                        config.grading.decades.bare_hi};
  j["grading"] = std::move(grading);
  j["templates"] = templates.to_json();
  return sha256_hex(j.dump());
}

}  // namespace biobench
