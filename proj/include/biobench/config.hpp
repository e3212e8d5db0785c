#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "biobench/gateway.hpp"
#include "biobench/grading.hpp"
#include "biobench/prompts.hpp"
#include "biobench/protocol.hpp"

namespace biobench {

enum class JudgeMode { llm, offline };

std::string_view to_string(JudgeMode mode);
JudgeMode judge_mode_from_string(std::string_view name);

struct ProtocolSourceConfig {
  std::string name = "protocol";
  std::string parser;  // lfw_pairs | pair_list | utkface | label_manifest
  std::filesystem::path source;
  std::filesystem::path image_root;
  Task task = Task::gender;  // label_manifest only
  std::optional<std::vector<std::string>> labels;
  std::optional<std::size_t> subsample_n;
  bool subsample_stratify = false;
};

struct ProviderSection {
  std::string kind = "http";  // http | mock
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string model_id = "gpt-4o";
  std::string credential_env = "BIOBENCH_API_KEY";
  std::string credential;  // resolved from the environment, never persisted
  std::filesystem::path mock_script;  // kind = mock
  double temperature = 0.0;
  int max_tokens = 512;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int requests_per_minute = 60;
  int timeout_seconds = 120;
};

struct RunConfig {
  ProtocolSourceConfig protocol;
  ProviderSection provider;
  JudgeMode judge = JudgeMode::offline;
  std::filesystem::path templates_file;  // optional overrides
  int parallelism = 1;
  std::filesystem::path run_dir = "run";
  std::filesystem::path cache_dir;  // defaults to <run_dir>/cache
  std::uint64_t seed = 0;
  GradingRules grading;
  std::string method_name = "GPT-4";
  std::filesystem::path baselines_csv;  // optional, report command

  std::filesystem::path ledger_path() const { return run_dir / "ledger.jsonl"; }
  std::filesystem::path reports_dir() const { return run_dir / "reports"; }
  std::filesystem::path effective_cache_dir() const {
    return cache_dir.empty() ? run_dir / "cache" : cache_dir;
  }
  ProviderConfig provider_config() const;
};

// Key/value config file: [section] headers, "key = value" entries, '#'
// comments, quoted strings, integers, floats, booleans and ["a", "b"]
// string arrays. Unknown sections or keys are errors. Relative paths are
// resolved against the config file's directory.
RunConfig parse_run_config(std::string_view text,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Resolves the credential env var (http providers only; empty stays empty).
void resolve_credential(RunConfig& config);

// Builds the protocol the config describes, applying subsampling when
// requested.
Protocol load_protocol(const RunConfig& config,
                       std::vector<std::string>* warnings = nullptr);

// Loads template overrides when configured, defaults otherwise.
PromptSet load_templates(const RunConfig& config,
                         ValidationReport* report = nullptr);

// Digest over the semantic run identity: model, decoding, judge mode,
// seed, protocol source, grading rules and template texts. Credentials,
// endpoints, rate/retry knobs, parallelism and directories stay out.
std::string config_digest(const RunConfig& config, const PromptSet& templates);

}  // namespace biobench
