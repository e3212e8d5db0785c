#pragma once

// Shared helpers for the test suites: scratch directories, fixture
// loading, a pairs-file writer (inverse of the parser, used for
// round-trip checks) and the 12-trial verification fixture.

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biobench/config.hpp"
#include "biobench/errors.hpp"
#include "biobench/gateway.hpp"
#include "biobench/protocol.hpp"
#include "biobench/runner.hpp"

namespace testsupport {

inline std::filesystem::path unique_temp_dir(const std::string& tag) {
  static std::atomic<std::uint64_t> counter{0};
  auto path = std::filesystem::temp_directory_path() /
              ("biobench-" + tag + "-" + std::to_string(::getpid()) + "-" +
               std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(path);
  return path;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) : path(unique_temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline std::filesystem::path fixtures_dir() {
  return std::filesystem::path(BIOBENCH_FIXTURES_DIR);
}

// Transcript fixtures are stored without a trailing newline; editors may
// add one, so strip a single trailing '\n'.
inline std::string read_transcript(const std::string& name) {
  std::string text = read_file(fixtures_dir() / "transcripts" / name);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

// Inverse of the pairs-file parser for protocols whose image paths follow
// the "<root>/<name>/<name>_%04d.jpg" layout. Genuine and imposter counts
// must both be divisible by `folds`.
inline std::string write_lfw_pairs_text(const biobench::Protocol& protocol,
                                        std::size_t folds) {
  using biobench::SamePerson;
  auto decompose = [](const std::string& path) {
    std::filesystem::path p(path);
    std::string stem = p.stem().string();  // "<name>_NNNN"
    auto underscore = stem.rfind('_');
    if (underscore == std::string::npos) {
      throw biobench::ContractError("path does not follow the pairs layout: " +
                                    path);
    }
    return std::make_pair(stem.substr(0, underscore),
                          std::stoul(stem.substr(underscore + 1)));
  };
  std::size_t genuine = 0;
  for (const auto& trial : protocol.trials) {
    if (std::get<SamePerson>(trial.truth).value) ++genuine;
  }
  std::size_t imposter = protocol.trials.size() - genuine;
  if (genuine != imposter || folds == 0 || genuine % folds != 0) {
    throw biobench::ContractError("protocol does not fit the fold layout");
  }
  std::ostringstream out;
  out << folds << "\t" << genuine / folds << "\n";
  for (const auto& trial : protocol.trials) {
    auto [name_a, index_a] = decompose(trial.images[0].path);
    auto [name_b, index_b] = decompose(trial.images[1].path);
    if (std::get<SamePerson>(trial.truth).value) {
      out << name_a << "\t" << index_a << "\t" << index_b << "\n";
    } else {
      out << name_a << "\t" << index_a << "\t" << name_b << "\t" << index_b
          << "\n";
    }
  }
  return out.str();
}

// Ledger lines with the volatile timestamp fields removed, for
// byte-comparison "modulo timestamps".
inline std::string normalize_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    j.erase("started_at");
    j.erase("finished_at");
    out << j.dump() << "\n";
  }
  return out.str();
}

// The 12-trial verification fixture: tiny distinct image files, scripted
// primary responses covering every outcome class, offline judging. The
// expected outcomes live in fixtures/ver12_expected.csv.
struct Ver12Fixture {
  biobench::Protocol protocol;
  std::vector<std::string> responses;  // by trial ordinal
  biobench::RunConfig config;

  static Ver12Fixture build(const std::filesystem::path& root,
                            int parallelism = 1) {
    Ver12Fixture fixture;
    const bool truths[12] = {true, true,  false, false, true, false,
                             true, false, true,  false, true, false};
    fixture.responses = {
        "Positive. The two photos clearly show the same person.",
        "Negative. They are different people.",
        "Positive match, same person.",
        "The comparison reads negative, different identities.",
        "Neutral. Hard to commit either way.",
        "The two faces exhibit similar bone structure but the evidence is "
        "limited.",
        read_transcript("refusal_privacy.txt"),
        "",
        "Overall this reads positive: same person.",
        "not positive, the faces differ too much.",
        "It is not negative; the pairing looks right.",
        "Definitely positive.",
    };
    std::ostringstream csv;
    for (int i = 0; i < 12; ++i) {
      char a[32], b[32];
      std::snprintf(a, sizeof a, "pair%02d-a.jpg", i);
      std::snprintf(b, sizeof b, "pair%02d-b.jpg", i);
      write_file(root / "img" / a, "image-bytes-" + std::string(a));
      write_file(root / "img" / b, "image-bytes-" + std::string(b));
      csv << a << "," << b << "," << (truths[i] ? "1" : "0") << "\n";
    }
    fixture.protocol =
        biobench::parse_pair_list(csv.str(), root / "img", "ver12");

    fixture.config.protocol.name = "ver12";
    fixture.config.protocol.parser = "pair_list";
    fixture.config.judge = biobench::JudgeMode::offline;
    fixture.config.parallelism = parallelism;
    fixture.config.run_dir = root / "run";
    fixture.config.cache_dir = root / "cache";
    fixture.config.provider.kind = "mock";
    fixture.config.provider.model_id = "mock-model";
    fixture.config.provider.requests_per_minute = 100000;
    return fixture;
  }

  // Scripts each trial's primary response on the mock provider.
  void script(biobench::MockProvider& mock,
              const biobench::PromptSet& templates) const {
    for (std::size_t i = 0; i < protocol.trials.size(); ++i) {
      const auto& spec = protocol.trials[i];
      auto prompt = biobench::render_primary(
          templates.get(spec.task, biobench::PromptStage::primary), spec);
      auto request = biobench::build_chat_request(prompt.text, spec.images,
                                                  config.provider);
      mock.script(biobench::MockProvider::script_key(request), responses[i]);
    }
  }
};

// spec_id -> outcome pairs from an expectation CSV.
inline std::vector<std::pair<std::string, std::string>> read_expectations(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto comma = line.find(',');
    out.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  return out;
}

}  // namespace testsupport
