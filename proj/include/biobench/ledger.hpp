#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "biobench/grading.hpp"
#include "biobench/protocol.hpp"

namespace biobench {

struct LedgerHeader {
  int version = 1;
  std::string config_digest;
  std::string protocol_digest;
  std::string protocol_name;
  std::string judge_mode;
  std::string model_id;

  bool operator==(const LedgerHeader&) const = default;
};

nlohmann::json header_to_json(const LedgerHeader& header);
LedgerHeader header_from_json(const nlohmann::json& j);

// Append-only run history: one header line, then one record per line.
struct RunLedger {
  LedgerHeader header;
  std::vector<TrialRecord> records;

  bool has(const std::string& spec_id) const;
};

// Tolerates a truncated final line (interrupted append): the fragment is
// skipped and reported through `warnings`.
RunLedger read_ledger(const std::filesystem::path& path,
                      std::vector<std::string>* warnings = nullptr);

// Serialized appends; each record is written as one line and flushed
// before append() returns.
class LedgerWriter {
 public:
  // Creates the file with a header line when absent; otherwise appends.
  LedgerWriter(const std::filesystem::path& path, const LedgerHeader& header);

  void append(const TrialRecord& record);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

// Trials without a ledger record, in protocol order. The ledger must
// belong to this protocol (digest match) unless it is empty.
std::vector<TrialSpec> plan(const Protocol& protocol, const RunLedger& ledger);

}  // namespace biobench
