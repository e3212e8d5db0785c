#include "biobench/ledger.hpp"

#include <sstream>

#include "biobench/errors.hpp"

namespace biobench {

nlohmann::json header_to_json(const LedgerHeader& header) {
  nlohmann::json j;
  j["kind"] = "header";
  j["version"] = header.version;
  j["config_digest"] = header.config_digest;
  j["protocol_digest"] = header.protocol_digest;
  j["protocol_name"] = header.protocol_name;
  j["judge_mode"] = header.judge_mode;
  j["model_id"] = header.model_id;
  return j;
}

LedgerHeader header_from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string()) != "header") {
    throw ParseError("ledger must start with a header line");
  }
  LedgerHeader header;
  header.version = j.at("version").get<int>();
  header.config_digest = j.at("config_digest").get<std::string>();
  header.protocol_digest = j.at("protocol_digest").get<std::string>();
  header.protocol_name = j.at("protocol_name").get<std::string>();
  header.judge_mode = j.at("judge_mode").get<std::string>();
  header.model_id = j.at("model_id").get<std::string>();
  return header;
}

bool RunLedger::has(const std::string& spec_id) const {
  for (const auto& record : records) {
    if (record.spec_id == spec_id) return true;
  }
  return false;
}

RunLedger read_ledger(const std::filesystem::path& path,
                      std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFilesError({path.string()});
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string content = std::move(buf).str();

  RunLedger ledger;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  std::unordered_set<std::string> seen;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    bool terminated = end != std::string::npos;
    std::string line =
        content.substr(start, terminated ? end - start : std::string::npos);
    start = terminated ? end + 1 : content.size();
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      if (!terminated) {
        // Interrupted append; the fragment never counted.
        if (warnings) {
          warnings->push_back("dropping truncated final ledger line " +
                              std::to_string(line_no));
        }
        break;
      }
      throw ParseError(std::string("undecodable ledger line: ") + e.what(),
                       line_no);
    }
    if (!have_header) {
      ledger.header = header_from_json(j);
      have_header = true;
      continue;
    }
    TrialRecord record = record_from_json(j);
    if (!seen.insert(record.spec_id).second) {
      throw IntegrityError("ledger holds two records for trial " +
                           record.spec_id);
    }
    ledger.records.push_back(std::move(record));
  }
  if (!have_header) {
    throw ParseError("ledger has no header line");
  }
  return ledger;
}

LedgerWriter::LedgerWriter(const std::filesystem::path& path,
                           const LedgerHeader& header) {
  bool fresh = !std::filesystem::exists(path) ||
               std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open ledger for append: " + path.string());
  if (fresh) {
    out_ << header_to_json(header).dump() << "\n";
    out_.flush();
  }
}

void LedgerWriter::append(const TrialRecord& record) {
  std::lock_guard<std::mutex> lock(mutex_);
  out_ << record_to_json(record).dump() << "\n";
  out_.flush();
  if (!out_) throw Error("ledger append failed");
}

std::vector<TrialSpec> plan(const Protocol& protocol, const RunLedger& ledger) {
  if (!ledger.records.empty() || !ledger.header.protocol_digest.empty()) {
    std::string live = protocol_digest(protocol);
    if (ledger.header.protocol_digest != live) {
      throw ResumeMismatchError(
          "ledger belongs to protocol digest " + ledger.header.protocol_digest +
          " but the live protocol digest is " + live);
    }
  }
  std::unordered_set<std::string> done;
  done.reserve(ledger.records.size());
  for (const auto& record : ledger.records) done.insert(record.spec_id);
  std::vector<TrialSpec> pending;
  for (const auto& trial : protocol.trials) {
    if (!done.count(trial.id)) pending.push_back(trial);
  }
  return pending;
}

}  // namespace biobench
