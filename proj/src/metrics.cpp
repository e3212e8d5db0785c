#include "biobench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "biobench/errors.hpp"

namespace biobench {

namespace {

constexpr std::string_view kGapCell = "—";  // em dash
constexpr std::string_view kUndefinedCell = "n/a";

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.emplace_back(text.substr(start));
      break;
    }
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

bool is_comment_or_blank(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::optional<double> ratio(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) return std::nullopt;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

}  // namespace

std::size_t OutcomeCounts::total() const {
  return correct + incorrect + inconclusive + excluded_refusal +
         excluded_low_res + provider_failure;
}

std::size_t& OutcomeCounts::slot(Outcome outcome) {
  switch (outcome) {
    case Outcome::correct: return correct;
    case Outcome::incorrect: return incorrect;
    case Outcome::inconclusive: return inconclusive;
    case Outcome::excluded_refusal: return excluded_refusal;
    case Outcome::excluded_low_res: return excluded_low_res;
    case Outcome::provider_failure: return provider_failure;
  }
  throw ContractError("unknown outcome");
}

std::size_t OutcomeCounts::slot(Outcome outcome) const {
  return const_cast<OutcomeCounts*>(this)->slot(outcome);
}

MetricsReport aggregate(const std::vector<TrialRecord>& records,
                        const Protocol& protocol) {
  std::unordered_map<std::string, const TrialSpec*> by_id;
  by_id.reserve(protocol.trials.size());
  for (const auto& trial : protocol.trials) {
    by_id.emplace(trial.id, &trial);
  }

  MetricsReport report;
  report.protocol_name = protocol.name;
  report.task = protocol.task;

  std::unordered_map<std::string, PerClassCounts> per_class;
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& record : records) {
    auto it = by_id.find(record.spec_id);
    if (it == by_id.end()) {
      throw IntegrityError("record references unknown trial " + record.spec_id);
    }
    if (!seen.insert(record.spec_id).second) {
      throw IntegrityError("duplicate record for trial " + record.spec_id);
    }
    ++report.counts.slot(record.outcome);
    if (protocol.task == Task::classification) {
      const auto& label = std::get<ClassLabel>(it->second->truth).value;
      auto& slot = per_class[label];
      if (record.outcome == Outcome::correct) ++slot.correct;
      if (record.outcome == Outcome::incorrect) ++slot.incorrect;
      if (record.outcome == Outcome::excluded_low_res) ++slot.low_res;
    }
  }

  report.n_total = report.counts.total();
  const auto& c = report.counts;
  report.raw_accuracy = ratio(c.correct, report.n_total);
  report.strict_accuracy =
      ratio(c.correct, c.correct + c.incorrect + c.inconclusive);
  report.adjusted_accuracy = ratio(c.correct, c.correct + c.incorrect);

  if (protocol.task == Task::classification) {
    for (const auto& label : *protocol.label_set) {
      report.per_class.emplace_back(label, per_class[label]);
    }
  }
  return report;
}

std::optional<double> exclusion_adjusted_accuracy(const MetricsReport& report) {
  if (report.task != Task::classification) {
    throw ContractError(
        "exclusion-adjusted accuracy is defined for classification reports");
  }
  const auto& c = report.counts;
  std::size_t excluded =
      c.excluded_low_res + c.excluded_refusal + c.provider_failure;
  return ratio(c.correct, report.n_total - excluded);
}

std::optional<double> ComparisonRow::cell(std::string_view protocol) const {
  for (const auto& [name, value] : cells) {
    if (name == protocol) return value;
  }
  return std::nullopt;
}

std::vector<ComparisonRow> parse_baseline_csv(std::string_view csv_text) {
  std::vector<ComparisonRow> rows;
  auto lines = split_lines(csv_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_comment_or_blank(lines[i])) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = lines[i].find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(lines[i].substr(start));
        break;
      }
      fields.push_back(lines[i].substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 3) {
      throw ParseError("expected \"method,protocol,accuracy_percent\"", i + 1);
    }
    double percent = 0;
    try {
      std::size_t used = 0;
      percent = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw ParseError("accuracy_percent is not a number: " + fields[2], i + 1);
    }
    auto it = std::find_if(rows.begin(), rows.end(), [&](const ComparisonRow& r) {
      return r.method_name == fields[0];
    });
    if (it == rows.end()) {
      rows.push_back({fields[0], {}});
      it = rows.end() - 1;
    }
    it->cells.emplace_back(fields[1], percent);
  }
  return rows;
}

ComparisonTable comparison_table(const std::vector<MetricsReport>& reports,
                                 const std::vector<ComparisonRow>& baselines,
                                 const std::string& method_name,
                                 std::vector<std::string>* warnings) {
  ComparisonTable table;
  auto add_column = [&](const std::string& name) {
    if (std::find(table.columns.begin(), table.columns.end(), name) ==
        table.columns.end()) {
      table.columns.push_back(name);
    }
  };
  std::unordered_set<std::string> report_names;
  for (const auto& report : reports) report_names.insert(report.protocol_name);

  for (const auto& row : baselines) {
    for (const auto& [protocol, value] : row.cells) {
      if (!report_names.count(protocol) && warnings) {
        warnings->push_back("baseline row \"" + row.method_name +
                            "\" references protocol \"" + protocol +
                            "\" with no matching report");
      }
      add_column(protocol);
    }
  }
  for (const auto& report : reports) add_column(report.protocol_name);

  table.rows = baselines;
  if (!reports.empty()) {
    ComparisonRow harness_row;
    harness_row.method_name = method_name;
    for (const auto& report : reports) {
      if (report.strict_accuracy) {
        harness_row.cells.emplace_back(report.protocol_name,
                                       *report.strict_accuracy * 100.0);
      }
    }
    table.rows.push_back(std::move(harness_row));
  }
  return table;
}

RenderFormat render_format_from_string(std::string_view name) {
  if (name == "markdown") return RenderFormat::markdown;
  if (name == "csv") return RenderFormat::csv;
  if (name == "json") return RenderFormat::json;
  throw ParseError("unknown render format: " + std::string(name));
}

std::string percent_2dp(double percent_value) {
  // Half-up at two decimals; llround rounds halves away from zero, which
  // coincides for the non-negative values rendered here.
  long long scaled = std::llround(percent_value * 100.0);
  long long whole = scaled / 100;
  long long frac = std::llabs(scaled % 100);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", whole, frac);
  return buf;
}

std::string fraction_as_percent_2dp(double fraction) {
  return percent_2dp(fraction * 100.0);
}

std::string accuracy_cell(const std::optional<double>& fraction) {
  if (!fraction) return std::string(kUndefinedCell);
  return fraction_as_percent_2dp(*fraction);
}

namespace {

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["protocol"] = report.protocol_name;
  j["task"] = std::string(to_string(report.task));
  j["n_total"] = report.n_total;
  nlohmann::json counts;
  counts["correct"] = report.counts.correct;
  counts["incorrect"] = report.counts.incorrect;
  counts["inconclusive"] = report.counts.inconclusive;
  counts["excluded_refusal"] = report.counts.excluded_refusal;
  counts["excluded_low_res"] = report.counts.excluded_low_res;
  counts["provider_failure"] = report.counts.provider_failure;
  j["counts"] = std::move(counts);
  auto acc = [](const std::optional<double>& value) {
    return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
  };
  j["raw_accuracy"] = acc(report.raw_accuracy);
  j["strict_accuracy"] = acc(report.strict_accuracy);
  j["adjusted_accuracy"] = acc(report.adjusted_accuracy);
  if (report.task == Task::classification) {
    j["exclusion_adjusted_accuracy"] = acc(exclusion_adjusted_accuracy(report));
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& [label, counts_for_label] : report.per_class) {
      per_class.push_back({{"label", label},
                           {"correct", counts_for_label.correct},
                           {"incorrect", counts_for_label.incorrect},
                           {"low_res", counts_for_label.low_res}});
    }
    j["per_class"] = std::move(per_class);
  }
  return j;
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "# report\n";
  out << "metric,value\n";
  out << "protocol," << report.protocol_name << "\n";
  out << "task," << to_string(report.task) << "\n";
  out << "n_total," << report.n_total << "\n";
  out << "correct," << report.counts.correct << "\n";
  out << "incorrect," << report.counts.incorrect << "\n";
  out << "inconclusive," << report.counts.inconclusive << "\n";
  out << "excluded_refusal," << report.counts.excluded_refusal << "\n";
  out << "excluded_low_res," << report.counts.excluded_low_res << "\n";
  out << "provider_failure," << report.counts.provider_failure << "\n";
  out << "raw_accuracy_percent," << accuracy_cell(report.raw_accuracy) << "\n";
  out << "strict_accuracy_percent," << accuracy_cell(report.strict_accuracy)
      << "\n";
  out << "adjusted_accuracy_percent,"
      << accuracy_cell(report.adjusted_accuracy) << "\n";
  if (report.task == Task::classification) {
    out << "exclusion_adjusted_accuracy_percent,"
        << accuracy_cell(exclusion_adjusted_accuracy(report)) << "\n";
    out << "# per_class\n";
    out << "label,correct,incorrect,low_res\n";
    for (const auto& [label, counts] : report.per_class) {
      out << label << "," << counts.correct << "," << counts.incorrect << ","
          << counts.low_res << "\n";
    }
  }
  return out.str();
}

std::string report_to_markdown(const MetricsReport& report) {
  std::ostringstream out;
  out << "# " << report.protocol_name << " (" << to_string(report.task)
      << ")\n\n";
  out << "| metric | value |\n";
  out << "| --- | --- |\n";
  out << "| n_total | " << report.n_total << " |\n";
  out << "| correct | " << report.counts.correct << " |\n";
  out << "| incorrect | " << report.counts.incorrect << " |\n";
  out << "| inconclusive | " << report.counts.inconclusive << " |\n";
  out << "| excluded_refusal | " << report.counts.excluded_refusal << " |\n";
  out << "| excluded_low_res | " << report.counts.excluded_low_res << " |\n";
  out << "| provider_failure | " << report.counts.provider_failure << " |\n";
  out << "| raw accuracy % | " << accuracy_cell(report.raw_accuracy) << " |\n";
  out << "| strict accuracy % | " << accuracy_cell(report.strict_accuracy)
      << " |\n";
  out << "| adjusted accuracy % | " << accuracy_cell(report.adjusted_accuracy)
      << " |\n";
  if (report.task == Task::classification) {
    out << "| exclusion-adjusted accuracy % | "
        << accuracy_cell(exclusion_adjusted_accuracy(report)) << " |\n";
    out << "\n| label | correct | incorrect | low_res |\n";
    out << "| --- | --- | --- | --- |\n";
    for (const auto& [label, counts] : report.per_class) {
      out << "| " << label << " | " << counts.correct << " | "
          << counts.incorrect << " | " << counts.low_res << " |\n";
    }
  }
  return out.str();
}

}  // namespace

std::string render(const MetricsReport& report, RenderFormat format) {
  switch (format) {
    case RenderFormat::json: return report_to_json(report).dump(2) + "\n";
    case RenderFormat::csv: return report_to_csv(report);
    case RenderFormat::markdown: return report_to_markdown(report);
  }
  throw ContractError("unknown render format");
}

std::string render(const ComparisonTable& table, RenderFormat format) {
  if (format == RenderFormat::json) {
    nlohmann::json j;
    j["columns"] = table.columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
      nlohmann::json cells;
      for (const auto& column : table.columns) {
        auto value = row.cell(column);
        cells[column] = value ? nlohmann::json(*value) : nlohmann::json(nullptr);
      }
      rows.push_back({{"method", row.method_name}, {"cells", std::move(cells)}});
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
  }

  std::ostringstream out;
  if (format == RenderFormat::csv) {
    out << "method";
    for (const auto& column : table.columns) out << "," << column;
    out << "\n";
    for (const auto& row : table.rows) {
      out << row.method_name;
      for (const auto& column : table.columns) {
        auto value = row.cell(column);
        out << "," << (value ? percent_2dp(*value) : std::string(kGapCell));
      }
      out << "\n";
    }
    return out.str();
  }

  out << "| Method |";
  for (const auto& column : table.columns) out << " " << column << " |";
  out << "\n| --- |";
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << " --- |";
  out << "\n";
  for (const auto& row : table.rows) {
    out << "| " << row.method_name << " |";
    for (const auto& column : table.columns) {
      auto value = row.cell(column);
      out << " " << (value ? percent_2dp(*value) : std::string(kGapCell))
          << " |";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace biobench
