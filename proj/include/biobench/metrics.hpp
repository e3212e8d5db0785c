#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "biobench/grading.hpp"
#include "biobench/protocol.hpp"

namespace biobench {

struct OutcomeCounts {
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t inconclusive = 0;
  std::size_t excluded_refusal = 0;
  std::size_t excluded_low_res = 0;
  std::size_t provider_failure = 0;

  std::size_t total() const;
  std::size_t& slot(Outcome outcome);
  std::size_t slot(Outcome outcome) const;
  bool operator==(const OutcomeCounts&) const = default;
};

struct PerClassCounts {
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t low_res = 0;
  bool operator==(const PerClassCounts&) const = default;
};

// Accuracies are fractions in [0,1]; absent when their denominator is
// zero (rendered as "n/a", never as 0).
//   raw      = correct / n_total
//   strict   = correct / (correct + incorrect + inconclusive)
//   adjusted = correct / (correct + incorrect)
struct MetricsReport {
  std::string protocol_name;
  Task task = Task::verification;
  OutcomeCounts counts;
  std::size_t n_total = 0;
  std::optional<double> raw_accuracy;
  std::optional<double> strict_accuracy;
  std::optional<double> adjusted_accuracy;
  // Classification only, in label-set order.
  std::vector<std::pair<std::string, PerClassCounts>> per_class;

  bool operator==(const MetricsReport&) const = default;
};

// Order-independent aggregation. Every record must reference a protocol
// trial exactly once; violations raise IntegrityError.
MetricsReport aggregate(const std::vector<TrialRecord>& records,
                        const Protocol& protocol);

// correct / (n_total - excluded_low_res - excluded_refusal -
// provider_failure); classification reports only.
std::optional<double> exclusion_adjusted_accuracy(const MetricsReport& report);

// One method row of a comparison table; cells are percent values keyed by
// protocol name, kept in first-appearance order.
struct ComparisonRow {
  std::string method_name;
  std::vector<std::pair<std::string, double>> cells;

  std::optional<double> cell(std::string_view protocol) const;
  bool operator==(const ComparisonRow&) const = default;
};

struct ComparisonTable {
  std::vector<std::string> columns;  // protocol names
  std::vector<ComparisonRow> rows;
  bool operator==(const ComparisonTable&) const = default;
};

// Rows "method,protocol,accuracy_percent"; repeated methods merge into one
// row. The CSV dialect is the ingest one (comma, no quoting, '#' comments).
std::vector<ComparisonRow> parse_baseline_csv(std::string_view csv_text);

// Baseline rows first (input order), then one row per report under
// `method_name` carrying the strict accuracy. Baselines referencing
// protocols no report mentions still get a column; the gap cells render
// as an em dash.
ComparisonTable comparison_table(const std::vector<MetricsReport>& reports,
                                 const std::vector<ComparisonRow>& baselines,
                                 const std::string& method_name = "harness",
                                 std::vector<std::string>* warnings = nullptr);

enum class RenderFormat { markdown, csv, json };

RenderFormat render_format_from_string(std::string_view name);

// Deterministic byte output; JSON keys are sorted, CSV follows the ingest
// dialect.
std::string render(const MetricsReport& report, RenderFormat format);
std::string render(const ComparisonTable& table, RenderFormat format);

// Half-up to two decimals: percent_2dp(74.6875) == "74.69".
std::string percent_2dp(double percent_value);
// fraction_as_percent_2dp(0.7475) == "74.75".
std::string fraction_as_percent_2dp(double fraction);
// "n/a" for an absent accuracy.
std::string accuracy_cell(const std::optional<double>& fraction);

}  // namespace biobench
