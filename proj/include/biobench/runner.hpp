#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "biobench/config.hpp"
#include "biobench/gateway.hpp"
#include "biobench/grading.hpp"
#include "biobench/ledger.hpp"
#include "biobench/prompts.hpp"
#include "biobench/protocol.hpp"

namespace biobench {

// Media type inferred from the file extension; defaults to image/jpeg.
std::string media_type_for(const std::string& path);

// Text part first, then the trial's images in order.
ChatRequest build_chat_request(const std::string& prompt_text,
                               const std::vector<ImageRef>& images,
                               const ProviderSection& provider);

// Fetches a judge completion for a rendered prompt. Returns the judge
// text, "" when the provider answered with empty text, nullopt when the
// call failed entirely. AuthError propagates.
using JudgeFn =
    std::function<std::optional<std::string>(const RenderedPrompt&)>;

// Grades one primary response into `record` (verdict, outcome,
// judge_response). `judge` is only invoked for llm-mode verification,
// gender and age trials; classification always parses the primary text.
void grade_into(TrialRecord& record, const TrialSpec& spec,
                const std::optional<std::vector<std::string>>& label_set,
                const std::string& primary_text, JudgeMode mode,
                const GradingRules& rules, const PromptSet& templates,
                const JudgeFn& judge);

struct ExecuteOptions {
  // Stop dispatching once this many records were appended; later
  // completions are discarded. Simulates an interrupted run.
  std::optional<std::size_t> stop_after;
};

struct ExecuteStats {
  std::size_t appended = 0;
};

// Runs every pending trial through the two-stage pipeline with
// config.parallelism workers. Records are appended in plan order
// regardless of completion order, so ledgers are deterministic up to
// timestamps. Per-trial failures become provider_failure records; only
// AuthError halts the run (ledger stays valid up to the halt).
ExecuteStats execute_run(const Protocol& protocol,
                         const std::vector<TrialSpec>& pending,
                         const RunConfig& config, const PromptSet& templates,
                         Provider& provider, Clock& clock,
                         const ResponseCache& cache, LedgerWriter& writer,
                         const ExecuteOptions& options = {});

// Re-grades ledgered primary responses under a different judge mode.
// Primary responses are never mutated and never re-fetched; llm mode
// issues judge calls only (through `client` + `cache`).
std::vector<TrialRecord> regrade_records(
    const std::vector<TrialRecord>& records, const Protocol& protocol,
    JudgeMode mode, const GradingRules& rules, const PromptSet& templates,
    const ProviderSection& provider_section, GatewayClient* client,
    const ResponseCache* cache);

}  // namespace biobench
