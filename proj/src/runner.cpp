#include "biobench/runner.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "biobench/digest.hpp"
#include "biobench/errors.hpp"

namespace biobench {

std::string media_type_for(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  if (ext == "png") return "image/png";
  if (ext == "gif") return "image/gif";
  if (ext == "webp") return "image/webp";
  if (ext == "bmp") return "image/bmp";
  return "image/jpeg";
}

ChatRequest build_chat_request(const std::string& prompt_text,
                               const std::vector<ImageRef>& images,
                               const ProviderSection& provider) {
  ChatRequest request;
  request.model_id = provider.model_id;
  request.decoding.temperature = provider.temperature;
  request.decoding.max_tokens = provider.max_tokens;
  request.parts.push_back(TextPart{prompt_text});
  for (const auto& image : images) {
    request.parts.push_back(
        ImagePart{media_type_for(image.path), read_file_bytes(image.path)});
  }
  return request;
}

void grade_into(TrialRecord& record, const TrialSpec& spec,
                const std::optional<std::vector<std::string>>& label_set,
                const std::string& primary_text, JudgeMode mode,
                const GradingRules& rules, const PromptSet& templates,
                const JudgeFn& judge) {
  record.primary_response = primary_text;
  record.judge_response.reset();
  record.verdict = Verdict{};

  if (primary_text.empty()) {
    record.outcome = Outcome::provider_failure;
    return;
  }
  if (auto refused = match_refusal(primary_text, rules.refusal_patterns)) {
    record.verdict.kind = VerdictKind::refusal;
    record.verdict.evidence = *refused;
    record.outcome = Outcome::excluded_refusal;
    return;
  }

  if (spec.task == Task::classification) {
    if (!label_set) {
      throw ContractError("classification trial without a label set");
    }
    record.verdict =
        parse_class_label(primary_text, *label_set, rules.denial_patterns);
  } else if (mode == JudgeMode::llm) {
    const auto& judge_template = templates.get(spec.task, PromptStage::judge);
    RenderedPrompt judge_prompt =
        render_judge(judge_template, spec.truth, primary_text);
    std::optional<std::string> judge_text = judge(judge_prompt);
    if (!judge_text || judge_text->empty()) {
      if (judge_text) record.judge_response = *judge_text;
      record.outcome = Outcome::provider_failure;
      return;
    }
    record.judge_response = *judge_text;
    record.verdict = spec.task == Task::verification
                         ? parse_judge_sentiment(*judge_text)
                         : parse_judge_yesno(*judge_text);
  } else {
    switch (spec.task) {
      case Task::verification:
        record.verdict = parse_judge_sentiment(primary_text);
        break;
      case Task::gender:
        record.verdict =
            offline_gender_judge(primary_text, std::get<Gender>(spec.truth));
        break;
      case Task::age:
        record.verdict = offline_age_judge(
            primary_text, std::get<AgeYears>(spec.truth), rules.decades);
        break;
      default:
        break;
    }
  }
  record.outcome = decide_outcome(spec.task, spec.truth, false, record.verdict);
}

namespace {

TrialRecord run_one_trial(const TrialSpec& spec, const Protocol& protocol,
                          const RunConfig& config, const PromptSet& templates,
                          GatewayClient& client, const ResponseCache& cache) {
  TrialRecord record;
  record.spec_id = spec.id;
  record.started_at = iso_utc_now();
  const auto& primary_template = templates.get(spec.task, PromptStage::primary);
  record.template_id = primary_template.id();
  try {
    RenderedPrompt prompt =
        render_primary(primary_template, spec, protocol.label_set);
    ChatRequest request =
        build_chat_request(prompt.text, spec.images, config.provider);
    ChatResponse response = client.send_cached(request, cache);

    JudgeFn judge = [&](const RenderedPrompt& judge_prompt)
        -> std::optional<std::string> {
      ChatRequest judge_request =
          build_chat_request(judge_prompt.text, {}, config.provider);
      try {
        return client.send_cached(judge_request, cache).text;
      } catch (const AuthError&) {
        throw;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    grade_into(record, spec, protocol.label_set, response.text, config.judge,
               config.grading, templates, judge);
  } catch (const AuthError&) {
    throw;
  } catch (const Error&) {
    // Transport exhaustion, unreadable images, provider contract breaks:
    // the trial failed, the run continues.
    record.verdict = Verdict{};
    record.outcome = Outcome::provider_failure;
  }
  record.finished_at = iso_utc_now();
  return record;
}

}  // namespace

ExecuteStats execute_run(const Protocol& protocol,
                         const std::vector<TrialSpec>& pending,
                         const RunConfig& config, const PromptSet& templates,
                         Provider& provider, Clock& clock,
                         const ResponseCache& cache, LedgerWriter& writer,
                         const ExecuteOptions& options) {
  ExecuteStats stats;
  if (pending.empty()) return stats;
  if (options.stop_after && *options.stop_after == 0) return stats;

  GatewayClient client(provider, config.provider_config(), clock);

  std::atomic<std::size_t> next_trial{0};
  std::atomic<bool> halt{false};
  std::mutex mutex;
  std::condition_variable cv;
  std::map<std::size_t, TrialRecord> completed;
  std::exception_ptr fatal;

  auto worker = [&]() {
    for (;;) {
      if (halt.load()) return;
      std::size_t index = next_trial.fetch_add(1);
      if (index >= pending.size()) return;
      try {
        TrialRecord record = run_one_trial(pending[index], protocol, config,
                                           templates, client, cache);
        std::lock_guard<std::mutex> lock(mutex);
        completed.emplace(index, std::move(record));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (!fatal) fatal = std::current_exception();
        halt.store(true);
      }
      cv.notify_all();
    }
  };

  std::size_t worker_count =
      std::min<std::size_t>(static_cast<std::size_t>(config.parallelism),
                            pending.size());
  std::vector<std::thread> workers;
  workers.reserve(worker_count);
  for (std::size_t i = 0; i < worker_count; ++i) workers.emplace_back(worker);

  // Appends happen in plan order; out-of-order completions wait their turn.
  std::size_t next_append = 0;
  bool stopping = false;
  {
    std::unique_lock<std::mutex> lock(mutex);
    while (next_append < pending.size() && !stopping) {
      cv.wait(lock, [&] {
        return completed.count(next_append) > 0 || halt.load();
      });
      while (!stopping && completed.count(next_append)) {
        TrialRecord record = std::move(completed.at(next_append));
        completed.erase(next_append);
        lock.unlock();
        writer.append(record);
        lock.lock();
        ++stats.appended;
        ++next_append;
        if (options.stop_after && stats.appended >= *options.stop_after) {
          halt.store(true);
          stopping = true;
        }
      }
      if (halt.load() && !completed.count(next_append)) break;
    }
  }
  halt.store(true);
  cv.notify_all();
  for (auto& thread : workers) thread.join();

  // Workers may have finished in-order records between the halt decision
  // and the join; a fatal halt still keeps everything contiguous.
  if (fatal) {
    std::lock_guard<std::mutex> lock(mutex);
    while (completed.count(next_append)) {
      writer.append(completed.at(next_append));
      completed.erase(next_append);
      ++stats.appended;
      ++next_append;
    }
    std::rethrow_exception(fatal);
  }
  return stats;
}

std::vector<TrialRecord> regrade_records(
    const std::vector<TrialRecord>& records, const Protocol& protocol,
    JudgeMode mode, const GradingRules& rules, const PromptSet& templates,
    const ProviderSection& provider_section, GatewayClient* client,
    const ResponseCache* cache) {
  if (mode == JudgeMode::llm && (!client || !cache)) {
    throw ContractError("llm regrading needs a gateway client and cache");
  }
  std::map<std::string, const TrialSpec*> by_id;
  for (const auto& trial : protocol.trials) by_id.emplace(trial.id, &trial);

  std::vector<TrialRecord> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    auto it = by_id.find(record.spec_id);
    if (it == by_id.end()) {
      throw IntegrityError("ledger record references unknown trial " +
                           record.spec_id);
    }
    const TrialSpec& spec = *it->second;
    TrialRecord updated = record;
    JudgeFn judge = [&](const RenderedPrompt& judge_prompt)
        -> std::optional<std::string> {
      ChatRequest judge_request =
          build_chat_request(judge_prompt.text, {}, provider_section);
      try {
        return client->send_cached(judge_request, *cache).text;
      } catch (const AuthError&) {
        throw;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    grade_into(updated, spec, protocol.label_set, record.primary_response,
               mode, rules, templates, judge);
    updated.finished_at = iso_utc_now();
    out.push_back(std::move(updated));
  }
  return out;
}

}  // namespace biobench
