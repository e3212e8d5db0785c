#include "biobench/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "biobench/config.hpp"
#include "biobench/digest.hpp"
#include "biobench/errors.hpp"
#include "biobench/gateway.hpp"
#include "biobench/ledger.hpp"
#include "biobench/metrics.hpp"
#include "biobench/runner.hpp"

namespace biobench {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t prev = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t insert_or_delete = std::min(row[j], row[j - 1]) + 1;
      std::size_t substitute = prev + (a[i - 1] == b[j - 1] ? 0 : 1);
      prev = row[j];
      row[j] = std::min(insert_or_delete, substitute);
    }
  }
  return row[b.size()];
}

void collect_option_names(const CLI::App* app, std::vector<std::string>& out) {
  for (const auto* option : app->get_options()) {
    for (const auto& name : option->get_lnames()) out.push_back("--" + name);
    for (const auto& name : option->get_snames()) out.push_back("-" + name);
  }
  for (const auto* sub : app->get_subcommands({})) {
    out.push_back(sub->get_name());
    collect_option_names(sub, out);
  }
}

std::string suggest(const CLI::App& app, const std::string& bad_token) {
  std::vector<std::string> names;
  collect_option_names(&app, names);
  std::string best;
  std::size_t best_distance = 4;  // suggest only near misses
  for (const auto& name : names) {
    std::size_t distance = levenshtein(bad_token, name);
    if (distance < best_distance) {
      best_distance = distance;
      best = name;
    }
  }
  return best;
}

struct CommonFlags {
  std::string config_path;
  std::string protocol_name;
  std::string judge;
  int parallelism = 0;
  std::string run_dir;
  std::string cache_dir;

  void apply(RunConfig& config) const {
    if (!protocol_name.empty()) config.protocol.name = protocol_name;
    if (!judge.empty()) config.judge = judge_mode_from_string(judge);
    if (parallelism > 0) config.parallelism = parallelism;
    if (!run_dir.empty()) config.run_dir = run_dir;
    if (!cache_dir.empty()) config.cache_dir = cache_dir;
  }
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Run config file")
      ->required();
  cmd->add_option("--protocol", flags.protocol_name, "Protocol name override");
  cmd->add_option("--judge", flags.judge, "Judge mode override (llm|offline)");
  cmd->add_option("--parallelism", flags.parallelism,
                  "Concurrent trial limit override");
  cmd->add_option("--run-dir", flags.run_dir, "Run directory override");
  cmd->add_option("--cache-dir", flags.cache_dir, "Cache directory override");
}

RunConfig load_config(const CommonFlags& flags) {
  RunConfig config = load_run_config(flags.config_path);
  flags.apply(config);
  resolve_credential(config);
  return config;
}

std::shared_ptr<Provider> make_provider(const RunConfig& config) {
  if (config.provider.kind == "mock") {
    if (config.provider.mock_script.empty()) {
      throw ConfigError("provider.kind = \"mock\" needs provider.mock_script");
    }
    auto j = nlohmann::json::parse(
        read_file_bytes(config.provider.mock_script.string()));
    return MockProvider::from_json(j);
  }
  return std::make_shared<HttpProvider>(config.provider.endpoint_url,
                                        config.provider.credential,
                                        config.provider.timeout_seconds);
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

int cmd_ingest(const CommonFlags& flags, const std::string& out_path) {
  RunConfig config = load_config(flags);
  std::vector<std::string> warnings;
  Protocol protocol = load_protocol(config, &warnings);
  for (const auto& warning : warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  std::string serialized = protocol_to_json(protocol).dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << serialized;
  } else {
    write_text_file(out_path, serialized);
  }
  std::cerr << "protocol " << protocol.name << ": " << protocol.trials.size()
            << " trials, digest " << protocol_digest(protocol) << "\n";
  if (protocol.task == Task::verification) {
    auto counts = protocol.pair_counts();
    std::cerr << "  genuine " << counts.genuine << ", imposter "
              << counts.imposter << "\n";
  } else {
    for (const auto& [key, count] : protocol.truth_histogram()) {
      std::cerr << "  " << key << ": " << count << "\n";
    }
  }
  return kExitOk;
}

int cmd_run(const CommonFlags& flags, bool force_new) {
  RunConfig config = load_config(flags);
  Protocol protocol = load_protocol(config);
  ValidationReport template_report;
  PromptSet templates = load_templates(config, &template_report);
  for (const auto& violation : template_report.violations) {
    std::cerr << "warning: " << violation.template_id << ": "
              << violation.message << "\n";
  }

  LedgerHeader header;
  header.config_digest = config_digest(config, templates);
  header.protocol_digest = protocol_digest(protocol);
  header.protocol_name = protocol.name;
  header.judge_mode = std::string(to_string(config.judge));
  header.model_id = config.provider.model_id;

  auto ledger_path = config.ledger_path();
  std::vector<TrialSpec> pending;
  if (std::filesystem::exists(ledger_path)) {
    std::vector<std::string> warnings;
    RunLedger ledger = read_ledger(ledger_path, &warnings);
    for (const auto& warning : warnings) {
      std::cerr << "warning: " << warning << "\n";
    }
    bool mismatch = ledger.header.config_digest != header.config_digest ||
                    ledger.header.protocol_digest != header.protocol_digest;
    if (mismatch && !force_new) {
      throw ResumeMismatchError(
          "existing ledger was produced by a different config/protocol; "
          "pass --force-new to start over");
    }
    if (mismatch) {
      auto backup = ledger_path;
      backup += ".bak";
      std::filesystem::rename(ledger_path, backup);
      std::cerr << "previous ledger moved to " << backup.string() << "\n";
      pending = protocol.trials;
    } else {
      pending = plan(protocol, ledger);
    }
  } else {
    pending = protocol.trials;
  }

  std::cout << pending.size() << " pending\n";
  auto provider = make_provider(config);
  SystemClock clock;
  ResponseCache cache(config.effective_cache_dir());
  LedgerWriter writer(ledger_path, header);
  ExecuteStats stats = execute_run(protocol, pending, config, templates,
                                   *provider, clock, cache, writer);
  std::cout << "appended " << stats.appended << " records to "
            << ledger_path.string() << "\n";
  return kExitOk;
}

int cmd_grade(const CommonFlags& flags) {
  RunConfig config = load_config(flags);
  if (flags.judge.empty()) {
    throw ConfigError("grade needs an explicit --judge mode");
  }
  Protocol protocol = load_protocol(config);
  PromptSet templates = load_templates(config);
  RunLedger ledger = read_ledger(config.ledger_path());

  std::shared_ptr<Provider> provider;
  std::unique_ptr<GatewayClient> client;
  std::unique_ptr<ResponseCache> cache;
  SystemClock clock;
  if (config.judge == JudgeMode::llm) {
    provider = make_provider(config);
    client = std::make_unique<GatewayClient>(*provider,
                                             config.provider_config(), clock);
    cache = std::make_unique<ResponseCache>(config.effective_cache_dir());
  }
  auto regraded = regrade_records(ledger.records, protocol, config.judge,
                                  config.grading, templates, config.provider,
                                  client.get(), cache.get());

  LedgerHeader header = ledger.header;
  header.judge_mode = std::string(to_string(config.judge));
  auto out_path = config.run_dir /
                  ("regrade-" + std::string(to_string(config.judge)) + ".jsonl");
  std::ostringstream out;
  out << header_to_json(header).dump() << "\n";
  for (const auto& record : regraded) {
    out << record_to_json(record).dump() << "\n";
  }
  write_text_file(out_path, out.str());
  std::cout << "regraded " << regraded.size() << " records into "
            << out_path.string() << "\n";
  return kExitOk;
}

int cmd_report(const CommonFlags& flags, const std::string& format_name,
               const std::string& baselines_path,
               const std::string& ledger_override) {
  RunConfig config = load_config(flags);
  RenderFormat format = render_format_from_string(format_name);
  Protocol protocol = load_protocol(config);
  auto ledger_path = ledger_override.empty()
                         ? config.ledger_path()
                         : std::filesystem::path(ledger_override);
  RunLedger ledger = read_ledger(ledger_path);
  MetricsReport report = aggregate(ledger.records, protocol);

  auto report_path = config.reports_dir() /
                     (protocol.name + "." + format_name);
  std::string rendered = render(report, format);
  write_text_file(report_path, rendered);
  std::cout << rendered;
  std::cerr << "wrote " << report_path.string() << "\n";

  std::filesystem::path baselines =
      baselines_path.empty() ? config.baselines_csv
                             : std::filesystem::path(baselines_path);
  if (!baselines.empty()) {
    auto rows = parse_baseline_csv(read_file_bytes(baselines.string()));
    std::vector<std::string> warnings;
    ComparisonTable table =
        comparison_table({report}, rows, config.method_name, &warnings);
    for (const auto& warning : warnings) {
      std::cerr << "warning: " << warning << "\n";
    }
    auto table_path = config.reports_dir() / ("comparison." + format_name);
    std::string table_rendered = render(table, format);
    write_text_file(table_path, table_rendered);
    std::cout << table_rendered;
    std::cerr << "wrote " << table_path.string() << "\n";
  }
  return kExitOk;
}

int cmd_validate(const CommonFlags& flags) {
  RunConfig config = load_config(flags);
  ValidationReport report;
  PromptSet templates = load_templates(config, &report);
  // Surface structural problems the loader would otherwise mask.
  for (const auto& tmpl : templates.all()) {
    auto r = validate_template(tmpl, default_framing_patterns());
    for (const auto& violation : r.violations) {
      bool already = std::any_of(
          report.violations.begin(), report.violations.end(),
          [&](const TemplateViolation& v) {
            return v.template_id == violation.template_id &&
                   v.code == violation.code && v.message == violation.message;
          });
      if (!already) report.violations.push_back(violation);
    }
  }
  if (config.judge == JudgeMode::llm) {
    // Defaults always carry judge templates; overrides were validated on
    // load, so reaching here means the requirement holds.
    templates.get(config.protocol.task, PromptStage::judge);
  }
  if (report.violations.empty()) {
    std::cout << "templates OK\n";
    return kExitOk;
  }
  for (const auto& violation : report.violations) {
    std::cout << violation.template_id << ": [" << violation.code << "] "
              << violation.message << "\n";
  }
  return kExitFailure;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Batch evaluation harness for vision-chat models on "
               "face verification, gender, age and image classification"};
  app.require_subcommand(1);

  CommonFlags ingest_flags, run_flags, grade_flags, report_flags,
      validate_flags;
  std::string ingest_out;
  bool force_new = false;
  std::string report_format = "markdown";
  std::string report_baselines;
  std::string report_ledger;

  auto* ingest =
      app.add_subcommand("ingest", "Parse, validate and serialize a protocol");
  add_common_flags(ingest, ingest_flags);
  ingest->add_option("--out", ingest_out, "Write protocol JSON here");

  auto* run = app.add_subcommand("run", "Plan and execute pending trials");
  add_common_flags(run, run_flags);
  run->add_flag("--force-new", force_new,
                "Archive a mismatched ledger and start over");

  auto* grade = app.add_subcommand(
      "grade", "Re-grade ledgered responses under another judge mode");
  add_common_flags(grade, grade_flags);

  auto* report = app.add_subcommand("report", "Aggregate and render metrics");
  add_common_flags(report, report_flags);
  report->add_option("--format", report_format,
                     "Output format (markdown|csv|json)");
  report->add_option("--baselines", report_baselines,
                     "Baseline CSV for the comparison table");
  report->add_option("--ledger", report_ledger,
                     "Aggregate this ledger file instead of the run default");

  auto* validate =
      app.add_subcommand("validate", "Check templates and configuration");
  add_common_flags(validate, validate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::string what = e.what();
    auto colon = what.rfind(": ");
    if (colon != std::string::npos) {
      std::string token = what.substr(colon + 2);
      std::string suggestion = suggest(app, token);
      if (!suggestion.empty()) {
        std::cerr << "did you mean \"" << suggestion << "\"?\n";
      }
    }
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_flags, ingest_out);
    if (run->parsed()) return cmd_run(run_flags, force_new);
    if (grade->parsed()) return cmd_grade(grade_flags);
    if (report->parsed()) {
      return cmd_report(report_flags, report_format, report_baselines,
                        report_ledger);
    }
    if (validate->parsed()) return cmd_validate(validate_flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("biobench");
  for (const auto& arg : args) argv.push_back(arg.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace biobench
