#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "biobench/protocol.hpp"

namespace biobench {

enum class PromptStage { primary, judge };

std::string_view to_string(PromptStage stage);
PromptStage prompt_stage_from_string(std::string_view name);

// Placeholders recognized in template text. Substitution is single-pass:
// substituted values are never re-scanned, so model text containing
// "{GROUND_TRUTH}" stays literal.
inline constexpr std::string_view kGroundTruthPlaceholder = "GROUND_TRUTH";
inline constexpr std::string_view kPriorResponsePlaceholder = "PRIOR_RESPONSE";
inline constexpr std::string_view kLabelSetPlaceholder = "LABEL_SET";

struct PromptTemplate {
  Task task = Task::verification;
  PromptStage stage = PromptStage::primary;
  std::string text;

  std::string id() const;  // "<task>/<stage>"
  bool operator==(const PromptTemplate&) const = default;
};

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  std::map<std::string, std::string> substitutions;
};

struct TemplateViolation {
  std::string template_id;
  std::string code;     // "framing-missing", "placeholder-*"
  std::string message;
};

struct ValidationReport {
  std::vector<TemplateViolation> violations;
  bool ok() const { return violations.empty(); }
  // True when every violation is the advisory framing lint.
  bool only_framing() const;
};

// The stock prompt texts, one primary and one judge per task.
class PromptSet {
 public:
  static PromptSet defaults();

  const PromptTemplate& get(Task task, PromptStage stage) const;
  void set(PromptTemplate tmpl);
  std::vector<PromptTemplate> all() const;

  nlohmann::json to_json() const;
  // Applies overrides from a {"<task>/<stage>": text} object on top of the
  // defaults. Structural violations throw ConfigError; framing lint is
  // reported through `report`.
  static PromptSet from_json(const nlohmann::json& j,
                             ValidationReport* report = nullptr);

 private:
  std::map<std::pair<Task, PromptStage>, PromptTemplate> templates_;
};

// AI-origin framing phrases required in biometric primary prompts.
const std::vector<std::string>& default_framing_patterns();

// "a or b" for two labels, "a, b, ..., or z" beyond that.
std::string join_label_set(const std::vector<std::string>& labels);

// Primary-prompt rendering: only {LABEL_SET} is substituted, and only for
// classification. Task/stage mismatches throw ContractError.
RenderedPrompt render_primary(
    const PromptTemplate& tmpl, const TrialSpec& spec,
    const std::optional<std::vector<std::string>>& label_set = std::nullopt);

// Judge-prompt rendering. {GROUND_TRUTH} becomes the lowercase gender
// label or the decimal age; {PRIOR_RESPONSE} is the prior text verbatim
// after a trailing-whitespace strip. Empty prior text throws.
RenderedPrompt render_judge(const PromptTemplate& tmpl,
                            const GroundTruth& truth,
                            std::string_view prior_text);

// Lint: placeholder balance/presence plus the AI-origin framing check for
// biometric primary prompts. Reports, never throws.
ValidationReport validate_template(
    const PromptTemplate& tmpl,
    const std::vector<std::string>& framing_patterns =
        default_framing_patterns());

}  // namespace biobench
