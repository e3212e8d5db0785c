#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "biobench/protocol.hpp"

namespace biobench {

// positive/negative/neutral belong to verification, yes/no to gender and
// age, predicted_label/low_res_denial to classification. refusal and
// unparseable can occur anywhere.
enum class VerdictKind {
  positive,
  negative,
  neutral,
  yes,
  no,
  refusal,
  low_res_denial,
  predicted_label,
  unparseable
};

std::string_view to_string(VerdictKind kind);
VerdictKind verdict_kind_from_string(std::string_view name);

struct Verdict {
  VerdictKind kind = VerdictKind::unparseable;
  std::string evidence;  // substring of the judged text; empty iff unparseable
  std::string label;     // predicted_label only

  bool operator==(const Verdict&) const = default;
};

enum class Outcome {
  correct,
  incorrect,
  inconclusive,
  excluded_refusal,
  excluded_low_res,
  provider_failure
};

std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view name);

struct AgeRange {
  int lo = 0;
  int hi = 0;  // 0 <= lo <= hi <= 150
  bool contains(int age) const { return age >= lo && age <= hi; }
  bool operator==(const AgeRange&) const = default;
};

// Offsets that turn a decade phrase into a closed range: for base B,
// "early" gives [B+early_lo, B+early_hi] and so on; a bare "Bs" covers the
// whole decade.
struct DecadeTable {
  int early_lo = 0, early_hi = 3;
  int mid_lo = 4, mid_hi = 6;
  int late_lo = 7, late_hi = 9;
  int bare_lo = 0, bare_hi = 9;
};

const std::vector<std::string>& default_refusal_patterns();
const std::vector<std::string>& default_denial_patterns();

struct GradingRules {
  std::vector<std::string> refusal_patterns = default_refusal_patterns();
  std::vector<std::string> denial_patterns = default_denial_patterns();
  DecadeTable decades;
};

// Case-insensitive substring match against the refusal pattern list.
bool detect_refusal(std::string_view primary_text,
                    const std::vector<std::string>& patterns =
                        default_refusal_patterns());

// Same check, returning the matched source substring.
std::optional<std::string> match_refusal(
    std::string_view primary_text,
    const std::vector<std::string>& patterns = default_refusal_patterns());

// Keyword scan for positive/negative/neutral (word-boundary,
// case-insensitive). A keyword preceded within three tokens by "not" or a
// "n't" contraction flips polarity ("not positive" reads as negative);
// negated "neutral" is ignored. The earliest surviving occurrence decides.
Verdict parse_judge_sentiment(std::string_view judge_text);

// Head-token match on yes/no after punctuation stripping, then a unique
// whole-text keyword fallback.
Verdict parse_judge_yesno(std::string_view judge_text);

// Age-range extraction: "X to Y", "around X" ([X-1, X+1]), decade phrases
// ("early 40s", "mid-30s", bare "20s") and compounds spanning a
// connector ("late 40s to early 50s" takes the low of the first phrase and
// the high of the second).
std::optional<AgeRange> extract_age_range(std::string_view text,
                                          const DecadeTable& table = {},
                                          std::string* evidence = nullptr);

// Yes iff the true age falls inside the range stated by the text.
Verdict offline_age_judge(std::string_view primary_text, AgeYears truth,
                          const DecadeTable& table = {});

// Word-boundary scan for {male, man, boy} vs {female, woman, girl}; a
// unique side present answers yes/no against the truth, anything else is
// unparseable.
Verdict offline_gender_judge(std::string_view primary_text, Gender truth);

// Exactly one label from the set present (word-boundary, case-insensitive,
// plural 's' tolerated) -> predicted_label. Zero or several labels plus a
// denial phrase -> low_res_denial. Anything else -> unparseable.
Verdict parse_class_label(std::string_view primary_text,
                          const std::vector<std::string>& label_set,
                          const std::vector<std::string>& denial_patterns =
                              default_denial_patterns());

// Final outcome for one trial. Refusals win over everything; unparseable
// verdicts are inconclusive. Illegal verdict/task pairings throw
// ContractError.
Outcome decide_outcome(Task task, const GroundTruth& truth, bool refusal,
                       const Verdict& verdict);

// One completed pipeline traversal.
struct TrialRecord {
  std::string spec_id;
  std::string template_id;  // primary prompt template
  std::string primary_response;
  std::optional<std::string> judge_response;
  Verdict verdict;
  Outcome outcome = Outcome::provider_failure;
  std::string started_at;
  std::string finished_at;

  bool operator==(const TrialRecord&) const = default;
};

nlohmann::json record_to_json(const TrialRecord& record);
TrialRecord record_from_json(const nlohmann::json& j);

}  // namespace biobench
