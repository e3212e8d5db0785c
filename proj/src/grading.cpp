#include "biobench/grading.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

#include "biobench/errors.hpp"

namespace biobench {

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

struct Token {
  std::string lower;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Word tokens are maximal runs of alphanumerics plus apostrophes, so
// contractions like "isn't" stay whole.
std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  auto is_word = [](unsigned char c) {
    return std::isalnum(c) || c == '\'';
  };
  while (i < text.size()) {
    if (!is_word(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < text.size() && is_word(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    Token token;
    token.begin = begin;
    token.end = i;
    token.lower = lowercase(text.substr(begin, i - begin));
    // Strip apostrophes that merely wrap the word ("'yes'").
    while (!token.lower.empty() && token.lower.front() == '\'') {
      token.lower.erase(token.lower.begin());
      ++token.begin;
    }
    while (!token.lower.empty() && token.lower.back() == '\'') {
      token.lower.pop_back();
      --token.end;
    }
    if (!token.lower.empty()) tokens.push_back(std::move(token));
  }
  return tokens;
}

bool is_negator(const std::string& lower) {
  return lower == "not" ||
         (lower.size() >= 3 && lower.compare(lower.size() - 3, 3, "n't") == 0);
}

std::optional<std::size_t> find_ci(std::string_view haystack,
                                   std::string_view needle) {
  std::string h = lowercase(haystack);
  std::string n = lowercase(needle);
  auto pos = h.find(n);
  if (pos == std::string::npos) return std::nullopt;
  return pos;
}

}  // namespace

std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::positive: return "positive";
    case VerdictKind::negative: return "negative";
    case VerdictKind::neutral: return "neutral";
    case VerdictKind::yes: return "yes";
    case VerdictKind::no: return "no";
    case VerdictKind::refusal: return "refusal";
    case VerdictKind::low_res_denial: return "low_res_denial";
    case VerdictKind::predicted_label: return "predicted_label";
    case VerdictKind::unparseable: return "unparseable";
  }
  return "unparseable";
}

VerdictKind verdict_kind_from_string(std::string_view name) {
  static const std::array<VerdictKind, 9> kinds = {
      VerdictKind::positive,       VerdictKind::negative,
      VerdictKind::neutral,        VerdictKind::yes,
      VerdictKind::no,             VerdictKind::refusal,
      VerdictKind::low_res_denial, VerdictKind::predicted_label,
      VerdictKind::unparseable};
  for (auto kind : kinds) {
    if (to_string(kind) == name) return kind;
  }
  throw ParseError("unknown verdict kind: " + std::string(name));
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::correct: return "correct";
    case Outcome::incorrect: return "incorrect";
    case Outcome::inconclusive: return "inconclusive";
    case Outcome::excluded_refusal: return "excluded_refusal";
    case Outcome::excluded_low_res: return "excluded_low_res";
    case Outcome::provider_failure: return "provider_failure";
  }
  return "provider_failure";
}

Outcome outcome_from_string(std::string_view name) {
  static const std::array<Outcome, 6> outcomes = {
      Outcome::correct,          Outcome::incorrect,
      Outcome::inconclusive,     Outcome::excluded_refusal,
      Outcome::excluded_low_res, Outcome::provider_failure};
  for (auto outcome : outcomes) {
    if (to_string(outcome) == name) return outcome;
  }
  throw ParseError("unknown outcome: " + std::string(name));
}

const std::vector<std::string>& default_refusal_patterns() {
  static const std::vector<std::string> patterns = {
      "cannot help with that", "can't assist", "unable to assist",
      "I consciously steer clear"};
  return patterns;
}

const std::vector<std::string>& default_denial_patterns() {
  static const std::vector<std::string> patterns = {
      "too blurry", "very blurry", "low resolution",
      "difficult to provide a definitive answer"};
  return patterns;
}

bool detect_refusal(std::string_view primary_text,
                    const std::vector<std::string>& patterns) {
  return match_refusal(primary_text, patterns).has_value();
}

std::optional<std::string> match_refusal(
    std::string_view primary_text, const std::vector<std::string>& patterns) {
  if (primary_text.empty()) return std::nullopt;
  for (const auto& pattern : patterns) {
    if (auto pos = find_ci(primary_text, pattern)) {
      return std::string(primary_text.substr(*pos, pattern.size()));
    }
  }
  return std::nullopt;
}

Verdict parse_judge_sentiment(std::string_view judge_text) {
  auto tokens = tokenize(judge_text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& tok = tokens[i].lower;
    VerdictKind kind;
    if (tok == "positive") {
      kind = VerdictKind::positive;
    } else if (tok == "negative") {
      kind = VerdictKind::negative;
    } else if (tok == "neutral") {
      kind = VerdictKind::neutral;
    } else {
      continue;
    }
    std::size_t evidence_begin = tokens[i].begin;
    bool negated = false;
    for (std::size_t back = 1; back <= 3 && back <= i; ++back) {
      if (is_negator(tokens[i - back].lower)) {
        negated = true;
        evidence_begin = tokens[i - back].begin;
        break;
      }
    }
    if (negated) {
      if (kind == VerdictKind::positive) {
        kind = VerdictKind::negative;
      } else if (kind == VerdictKind::negative) {
        kind = VerdictKind::positive;
      } else {
        continue;  // negated "neutral" asserts nothing
      }
    }
    Verdict verdict;
    verdict.kind = kind;
    verdict.evidence = std::string(
        judge_text.substr(evidence_begin, tokens[i].end - evidence_begin));
    return verdict;
  }
  return Verdict{};
}

Verdict parse_judge_yesno(std::string_view judge_text) {
  auto tokens = tokenize(judge_text);
  if (tokens.empty()) return Verdict{};
  auto verdict_at = [&](const Token& token, VerdictKind kind) {
    Verdict verdict;
    verdict.kind = kind;
    verdict.evidence =
        std::string(judge_text.substr(token.begin, token.end - token.begin));
    return verdict;
  };
  if (tokens[0].lower == "yes") return verdict_at(tokens[0], VerdictKind::yes);
  if (tokens[0].lower == "no") return verdict_at(tokens[0], VerdictKind::no);

  const Token* first_yes = nullptr;
  const Token* first_no = nullptr;
  for (const auto& token : tokens) {
    if (token.lower == "yes" && !first_yes) first_yes = &token;
    if (token.lower == "no" && !first_no) first_no = &token;
  }
  if (first_yes && !first_no) return verdict_at(*first_yes, VerdictKind::yes);
  if (first_no && !first_yes) return verdict_at(*first_no, VerdictKind::no);
  return Verdict{};
}

namespace {

struct AgePhrase {
  int lo = 0;
  int hi = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool plain_number = false;  // bare "N"; widened to [N-1, N+1] when alone
  bool anchored = false;      // decade phrase or number with age context
};

bool decade_bounds(const std::string& qualifier, int base,
                   const DecadeTable& table, int& lo, int& hi) {
  if (qualifier == "early") {
    lo = base + table.early_lo;
    hi = base + table.early_hi;
  } else if (qualifier == "mid") {
    lo = base + table.mid_lo;
    hi = base + table.mid_hi;
  } else if (qualifier == "late") {
    lo = base + table.late_lo;
    hi = base + table.late_hi;
  } else {
    lo = base + table.bare_lo;
    hi = base + table.bare_hi;
  }
  return lo >= 0 && hi <= 150;
}

bool gap_is_connector(std::string_view gap) {
  // Dashes are matched as raw UTF-8 byte sequences (std::regex is
  // byte-oriented).
  static const std::regex kConnector(
      "^\\s*(?:to|through|up to|and|or|-|\xE2\x80\x93|\xE2\x80\x94)\\s*$",
      std::regex::icase);
  return std::regex_match(gap.begin(), gap.end(), kConnector);
}

std::vector<AgePhrase> collect_age_phrases(std::string_view text,
                                           const DecadeTable& table) {
  std::string source(text);
  std::vector<AgePhrase> phrases;

  static const std::regex kDecade(R"((?:\b(early|mid|late)[ \-]+)?\b(\d{1,3})0s\b)",
                                  std::regex::icase);
  for (auto it = std::sregex_iterator(source.begin(), source.end(), kDecade);
       it != std::sregex_iterator(); ++it) {
    const auto& match = *it;
    int base = std::stoi(match[2].str()) * 10;
    AgePhrase phrase;
    std::string qualifier = lowercase(match[1].matched ? match[1].str() : "");
    if (!decade_bounds(qualifier, base, table, phrase.lo, phrase.hi)) continue;
    phrase.begin = static_cast<std::size_t>(match.position(0));
    phrase.end = phrase.begin + static_cast<std::size_t>(match.length(0));
    phrase.anchored = true;
    phrases.push_back(phrase);
  }

  auto inside_existing = [&](std::size_t begin, std::size_t end) {
    return std::any_of(phrases.begin(), phrases.end(),
                       [&](const AgePhrase& p) {
                         return begin < p.end && p.begin < end;
                       });
  };

  auto tokens = tokenize(text);
  auto token_index_at = [&](std::size_t pos) -> std::size_t {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i].begin == pos) return i;
    }
    return tokens.size();
  };

  static const std::regex kNumber(R"(\b(\d{1,3})\b)");
  for (auto it = std::sregex_iterator(source.begin(), source.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    const auto& match = *it;
    auto begin = static_cast<std::size_t>(match.position(0));
    auto end = begin + static_cast<std::size_t>(match.length(0));
    if (inside_existing(begin, end)) continue;
    int value = std::stoi(match[1].str());
    if (value > 150) continue;

    AgePhrase phrase;
    phrase.lo = phrase.hi = value;
    phrase.begin = begin;
    phrase.end = end;
    phrase.plain_number = true;

    std::size_t index = token_index_at(begin);
    if (index < tokens.size()) {
      auto prev = [&](std::size_t back) -> const std::string* {
        if (back > index) return nullptr;
        return &tokens[index - back].lower;
      };
      const std::string* p1 = prev(1);
      const std::string* p2 = prev(2);
      if (p1 && (*p1 == "around" || *p1 == "about" || *p1 == "approximately" ||
                 *p1 == "roughly" || *p1 == "between" || *p1 == "age" ||
                 *p1 == "aged")) {
        phrase.anchored = true;
      } else if (p1 && *p1 == "of" && p2 && (*p2 == "age" || *p2 == "range")) {
        phrase.anchored = true;
      }
      if (!phrase.anchored && index + 1 < tokens.size()) {
        const auto& next = tokens[index + 1].lower;
        if (next == "years" || next == "year" || next == "yrs") {
          phrase.anchored = true;
        }
      }
    }
    phrases.push_back(phrase);
  }

  std::sort(phrases.begin(), phrases.end(),
            [](const AgePhrase& a, const AgePhrase& b) {
              return a.begin < b.begin;
            });
  return phrases;
}

}  // namespace

std::optional<AgeRange> extract_age_range(std::string_view text,
                                          const DecadeTable& table,
                                          std::string* evidence) {
  auto phrases = collect_age_phrases(text, table);
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    const auto& first = phrases[i];
    if (i + 1 < phrases.size()) {
      const auto& second = phrases[i + 1];
      std::string_view gap =
          text.substr(first.end, second.begin - first.end);
      if (gap_is_connector(gap) && (first.anchored || second.anchored)) {
        AgeRange range{std::min(first.lo, second.lo),
                       std::max(first.hi, second.hi)};
        if (evidence) {
          *evidence = std::string(
              text.substr(first.begin, second.end - first.begin));
        }
        return range;
      }
    }
    if (first.anchored) {
      AgeRange range{first.lo, first.hi};
      if (first.plain_number) {
        range.lo = std::max(0, range.lo - 1);
        range.hi = std::min(150, range.hi + 1);
      }
      if (evidence) {
        *evidence =
            std::string(text.substr(first.begin, first.end - first.begin));
      }
      return range;
    }
  }
  return std::nullopt;
}

Verdict offline_age_judge(std::string_view primary_text, AgeYears truth,
                          const DecadeTable& table) {
  std::string evidence;
  auto range = extract_age_range(primary_text, table, &evidence);
  if (!range) return Verdict{};
  Verdict verdict;
  verdict.kind = range->contains(truth.value) ? VerdictKind::yes : VerdictKind::no;
  verdict.evidence = std::move(evidence);
  return verdict;
}

Verdict offline_gender_judge(std::string_view primary_text, Gender truth) {
  auto tokens = tokenize(primary_text);
  const Token* male_hit = nullptr;
  const Token* female_hit = nullptr;
  for (const auto& token : tokens) {
    if (!male_hit &&
        (token.lower == "male" || token.lower == "man" || token.lower == "boy")) {
      male_hit = &token;
    }
    if (!female_hit && (token.lower == "female" || token.lower == "woman" ||
                        token.lower == "girl")) {
      female_hit = &token;
    }
  }
  if (static_cast<bool>(male_hit) == static_cast<bool>(female_hit)) {
    return Verdict{};  // both sides or neither
  }
  const Token* hit = male_hit ? male_hit : female_hit;
  Gender described = male_hit ? Gender::male : Gender::female;
  Verdict verdict;
  verdict.kind = described == truth ? VerdictKind::yes : VerdictKind::no;
  verdict.evidence =
      std::string(primary_text.substr(hit->begin, hit->end - hit->begin));
  return verdict;
}

Verdict parse_class_label(std::string_view primary_text,
                          const std::vector<std::string>& label_set,
                          const std::vector<std::string>& denial_patterns) {
  if (label_set.empty()) {
    throw ContractError("classification requires a non-empty label set");
  }
  auto tokens = tokenize(primary_text);
  const std::string* found_label = nullptr;
  const Token* found_token = nullptr;
  std::size_t distinct = 0;
  for (const auto& label : label_set) {
    std::string lower = lowercase(label);
    const Token* hit = nullptr;
    for (const auto& token : tokens) {
      if (token.lower == lower || token.lower == lower + "s") {
        hit = &token;
        break;
      }
    }
    if (hit) {
      ++distinct;
      if (!found_label) {
        found_label = &label;
        found_token = hit;
      }
    }
  }
  if (distinct == 1) {
    Verdict verdict;
    verdict.kind = VerdictKind::predicted_label;
    verdict.label = *found_label;
    verdict.evidence = std::string(primary_text.substr(
        found_token->begin, found_token->end - found_token->begin));
    return verdict;
  }
  for (const auto& pattern : denial_patterns) {
    if (auto pos = find_ci(primary_text, pattern)) {
      Verdict verdict;
      verdict.kind = VerdictKind::low_res_denial;
      verdict.evidence =
          std::string(primary_text.substr(*pos, pattern.size()));
      return verdict;
    }
  }
  return Verdict{};
}

Outcome decide_outcome(Task task, const GroundTruth& truth, bool refusal,
                       const Verdict& verdict) {
  if (truth_task(truth) != task) {
    throw ContractError("ground truth does not belong to the task");
  }
  auto legal = [&]() {
    switch (verdict.kind) {
      case VerdictKind::refusal:
      case VerdictKind::unparseable:
        return true;
      case VerdictKind::positive:
      case VerdictKind::negative:
      case VerdictKind::neutral:
        return task == Task::verification;
      case VerdictKind::yes:
      case VerdictKind::no:
        return task == Task::gender || task == Task::age;
      case VerdictKind::predicted_label:
      case VerdictKind::low_res_denial:
        return task == Task::classification;
    }
    return false;
  };
  if (!legal()) {
    throw ContractError(std::string("verdict kind ") +
                        std::string(to_string(verdict.kind)) +
                        " is not legal for task " +
                        std::string(to_string(task)));
  }
  if (refusal || verdict.kind == VerdictKind::refusal) {
    return Outcome::excluded_refusal;
  }
  switch (verdict.kind) {
    case VerdictKind::unparseable:
      return Outcome::inconclusive;
    case VerdictKind::neutral:
      return Outcome::inconclusive;
    case VerdictKind::positive:
      return std::get<SamePerson>(truth).value ? Outcome::correct
                                               : Outcome::incorrect;
    case VerdictKind::negative:
      return std::get<SamePerson>(truth).value ? Outcome::incorrect
                                               : Outcome::correct;
    case VerdictKind::yes:
      return Outcome::correct;
    case VerdictKind::no:
      return Outcome::incorrect;
    case VerdictKind::predicted_label:
      return verdict.label == std::get<ClassLabel>(truth).value
                 ? Outcome::correct
                 : Outcome::incorrect;
    case VerdictKind::low_res_denial:
      return Outcome::excluded_low_res;
    case VerdictKind::refusal:
      return Outcome::excluded_refusal;
  }
  throw ContractError("unreachable verdict kind");
}

nlohmann::json record_to_json(const TrialRecord& record) {
  nlohmann::json verdict;
  verdict["kind"] = std::string(to_string(record.verdict.kind));
  verdict["evidence"] = record.verdict.evidence;
  if (record.verdict.kind == VerdictKind::predicted_label) {
    verdict["label"] = record.verdict.label;
  }
  nlohmann::json j;
  j["spec_id"] = record.spec_id;
  j["template_id"] = record.template_id;
  j["primary_response"] = record.primary_response;
  if (record.judge_response) {
    j["judge_response"] = *record.judge_response;
  } else {
    j["judge_response"] = nullptr;
  }
  j["verdict"] = std::move(verdict);
  j["outcome"] = std::string(to_string(record.outcome));
  j["started_at"] = record.started_at;
  j["finished_at"] = record.finished_at;
  return j;
}

TrialRecord record_from_json(const nlohmann::json& j) {
  TrialRecord record;
  record.spec_id = j.at("spec_id").get<std::string>();
  record.template_id = j.at("template_id").get<std::string>();
  record.primary_response = j.at("primary_response").get<std::string>();
  if (j.contains("judge_response") && !j.at("judge_response").is_null()) {
    record.judge_response = j.at("judge_response").get<std::string>();
  }
  const auto& verdict = j.at("verdict");
  record.verdict.kind =
      verdict_kind_from_string(verdict.at("kind").get<std::string>());
  record.verdict.evidence = verdict.at("evidence").get<std::string>();
  if (verdict.contains("label")) {
    record.verdict.label = verdict.at("label").get<std::string>();
  }
  record.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  record.started_at = j.value("started_at", std::string());
  record.finished_at = j.value("finished_at", std::string());
  return record;
}

}  // namespace biobench
