#include "biobench/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "biobench/digest.hpp"
#include "biobench/errors.hpp"

namespace biobench {

namespace {

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

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string token;
  while (in >> token) tokens.push_back(std::move(token));
  return tokens;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  // Dialect: comma-separated, no quoting, '#' lines are comments.
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

bool is_comment_or_blank(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

bool parse_uint(const std::string& token, std::size_t& out) {
  if (token.empty()) return false;
  std::size_t value = 0;
  for (char c : token) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    value = value * 10 + static_cast<std::size_t>(c - '0');
    if (value > 100000000) return false;
  }
  out = value;
  return true;
}

std::string trial_id(const std::string& protocol_name, std::size_t ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", ordinal);
  return protocol_name + "/" + buf;
}

std::string lfw_image_path(const std::filesystem::path& root,
                           const std::string& name, std::size_t index) {
  char file[512];
  std::snprintf(file, sizeof file, "%s_%04zu.jpg", name.c_str(), index);
  return (root / name / file).string();
}

std::string join_path(const std::filesystem::path& root,
                      const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return rel;
  return (root / p).string();
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::verification: return "verification";
    case Task::gender: return "gender";
    case Task::age: return "age";
    case Task::classification: return "classification";
  }
  return "unknown";
}

Task task_from_string(std::string_view name) {
  if (name == "verification") return Task::verification;
  if (name == "gender") return Task::gender;
  if (name == "age") return Task::age;
  if (name == "classification") return Task::classification;
  throw ParseError("unknown task name: " + std::string(name));
}

std::string_view to_string(Gender gender) {
  return gender == Gender::male ? "male" : "female";
}

Gender gender_from_string(std::string_view name) {
  if (name == "male") return Gender::male;
  if (name == "female") return Gender::female;
  throw ParseError("unknown gender label: " + std::string(name));
}

Task truth_task(const GroundTruth& truth) {
  switch (truth.index()) {
    case 0: return Task::verification;
    case 1: return Task::gender;
    case 2: return Task::age;
    default: return Task::classification;
  }
}

std::string ImageRef::content_digest() const { return file_digest_hex(path); }

Protocol::PairCounts Protocol::pair_counts() const {
  if (task != Task::verification) {
    throw ContractError("pair_counts is defined for verification protocols");
  }
  PairCounts counts;
  for (const auto& trial : trials) {
    if (std::get<SamePerson>(trial.truth).value) {
      ++counts.genuine;
    } else {
      ++counts.imposter;
    }
  }
  return counts;
}

std::map<std::string, std::size_t> Protocol::truth_histogram() const {
  std::map<std::string, std::size_t> hist;
  for (const auto& trial : trials) ++hist[strata_key(trial)];
  return hist;
}

std::string strata_key(const TrialSpec& spec) {
  switch (spec.task) {
    case Task::verification:
      return std::get<SamePerson>(spec.truth).value ? "genuine" : "imposter";
    case Task::gender:
      return std::string(to_string(std::get<Gender>(spec.truth)));
    case Task::classification:
      return std::get<ClassLabel>(spec.truth).value;
    case Task::age: {
      int age = std::get<AgeYears>(spec.truth).value;
      int bucket = std::min(age / 10, 8);
      if (bucket == 8) return "80+";
      return std::to_string(bucket * 10) + "-" + std::to_string(bucket * 10 + 9);
    }
  }
  return "unknown";
}

void validate_protocol(const Protocol& protocol) {
  if (protocol.name.empty()) {
    throw IntegrityError("protocol name must be non-empty");
  }
  if (protocol.label_set.has_value() && protocol.task != Task::classification) {
    throw IntegrityError("label_set is only valid for classification");
  }
  if (protocol.task == Task::classification &&
      (!protocol.label_set.has_value() || protocol.label_set->empty())) {
    throw IntegrityError("classification protocol requires a label set");
  }
  std::unordered_set<std::string> label_lookup;
  if (protocol.label_set) {
    for (const auto& label : *protocol.label_set) {
      if (!label_lookup.insert(label).second) {
        throw IntegrityError("duplicate label in label set: " + label);
      }
    }
  }
  std::unordered_set<std::string> ids;
  ids.reserve(protocol.trials.size());
  for (const auto& trial : protocol.trials) {
    if (trial.id.empty()) throw IntegrityError("trial id must be non-empty");
    if (!ids.insert(trial.id).second) {
      throw IntegrityError("duplicate trial id: " + trial.id);
    }
    if (trial.task != protocol.task) {
      throw IntegrityError("trial " + trial.id + " task differs from protocol");
    }
    std::size_t expected_images =
        trial.task == Task::verification ? 2 : 1;
    if (trial.images.size() != expected_images) {
      throw IntegrityError("trial " + trial.id + " expects " +
                           std::to_string(expected_images) + " image(s), has " +
                           std::to_string(trial.images.size()));
    }
    for (const auto& image : trial.images) {
      if (image.path.empty()) {
        throw IntegrityError("trial " + trial.id + " has an empty image path");
      }
    }
    if (truth_task(trial.truth) != trial.task) {
      throw IntegrityError("trial " + trial.id +
                           " ground truth does not match its task");
    }
    if (const auto* age = std::get_if<AgeYears>(&trial.truth)) {
      if (age->value < 0 || age->value > 150) {
        throw IntegrityError("trial " + trial.id + " age out of range: " +
                             std::to_string(age->value));
      }
    }
    if (const auto* label = std::get_if<ClassLabel>(&trial.truth)) {
      if (!label_lookup.count(label->value)) {
        throw IntegrityError("trial " + trial.id + " label not in label set: " +
                             label->value);
      }
    }
  }
}

Protocol parse_lfw_pairs(std::string_view pairs_text,
                         const std::filesystem::path& image_root,
                         const std::string& name) {
  auto lines = split_lines(pairs_text);
  std::size_t line_no = 0;
  std::size_t header_index = lines.size();
  std::size_t folds = 0, pairs_per_fold = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto tokens = split_whitespace(lines[i]);
    if (tokens.empty()) continue;
    if (tokens.size() != 2 || !parse_uint(tokens[0], folds) ||
        !parse_uint(tokens[1], pairs_per_fold) || folds == 0 ||
        pairs_per_fold == 0) {
      throw ParseError("expected header \"<folds> <pairs-per-fold>\"", i + 1);
    }
    header_index = i;
    break;
  }
  if (header_index == lines.size()) {
    throw ParseError("pairs file has no header line");
  }

  Protocol protocol;
  protocol.name = name;
  protocol.task = Task::verification;
  std::size_t genuine = 0, imposter = 0;
  std::vector<std::string> missing;
  std::set<std::string> missing_seen;
  auto require_file = [&](const std::string& path) {
    if (!std::filesystem::exists(path) && missing_seen.insert(path).second) {
      missing.push_back(path);
    }
  };

  for (std::size_t i = header_index + 1; i < lines.size(); ++i) {
    line_no = i + 1;
    auto tokens = split_whitespace(lines[i]);
    if (tokens.empty()) continue;
    TrialSpec trial;
    trial.task = Task::verification;
    std::size_t a = 0, b = 0;
    if (tokens.size() == 3) {
      if (!parse_uint(tokens[1], a) || !parse_uint(tokens[2], b) || a == 0 ||
          b == 0) {
        throw ParseError("genuine pair line needs two positive indices",
                         line_no);
      }
      trial.images = {ImageRef{lfw_image_path(image_root, tokens[0], a)},
                      ImageRef{lfw_image_path(image_root, tokens[0], b)}};
      trial.truth = SamePerson{true};
      ++genuine;
    } else if (tokens.size() == 4) {
      if (!parse_uint(tokens[1], a) || !parse_uint(tokens[3], b) || a == 0 ||
          b == 0) {
        throw ParseError("imposter pair line needs two positive indices",
                         line_no);
      }
      trial.images = {ImageRef{lfw_image_path(image_root, tokens[0], a)},
                      ImageRef{lfw_image_path(image_root, tokens[2], b)}};
      trial.truth = SamePerson{false};
      ++imposter;
    } else {
      throw ParseError("pair line must have 3 or 4 tokens, found " +
                           std::to_string(tokens.size()),
                       line_no);
    }
    require_file(trial.images[0].path);
    require_file(trial.images[1].path);
    trial.id = trial_id(name, protocol.trials.size());
    protocol.trials.push_back(std::move(trial));
  }

  std::size_t expected = folds * pairs_per_fold;
  if (genuine != expected || imposter != expected) {
    throw IntegrityError(
        "header declares " + std::to_string(expected) + " genuine and " +
        std::to_string(expected) + " imposter pairs, found " +
        std::to_string(genuine) + " and " + std::to_string(imposter));
  }
  if (!missing.empty()) {
    throw MissingFilesError(std::move(missing));
  }
  validate_protocol(protocol);
  return protocol;
}

Protocol parse_pair_list(std::string_view csv_text,
                         const std::filesystem::path& image_root,
                         const std::string& name,
                         std::vector<std::string>* warnings) {
  Protocol protocol;
  protocol.name = name;
  protocol.task = Task::verification;
  std::set<std::string> seen_rows;
  auto lines = split_lines(csv_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_comment_or_blank(lines[i])) continue;
    auto fields = split_csv_row(lines[i]);
    if (fields.size() != 3) {
      throw ParseError("expected \"pathA,pathB,label\"", i + 1);
    }
    bool same = false;
    if (fields[2] == "1" || fields[2] == "genuine") {
      same = true;
    } else if (fields[2] == "0" || fields[2] == "imposter") {
      same = false;
    } else {
      throw ParseError("unknown pair label \"" + fields[2] + "\"", i + 1);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("empty image path", i + 1);
    }
    std::string row_key = fields[0] + "," + fields[1] + "," + fields[2];
    if (!seen_rows.insert(row_key).second && warnings) {
      warnings->push_back("duplicate pair row kept (line " +
                          std::to_string(i + 1) + "): " + row_key);
    }
    TrialSpec trial;
    trial.task = Task::verification;
    trial.images = {ImageRef{join_path(image_root, fields[0])},
                    ImageRef{join_path(image_root, fields[1])}};
    trial.truth = SamePerson{same};
    trial.id = trial_id(name, protocol.trials.size());
    protocol.trials.push_back(std::move(trial));
  }
  validate_protocol(protocol);
  return protocol;
}

Protocol parse_utkface_dir(const std::vector<std::string>& filenames,
                           const std::filesystem::path& image_root,
                           const std::string& name,
                           std::vector<std::string>* skipped) {
  static const std::regex kName(R"((\d{1,3})_([01])_(\d+)_(\d+)\.jpg)");
  Protocol protocol;
  protocol.name = name;
  protocol.task = Task::age;
  for (const auto& filename : filenames) {
    std::smatch match;
    if (!std::regex_match(filename, match, kName)) {
      if (skipped) skipped->push_back(filename);
      continue;
    }
    int age = std::stoi(match[1].str());
    if (age > 150) {
      if (skipped) skipped->push_back(filename);
      continue;
    }
    TrialSpec trial;
    trial.task = Task::age;
    trial.images = {ImageRef{(image_root / filename).string()}};
    trial.truth = AgeYears{age};
    trial.id = trial_id(name, protocol.trials.size());
    protocol.trials.push_back(std::move(trial));
  }
  if (protocol.trials.empty()) {
    throw ParseError("no filenames matched the age dataset convention");
  }
  validate_protocol(protocol);
  return protocol;
}

Protocol parse_label_manifest(std::string_view csv_text, Task task,
                              const std::optional<std::vector<std::string>>& label_set,
                              const std::filesystem::path& image_root,
                              const std::string& name) {
  if (task != Task::gender && task != Task::classification) {
    throw ContractError("label manifests carry gender or classification tasks");
  }
  if (task == Task::classification &&
      (!label_set.has_value() || label_set->empty())) {
    throw ContractError("classification manifest requires a label set");
  }
  std::unordered_set<std::string> allowed;
  if (label_set) allowed.insert(label_set->begin(), label_set->end());

  Protocol protocol;
  protocol.name = name;
  protocol.task = task;
  if (task == Task::classification) protocol.label_set = label_set;

  auto lines = split_lines(csv_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_comment_or_blank(lines[i])) continue;
    auto fields = split_csv_row(lines[i]);
    if (fields.size() != 2) {
      throw ParseError("expected \"path,label\"", i + 1);
    }
    if (fields[0].empty()) {
      throw ParseError("empty image path", i + 1);
    }
    TrialSpec trial;
    trial.task = task;
    trial.images = {ImageRef{join_path(image_root, fields[0])}};
    if (task == Task::gender) {
      if (fields[1] != "male" && fields[1] != "female") {
        throw ParseError("gender label must be \"male\" or \"female\", got \"" +
                             fields[1] + "\"",
                         i + 1);
      }
      trial.truth = gender_from_string(fields[1]);
    } else {
      if (!allowed.count(fields[1])) {
        throw ParseError("label \"" + fields[1] + "\" not in the label set",
                         i + 1);
      }
      trial.truth = ClassLabel{fields[1]};
    }
    trial.id = trial_id(name, protocol.trials.size());
    protocol.trials.push_back(std::move(trial));
  }
  validate_protocol(protocol);
  return protocol;
}

namespace {

// Engine output is consumed raw (modulo bias is irrelevant here); the
// standard distributions are not bit-stable across implementations.
std::vector<std::size_t> sample_without_replacement(
    std::vector<std::size_t> pool, std::size_t n, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace

Protocol subsample(const Protocol& protocol, std::size_t n,
                   std::uint64_t seed, bool stratify) {
  const std::size_t total = protocol.trials.size();
  if (n == 0) throw ContractError("subsample size must be positive");
  if (n > total) {
    throw ContractError("subsample size " + std::to_string(n) +
                        " exceeds trial count " + std::to_string(total));
  }
  if (n == total) return protocol;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  if (!stratify) {
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    chosen = sample_without_replacement(std::move(pool), n, rng);
  } else {
    // Categories in first-appearance order; quotas by floor-proportion
    // plus largest-remainder so per-category counts stay within one of
    // exact proportionality.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < total; ++i) {
      std::string key = strata_key(protocol.trials[i]);
      auto [it, inserted] = members.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back(i);
    }
    std::vector<std::size_t> quota(order.size());
    std::vector<std::size_t> remainder(order.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < order.size(); ++c) {
      std::size_t count = members[order[c]].size();
      quota[c] = n * count / total;
      remainder[c] = n * count % total;
      assigned += quota[c];
    }
    std::vector<std::size_t> by_remainder(order.size());
    for (std::size_t c = 0; c < order.size(); ++c) by_remainder[c] = c;
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) {
                       return remainder[a] > remainder[b];
                     });
    for (std::size_t k = 0; assigned < n; ++k) {
      ++quota[by_remainder[k]];
      ++assigned;
    }
    for (std::size_t c = 0; c < order.size(); ++c) {
      auto picked =
          sample_without_replacement(members[order[c]], quota[c], rng);
      chosen.insert(chosen.end(), picked.begin(), picked.end());
    }
  }
  std::sort(chosen.begin(), chosen.end());

  Protocol out;
  out.name = protocol.name;
  out.task = protocol.task;
  out.label_set = protocol.label_set;
  out.trials.reserve(chosen.size());
  for (std::size_t index : chosen) out.trials.push_back(protocol.trials[index]);
  validate_protocol(out);
  return out;
}

nlohmann::json truth_to_json(const GroundTruth& truth) {
  nlohmann::json j;
  if (const auto* same = std::get_if<SamePerson>(&truth)) {
    j["kind"] = "same_person";
    j["value"] = same->value;
  } else if (const auto* gender = std::get_if<Gender>(&truth)) {
    j["kind"] = "gender";
    j["value"] = std::string(to_string(*gender));
  } else if (const auto* age = std::get_if<AgeYears>(&truth)) {
    j["kind"] = "age_years";
    j["value"] = age->value;
  } else {
    j["kind"] = "class_label";
    j["value"] = std::get<ClassLabel>(truth).value;
  }
  return j;
}

GroundTruth truth_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "same_person") return SamePerson{j.at("value").get<bool>()};
  if (kind == "gender") {
    return gender_from_string(j.at("value").get<std::string>());
  }
  if (kind == "age_years") return AgeYears{j.at("value").get<int>()};
  if (kind == "class_label") {
    return ClassLabel{j.at("value").get<std::string>()};
  }
  throw ParseError("unknown ground-truth kind: " + kind);
}

nlohmann::json protocol_to_json(const Protocol& protocol) {
  nlohmann::json j;
  j["name"] = protocol.name;
  j["task"] = std::string(to_string(protocol.task));
  if (protocol.label_set) {
    j["label_set"] = *protocol.label_set;
  } else {
    j["label_set"] = nullptr;
  }
  auto trials = nlohmann::json::array();
  for (const auto& trial : protocol.trials) {
    nlohmann::json t;
    t["id"] = trial.id;
    t["task"] = std::string(to_string(trial.task));
    auto images = nlohmann::json::array();
    for (const auto& image : trial.images) images.push_back(image.path);
    t["images"] = images;
    t["truth"] = truth_to_json(trial.truth);
    trials.push_back(std::move(t));
  }
  j["trials"] = std::move(trials);
  return j;
}

Protocol protocol_from_json(const nlohmann::json& j) {
  Protocol protocol;
  protocol.name = j.at("name").get<std::string>();
  protocol.task = task_from_string(j.at("task").get<std::string>());
  if (j.contains("label_set") && !j.at("label_set").is_null()) {
    protocol.label_set = j.at("label_set").get<std::vector<std::string>>();
  }
  for (const auto& t : j.at("trials")) {
    TrialSpec trial;
    trial.id = t.at("id").get<std::string>();
    trial.task = task_from_string(t.at("task").get<std::string>());
    for (const auto& image : t.at("images")) {
      trial.images.push_back(ImageRef{image.get<std::string>()});
    }
    trial.truth = truth_from_json(t.at("truth"));
    protocol.trials.push_back(std::move(trial));
  }
  validate_protocol(protocol);
  return protocol;
}

std::string protocol_digest(const Protocol& protocol) {
  return sha256_hex(protocol_to_json(protocol).dump());
}

const std::vector<std::string>& cifar10_labels() {
  static const std::vector<std::string> labels = {
      "airplane", "automobile", "bird",  "cat",  "deer",
      "dog",      "frog",       "horse", "ship", "truck"};
  return labels;
}

}  // namespace biobench
