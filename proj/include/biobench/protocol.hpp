#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace biobench {

enum class Task { verification, gender, age, classification };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

enum class Gender { male, female };

std::string_view to_string(Gender gender);
Gender gender_from_string(std::string_view name);

struct SamePerson {
  bool value = false;
  bool operator==(const SamePerson&) const = default;
};

struct AgeYears {
  int value = 0;  // 0..150
  bool operator==(const AgeYears&) const = default;
};

struct ClassLabel {
  std::string value;  // member of the owning protocol's label set
  bool operator==(const ClassLabel&) const = default;
};

// Tagged ground truth; the active alternative must match the trial's task.
using GroundTruth = std::variant<SamePerson, Gender, AgeYears, ClassLabel>;

// Which task a truth variant belongs to.
Task truth_task(const GroundTruth& truth);

// A file-backed image. The content digest is computed on first use and
// memoized process-wide; equality is by path.
struct ImageRef {
  std::string path;

  std::string content_digest() const;
  bool operator==(const ImageRef&) const = default;
};

// One evaluation unit: 2 images for verification, 1 otherwise.
struct TrialSpec {
  std::string id;  // "<protocol-name>/<6-digit ordinal>", unique in protocol
  Task task = Task::verification;
  std::vector<ImageRef> images;
  GroundTruth truth;

  bool operator==(const TrialSpec&) const = default;
};

struct Protocol {
  std::string name;
  Task task = Task::verification;
  std::optional<std::vector<std::string>> label_set;  // classification only
  std::vector<TrialSpec> trials;

  struct PairCounts {
    std::size_t genuine = 0;
    std::size_t imposter = 0;
  };
  // Verification only; throws ContractError for other tasks.
  PairCounts pair_counts() const;

  // Trial count per truth category ("genuine"/"imposter", gender names,
  // class labels, or decade buckets for age).
  std::map<std::string, std::size_t> truth_histogram() const;

  bool operator==(const Protocol&) const = default;
};

// Category key used for histograms and stratified subsampling. Age uses
// decade buckets 0-9, 10-19, ..., 80+.
std::string strata_key(const TrialSpec& spec);

// Enforces every structural invariant: unique ids, task/truth/image-count
// agreement, age bounds, label-set membership. Throws IntegrityError or
// ContractError. All parsers and the deserializer run this before
// returning a protocol.
void validate_protocol(const Protocol& protocol);

// Pairs-file convention: a header "<folds> <pairs-per-fold>", then
// <folds>*<pairs-per-fold> genuine lines "name i j" and as many imposter
// lines "name1 i name2 j". Images resolve as
// <image_root>/<name>/<name>_%04d.jpg and must all exist.
Protocol parse_lfw_pairs(std::string_view pairs_text,
                         const std::filesystem::path& image_root,
                         const std::string& name = "lfw");

// Generic verification pair list: rows "pathA,pathB,label" with label in
// {1,0,genuine,imposter}. Paths are joined onto image_root unless
// absolute. Duplicate rows are kept and reported through `warnings`.
Protocol parse_pair_list(std::string_view csv_text,
                         const std::filesystem::path& image_root,
                         const std::string& name,
                         std::vector<std::string>* warnings = nullptr);

// Age protocol from filenames shaped "<age>_<gender>_<race>_<timestamp>.jpg".
// Non-matching names are skipped and reported through `skipped`; zero
// parseable files is an error.
Protocol parse_utkface_dir(const std::vector<std::string>& filenames,
                           const std::filesystem::path& image_root,
                           const std::string& name,
                           std::vector<std::string>* skipped = nullptr);

// Gender or classification protocol from rows "path,label". Gender labels
// must be "male"/"female"; classification labels must come from label_set.
Protocol parse_label_manifest(std::string_view csv_text, Task task,
                              const std::optional<std::vector<std::string>>& label_set,
                              const std::filesystem::path& image_root,
                              const std::string& name);

// Deterministic subset of n trials for a fixed (protocol, n, seed,
// stratify). Stratified mode preserves per-category proportions to within
// one trial. Output keeps original ids and relative order.
Protocol subsample(const Protocol& protocol, std::size_t n,
                   std::uint64_t seed, bool stratify);

// Canonical serialization: stable key order, no derived fields. Digest is
// the SHA-256 of the compact dump.
nlohmann::json protocol_to_json(const Protocol& protocol);
Protocol protocol_from_json(const nlohmann::json& j);
std::string protocol_digest(const Protocol& protocol);

nlohmann::json truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

// CIFAR-10 class names in canonical order.
const std::vector<std::string>& cifar10_labels();

}  // namespace biobench
