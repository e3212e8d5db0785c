#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "biobench/errors.hpp"
#include "biobench/protocol.hpp"
#include "support.hpp"

using namespace biobench;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

// Creates <root>/<name>/<name>_%04d.jpg placeholders so the pairs parser
// finds them.
void touch_lfw_image(const std::filesystem::path& root, const std::string& name,
                     int index) {
  char file[128];
  std::snprintf(file, sizeof file, "%s_%04d.jpg", name.c_str(), index);
  write_file(root / name / file, "x");
}

}  // namespace

TEST_CASE("pairs file: genuine and imposter lines") {
  TempDir dir("lfw");
  touch_lfw_image(dir.path, "Aaron_Peirsol", 1);
  touch_lfw_image(dir.path, "Aaron_Peirsol", 2);
  touch_lfw_image(dir.path, "Abel_Pacheco", 1);
  touch_lfw_image(dir.path, "Zydrunas_Ilgauskas", 3);

  std::string text =
      "1\t1\n"
      "Aaron_Peirsol\t1\t2\n"
      "Abel_Pacheco\t1\tZydrunas_Ilgauskas\t3\n";
  Protocol protocol = parse_lfw_pairs(text, dir.path, "lfw");

  REQUIRE(protocol.trials.size() == 2);
  CHECK(protocol.trials[0].images[0].path ==
        (dir.path / "Aaron_Peirsol" / "Aaron_Peirsol_0001.jpg").string());
  CHECK(protocol.trials[0].images[1].path ==
        (dir.path / "Aaron_Peirsol" / "Aaron_Peirsol_0002.jpg").string());
  CHECK(std::get<SamePerson>(protocol.trials[0].truth).value);
  CHECK_FALSE(std::get<SamePerson>(protocol.trials[1].truth).value);
  CHECK(protocol.trials[1].images[0].path.find("Abel_Pacheco") !=
        std::string::npos);
  CHECK(protocol.trials[1].images[1].path.find("Zydrunas_Ilgauskas") !=
        std::string::npos);
  CHECK(protocol.trials[0].id == "lfw/000000");
  CHECK(protocol.trials[1].id == "lfw/000001");
  auto counts = protocol.pair_counts();
  CHECK(counts.genuine == 1);
  CHECK(counts.imposter == 1);
}

TEST_CASE("pairs file: malformed lines carry the line number") {
  TempDir dir("lfw");
  touch_lfw_image(dir.path, "A", 1);
  touch_lfw_image(dir.path, "A", 2);

  SUBCASE("wrong token count") {
    try {
      parse_lfw_pairs("1\t1\nA\t1\n", dir.path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("non-numeric index") {
    try {
      parse_lfw_pairs("1\t1\nA\tone\t2\n", dir.path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("header/total mismatch") {
    CHECK_THROWS_AS(parse_lfw_pairs("2\t1\nA\t1\t2\n", dir.path),
                    IntegrityError);
  }
  SUBCASE("missing header") {
    CHECK_THROWS_AS(parse_lfw_pairs("", dir.path), ParseError);
  }
}

TEST_CASE("pairs file: unresolvable paths are all reported") {
  TempDir dir("lfw");
  touch_lfw_image(dir.path, "A", 1);
  std::string text =
      "1\t1\n"
      "A\t1\t2\n"
      "B\t1\tC\t2\n";
  try {
    parse_lfw_pairs(text, dir.path);
    FAIL("expected MissingFilesError");
  } catch (const MissingFilesError& e) {
    CHECK(e.missing().size() == 3);  // A_0002, B_0001, C_0002
  }
}

TEST_CASE("pair list: label tokens and duplicates") {
  Protocol protocol;
  std::vector<std::string> warnings;

  SUBCASE("numeric and named labels") {
    protocol = parse_pair_list(
        "a.jpg,b.jpg,1\na.jpg,c.jpg,0\nd.jpg,e.jpg,genuine\nf.jpg,g.jpg,"
        "imposter\n",
        "/data", "pairs", &warnings);
    REQUIRE(protocol.trials.size() == 4);
    CHECK(std::get<SamePerson>(protocol.trials[0].truth).value);
    CHECK_FALSE(std::get<SamePerson>(protocol.trials[1].truth).value);
    CHECK(std::get<SamePerson>(protocol.trials[2].truth).value);
    CHECK_FALSE(std::get<SamePerson>(protocol.trials[3].truth).value);
    CHECK(protocol.trials[0].images[0].path == "/data/a.jpg");
    CHECK(warnings.empty());
  }
  SUBCASE("unknown label") {
    CHECK_THROWS_AS(parse_pair_list("a.jpg,b.jpg,same\n", "/data", "pairs"),
                    ParseError);
  }
  SUBCASE("duplicate rows warn and are kept") {
    protocol = parse_pair_list("a.jpg,b.jpg,1\na.jpg,b.jpg,1\n", "/data",
                               "pairs", &warnings);
    CHECK(protocol.trials.size() == 2);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("line 2") != std::string::npos);
  }
  SUBCASE("comments and blank lines are ignored") {
    protocol = parse_pair_list("# header\n\na.jpg,b.jpg,1\n", "/data", "pairs");
    CHECK(protocol.trials.size() == 1);
  }
}

TEST_CASE("pair list: row count matches an independent line count") {
  std::ostringstream csv;
  std::size_t expected_rows = 700;
  for (std::size_t i = 0; i < expected_rows; ++i) {
    csv << "l" << i << ".jpg,r" << i << ".jpg," << (i % 2) << "\n";
  }
  std::string text = csv.str();
  // Independent oracle: newline count.
  std::size_t lines = std::count(text.begin(), text.end(), '\n');
  REQUIRE(lines == expected_rows);
  Protocol protocol = parse_pair_list(text, "/data", "pairs");
  CHECK(protocol.trials.size() == expected_rows);
  for (std::size_t i = 0; i + 1 < protocol.trials.size(); ++i) {
    CHECK(protocol.trials[i].id < protocol.trials[i + 1].id);
  }
}

TEST_CASE("age directory: filename grammar") {
  std::vector<std::string> skipped;
  SUBCASE("conforming names parse") {
    Protocol protocol = parse_utkface_dir(
        {"52_1_0_20170117.jpg", "12_0_0_20170110.jpg"}, "/faces", "utk",
        &skipped);
    REQUIRE(protocol.trials.size() == 2);
    CHECK(std::get<AgeYears>(protocol.trials[0].truth).value == 52);
    CHECK(std::get<AgeYears>(protocol.trials[1].truth).value == 12);
    CHECK(protocol.trials[0].images[0].path == "/faces/52_1_0_20170117.jpg");
    CHECK(skipped.empty());
  }
  SUBCASE("stragglers are skipped and reported") {
    Protocol protocol = parse_utkface_dir(
        {"52_1_0_20170117.jpg", "readme.txt", "61_1_20170109.jpg",
         "999_0_0_20170101.jpg"},
        "/faces", "utk", &skipped);
    CHECK(protocol.trials.size() == 1);
    REQUIRE(skipped.size() == 3);
    CHECK(std::find(skipped.begin(), skipped.end(), "readme.txt") !=
          skipped.end());
  }
  SUBCASE("zero parseable files is an error") {
    CHECK_THROWS_AS(parse_utkface_dir({"readme.txt"}, "/faces", "utk"),
                    ParseError);
  }
}

TEST_CASE("label manifest: gender and classification") {
  SUBCASE("balanced gender manifest") {
    std::ostringstream csv;
    for (int i = 0; i < 2700; ++i) csv << "m" << i << ".jpg,male\n";
    for (int i = 0; i < 2700; ++i) csv << "f" << i << ".jpg,female\n";
    Protocol protocol =
        parse_label_manifest(csv.str(), Task::gender, std::nullopt, "/faces",
                             "kaggle-gender");
    CHECK(protocol.trials.size() == 5400);
    auto hist = protocol.truth_histogram();
    CHECK(hist["male"] == 2700);
    CHECK(hist["female"] == 2700);
  }
  SUBCASE("classification labels must come from the set") {
    Protocol protocol = parse_label_manifest(
        "img1.png,frog\n", Task::classification, cifar10_labels(), "/cifar",
        "cifar10");
    CHECK(std::get<ClassLabel>(protocol.trials[0].truth).value == "frog");
    CHECK_THROWS_AS(
        parse_label_manifest("img2.png,zebra\n", Task::classification,
                             cifar10_labels(), "/cifar", "cifar10"),
        ParseError);
  }
  SUBCASE("bad gender label names the row") {
    try {
      parse_label_manifest("a.jpg,male\nb.jpg,Male\n", Task::gender,
                           std::nullopt, "/faces", "g");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("verification is not a manifest task") {
    CHECK_THROWS_AS(parse_label_manifest("a.jpg,male\n", Task::verification,
                                         std::nullopt, "/x", "v"),
                    ContractError);
  }
}

TEST_CASE("subsample: determinism and bounds") {
  std::ostringstream csv;
  for (int i = 0; i < 100; ++i) {
    csv << "a" << i << ".jpg,b" << i << ".jpg," << (i < 50 ? 1 : 0) << "\n";
  }
  Protocol protocol = parse_pair_list(csv.str(), "/d", "pairs");

  SUBCASE("identity when n equals the trial count") {
    CHECK(subsample(protocol, 100, 7, false) == protocol);
    CHECK(subsample(protocol, 100, 7, true) == protocol);
  }
  SUBCASE("same seed, same subset") {
    auto a = subsample(protocol, 30, 42, false);
    auto b = subsample(protocol, 30, 42, false);
    CHECK(a == b);
    auto c = subsample(protocol, 30, 43, false);
    CHECK(a.trials.size() == c.trials.size());
  }
  SUBCASE("output preserves original relative order and ids") {
    auto sampled = subsample(protocol, 30, 1, false);
    for (std::size_t i = 0; i + 1 < sampled.trials.size(); ++i) {
      CHECK(sampled.trials[i].id < sampled.trials[i + 1].id);
    }
  }
  SUBCASE("n out of range") {
    CHECK_THROWS_AS(subsample(protocol, 101, 0, false), ContractError);
    CHECK_THROWS_AS(subsample(protocol, 0, 0, false), ContractError);
  }
}

TEST_CASE("subsample: stratified splits preserve proportions") {
  TempDir dir("lfw");
  // 3000 genuine + 3000 imposter without touching 6000 files: pair-list
  // carrier, same stratification path.
  std::ostringstream csv;
  for (int i = 0; i < 6000; ++i) {
    csv << "x" << i << ".jpg,y" << i << ".jpg," << (i % 2) << "\n";
  }
  Protocol protocol = parse_pair_list(csv.str(), "/d", "lfw6000");
  auto counts = protocol.pair_counts();
  REQUIRE(counts.genuine == 3000);
  REQUIRE(counts.imposter == 3000);

  auto sampled = subsample(protocol, 100, 9, true);
  auto sampled_counts = sampled.pair_counts();
  CHECK(sampled_counts.genuine == 50);
  CHECK(sampled_counts.imposter == 50);
}

TEST_CASE("subsample: age protocols stratify over decade buckets") {
  std::vector<std::string> names;
  for (int decade = 0; decade < 9; ++decade) {
    for (int i = 0; i < 20; ++i) {
      names.push_back(std::to_string(decade * 10 + (i % 10)) + "_0_0_2017010" +
                      std::to_string(decade) + std::to_string(i) + ".jpg");
    }
  }
  Protocol protocol = parse_utkface_dir(names, "/faces", "ages");
  REQUIRE(protocol.trials.size() == 180);

  auto sampled = subsample(protocol, 45, 3, true);
  auto hist = sampled.truth_histogram();
  CHECK(hist.size() == 9);
  for (const auto& [bucket, count] : hist) {
    // 20 per decade and 45/180 proportional: exactly 5 per bucket.
    CHECK(count == 5);
  }
}

TEST_CASE("protocol serialization round-trips") {
  Protocol protocol = parse_label_manifest(
      "img1.png,frog\nimg2.png,ship\n", Task::classification, cifar10_labels(),
      "/cifar", "cifar10");
  auto j = protocol_to_json(protocol);
  Protocol back = protocol_from_json(j);
  CHECK(back == protocol);
  CHECK(protocol_digest(back) == protocol_digest(protocol));

  // Digest is canonical: independent of in-memory construction path.
  Protocol again = protocol_from_json(nlohmann::json::parse(j.dump()));
  CHECK(protocol_digest(again) == protocol_digest(protocol));
}

TEST_CASE("pairs writer round-trips through the parser") {
  TempDir dir("lfwrt");
  std::vector<std::string> pool = {"Ada", "Grace", "Alan", "Edsger",
                                   "Barbara", "Donald"};
  for (const auto& name : pool) {
    for (int index = 1; index <= 3; ++index) {
      touch_lfw_image(dir.path, name, index);
    }
  }
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 20; ++round) {
    std::size_t per_side = 1 + rng() % 8;
    std::ostringstream text;
    text << "1\t" << per_side << "\n";
    for (std::size_t i = 0; i < per_side; ++i) {
      const auto& name = pool[rng() % pool.size()];
      text << name << "\t" << 1 + rng() % 3 << "\t" << 1 + rng() % 3 << "\n";
    }
    for (std::size_t i = 0; i < per_side; ++i) {
      std::size_t a = rng() % pool.size();
      std::size_t b = (a + 1 + rng() % (pool.size() - 1)) % pool.size();
      text << pool[a] << "\t" << 1 + rng() % 3 << "\t" << pool[b] << "\t"
           << 1 + rng() % 3 << "\n";
    }
    Protocol protocol = parse_lfw_pairs(text.str(), dir.path, "rt");
    std::string rewritten = testsupport::write_lfw_pairs_text(protocol, 1);
    Protocol reparsed = parse_lfw_pairs(rewritten, dir.path, "rt");
    CHECK(reparsed == protocol);
  }
}

TEST_CASE("validation rejects structural breakage") {
  Protocol protocol = parse_pair_list("a.jpg,b.jpg,1\nc.jpg,d.jpg,0\n", "/d",
                                      "pairs");
  SUBCASE("duplicate ids raise before any protocol is returned") {
    auto j = protocol_to_json(protocol);
    j["trials"][1]["id"] = j["trials"][0]["id"];
    CHECK_THROWS_AS(protocol_from_json(j), IntegrityError);
  }
  SUBCASE("image count must match the task") {
    auto j = protocol_to_json(protocol);
    j["trials"][0]["images"] = {"only-one.jpg"};
    CHECK_THROWS_AS(protocol_from_json(j), IntegrityError);
  }
  SUBCASE("truth variant must match the task") {
    auto j = protocol_to_json(protocol);
    j["trials"][0]["truth"] = {{"kind", "age_years"}, {"value", 30}};
    CHECK_THROWS_AS(protocol_from_json(j), IntegrityError);
  }
  SUBCASE("age bound") {
    nlohmann::json j;
    j["name"] = "ages";
    j["task"] = "age";
    j["label_set"] = nullptr;
    j["trials"] = {{{"id", "ages/000000"},
                    {"task", "age"},
                    {"images", {"a.jpg"}},
                    {"truth", {{"kind", "age_years"}, {"value", 151}}}}};
    CHECK_THROWS_AS(protocol_from_json(j), IntegrityError);
  }
  SUBCASE("label set only for classification") {
    auto j = protocol_to_json(protocol);
    j["label_set"] = {"a", "b"};
    CHECK_THROWS_AS(protocol_from_json(j), IntegrityError);
  }
}

TEST_CASE("fuzzed parser inputs keep every trial invariant") {
  std::mt19937_64 rng(7);
  const char* labels[] = {"1", "0", "genuine", "imposter"};
  for (int round = 0; round < 50; ++round) {
    std::ostringstream csv;
    std::size_t rows = 1 + rng() % 40;
    for (std::size_t i = 0; i < rows; ++i) {
      csv << "a" << rng() % 10 << ".jpg,b" << rng() % 10 << ".jpg,"
          << labels[rng() % 4] << "\n";
    }
    Protocol protocol = parse_pair_list(csv.str(), "/d", "fuzz");
    CHECK(protocol.trials.size() == rows);
    std::set<std::string> ids;
    for (const auto& trial : protocol.trials) {
      CHECK(trial.task == Task::verification);
      CHECK(trial.images.size() == 2);
      CHECK(truth_task(trial.truth) == Task::verification);
      CHECK(ids.insert(trial.id).second);
    }
    // validate_protocol re-checks everything and must agree.
    CHECK_NOTHROW(validate_protocol(protocol));
  }
}

TEST_CASE("image digest is stable and memoized") {
  TempDir dir("digest");
  write_file(dir.path / "img.jpg", "stable-bytes");
  ImageRef ref{(dir.path / "img.jpg").string()};
  auto first = ref.content_digest();
  auto second = ref.content_digest();
  CHECK(first == second);
  CHECK(first.size() == 64);
}
