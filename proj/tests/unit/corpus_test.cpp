#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "ctieval/corpus.hpp"
#include "ctieval/errors.hpp"

using namespace ctieval;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtureCorpus = fs::path(CTIEVAL_FIXTURE_DIR) / "corpus";

fs::path make_temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() /
             ("ctieval_corpus_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void copy_fixture_corpus(const fs::path& dst) {
  fs::copy(kFixtureCorpus, dst, fs::copy_options::recursive);
}

// In-memory corpus with n reports and one profile, enough for split tests.
corpus::Corpus synthetic_corpus(int n) {
  corpus::Corpus c;
  c.vocabularies.attack_vectors = {"unknown"};
  c.vocabularies.countries = {"nowhere"};
  c.vocabularies.labels = {"spy"};
  c.vocabularies.goals = {"espionage"};
  for (int i = 0; i < n; ++i) {
    corpus::ThreatReport r;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "r%03d", i);
    r.report_id = buf;
    r.text = "synthetic";
    r.word_count = 1;
    c.reports.push_back(std::move(r));
  }
  corpus::AptProfile p;
  p.apt_name = "SoloGroup";
  p.description = "synthetic profile";
  p.country = "nowhere";
  p.labels = {"spy"};
  p.goals = {"espionage"};
  c.apt_profiles.emplace(p.apt_name, p);
  return c;
}

}  // namespace

TEST_CASE("fixture corpus loads with expected shape") {
  auto c = corpus::load_corpus(kFixtureCorpus);
  CHECK(c.reports.size() == 12);
  CHECK(c.campaign_truths.size() == 12);
  CHECK(c.apt_profiles.size() == 6);
  CHECK(c.vocabularies.countries.size() == 17);

  // word_count equals whitespace-token count
  for (const auto& r : c.reports) {
    std::istringstream in(r.text);
    std::string tok;
    int n = 0;
    while (in >> tok) ++n;
    CHECK(r.word_count == n);
    CHECK_FALSE(r.text.empty());
  }

  // referential integrity
  for (const auto& [id, truth] : c.campaign_truths) {
    CHECK(c.has_report(id));
    CHECK(c.has_profile(truth.apt_name));
    CHECK(truth.cves.size() <= 6);
    CHECK(truth.attack_vectors.size() <= 4);
  }
}

TEST_CASE("loading the same directory twice yields structurally equal corpora") {
  auto a = corpus::load_corpus(kFixtureCorpus);
  auto b = corpus::load_corpus(kFixtureCorpus);
  CHECK(a.structurally_equal(b));
}

TEST_CASE("empty reports directory is a load error") {
  auto dir = make_temp_dir("empty");
  copy_fixture_corpus(dir);
  fs::remove_all(dir / "reports");
  fs::create_directories(dir / "reports");
  CHECK_THROWS_WITH_AS(corpus::load_corpus(dir),
                       doctest::Contains("no reports found"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("missing ground truth file is a load error naming the file") {
  auto dir = make_temp_dir("missing");
  copy_fixture_corpus(dir);
  fs::remove(dir / "ground_truth.json");
  CHECK_THROWS_WITH_AS(corpus::load_corpus(dir),
                       doctest::Contains("ground_truth.json"), LoadError);
  fs::remove_all(dir);
}

TEST_CASE("ground truth referencing an unknown report is a validation error") {
  auto dir = make_temp_dir("unknown_report");
  copy_fixture_corpus(dir);
  {
    std::ofstream out(dir / "ground_truth.json");
    out << R"([{"report_id": "rpt-999", "apt_name": "APT37",
                "start_date": {"year": 2016}, "cves": [], "attack_vectors": []}])";
  }
  CHECK_THROWS_AS(corpus::load_corpus(dir), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("vocabulary violations are validation errors listing the value") {
  auto dir = make_temp_dir("vocab");
  copy_fixture_corpus(dir);
  {
    std::ofstream out(dir / "ground_truth.json");
    out << R"([{"report_id": "rpt-001", "apt_name": "APT37",
                "start_date": {"year": 2016},
                "cves": [], "attack_vectors": ["carrier pigeon"]}])";
  }
  CHECK_THROWS_WITH_AS(corpus::load_corpus(dir),
                       doctest::Contains("carrier pigeon"), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("non-canonical CVE ids are rejected") {
  auto dir = make_temp_dir("cve");
  copy_fixture_corpus(dir);
  {
    std::ofstream out(dir / "ground_truth.json");
    out << R"([{"report_id": "rpt-001", "apt_name": "APT37",
                "start_date": {"year": 2016},
                "cves": ["cve-16-1"], "attack_vectors": []}])";
  }
  CHECK_THROWS_WITH_AS(corpus::load_corpus(dir), doctest::Contains("cve-16-1"),
                       ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("split sizes follow round(ratio * total)") {
  auto c350 = synthetic_corpus(350);
  auto split = corpus::split_corpus(c350, 0.7, 42);
  CHECK(split.dev_reports.size() == 245);
  CHECK(split.test_reports.size() == 105);

  auto c12 = synthetic_corpus(12);
  auto s12 = corpus::split_corpus(c12, 0.7, 42);
  CHECK(s12.dev_reports.size() == 8);  // round(8.4)
  CHECK(s12.test_reports.size() == 4);
}

TEST_CASE("split is deterministic and a true partition") {
  auto c = corpus::load_corpus(kFixtureCorpus);
  auto a = corpus::split_corpus(c, 0.7, 7);
  auto b = corpus::split_corpus(c, 0.7, 7);
  CHECK(a.dev_reports == b.dev_reports);
  CHECK(a.test_reports == b.test_reports);
  CHECK(a.dev_profiles == b.dev_profiles);
  CHECK(a.test_profiles == b.test_profiles);

  // partition property over a range of seeds
  for (int seed = 0; seed < 25; ++seed) {
    auto s = corpus::split_corpus(c, 0.7, seed);
    std::set<std::string> all;
    for (const auto& id : s.dev_reports) {
      CHECK(s.test_reports.count(id) == 0);
      all.insert(id);
    }
    all.insert(s.test_reports.begin(), s.test_reports.end());
    CHECK(all.size() == c.reports.size());
  }
}

TEST_CASE("different seeds produce different partitions on 10 reports") {
  auto c = synthetic_corpus(10);
  // seeds picked to differ (collision odds are 1/C(10,7) per pair)
  auto a = corpus::split_corpus(c, 0.7, 1);
  auto b = corpus::split_corpus(c, 0.7, 2);
  CHECK(a.dev_reports != b.dev_reports);
}

TEST_CASE("split rejects out-of-range ratios and empty corpora") {
  auto c = synthetic_corpus(10);
  CHECK_THROWS_AS(corpus::split_corpus(c, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(corpus::split_corpus(c, 1.0, 1), std::invalid_argument);
  corpus::Corpus empty;
  CHECK_THROWS_AS(corpus::split_corpus(empty, 0.7, 1), std::invalid_argument);
}

TEST_CASE("stix bundle import maps objects onto truth records") {
  auto dir = make_temp_dir("stix");
  auto bundle_path = dir / "bundle.json";
  {
    std::ofstream out(bundle_path);
    out << R"({
      "type": "bundle",
      "id": "bundle--1",
      "objects": [
        {"type": "intrusion-set", "id": "intrusion-set--1", "name": "APT37",
         "description": "test set", "x_country": "North Korea",
         "labels": ["Nation-State Actor"], "goals": ["Espionage"]},
        {"type": "campaign", "id": "campaign--1", "name": "daybreak",
         "first_seen": "2016-06-01T00:00:00Z", "x_report_id": "rpt-001"},
        {"type": "vulnerability", "id": "vulnerability--1", "name": "CVE-2016-4117"},
        {"type": "attack-pattern", "id": "attack-pattern--1",
         "name": "Spear-Phishing Link"},
        {"type": "relationship", "id": "relationship--1",
         "relationship_type": "attributed-to",
         "source_ref": "campaign--1", "target_ref": "intrusion-set--1"},
        {"type": "relationship", "id": "relationship--2",
         "relationship_type": "exploits",
         "source_ref": "campaign--1", "target_ref": "vulnerability--1"},
        {"type": "relationship", "id": "relationship--3",
         "relationship_type": "uses",
         "source_ref": "campaign--1", "target_ref": "attack-pattern--1"}
      ]})";
  }
  auto imported = corpus::import_stix_bundle(bundle_path);
  REQUIRE(imported.campaigns.size() == 1);
  REQUIRE(imported.profiles.size() == 1);
  const auto& truth = imported.campaigns.front();
  CHECK(truth.report_id == "rpt-001");
  CHECK(truth.apt_name == "APT37");
  CHECK(truth.start_date.year == 2016);
  CHECK(truth.start_date.month == 6);
  CHECK(truth.cves == std::vector<std::string>{"CVE-2016-4117"});
  CHECK(truth.attack_vectors == std::vector<std::string>{"spear-phishing link"});
  const auto& profile = imported.profiles.front();
  CHECK(profile.apt_name == "APT37");
  CHECK(profile.country == "north korea");
  CHECK(profile.labels == std::vector<std::string>{"nation-state actor"});
  fs::remove_all(dir);
}
