// Evaluation corpus: threat reports, per-report campaign ground truth,
// APT profiles and the closed-world vocabularies.
//
// Directory layout:
//   <root>/reports/<report_id>.txt   UTF-8 plain text
//   <root>/ground_truth.json         array of campaign records
//   <root>/apt_profiles.json         array of profile records
//   <root>/vocabularies.json         {attack_vectors, countries, labels, goals}
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctieval/types.hpp"

namespace ctieval::corpus {

struct ThreatReport {
  std::string report_id;
  std::string text;
  std::optional<std::string> source_url;
  int word_count = 0;  // whitespace-token count of text
};

struct CampaignTruth {
  std::string report_id;
  std::string apt_name;
  PartialDate start_date;
  std::vector<std::string> cves;            // canonical CVE-YYYY-NNNN, sorted
  std::vector<std::string> attack_vectors;  // vocabulary terms, sorted
};

struct AptProfile {
  std::string apt_name;
  std::string description;
  std::string country;
  std::vector<std::string> labels;
  std::vector<std::string> goals;
  std::vector<std::string> cves;
  std::vector<std::string> attack_vectors;
};

struct Corpus {
  std::vector<ThreatReport> reports;  // sorted by report_id
  std::map<std::string, CampaignTruth> campaign_truths;  // keyed by report_id
  std::map<std::string, AptProfile> apt_profiles;        // keyed by apt_name
  ClosedWorldVocabulary vocabularies;

  const ThreatReport& report(const std::string& report_id) const;
  const CampaignTruth& truth(const std::string& report_id) const;
  const AptProfile& profile(const std::string& apt_name) const;
  bool has_report(const std::string& report_id) const;
  bool has_profile(const std::string& apt_name) const;

  bool structurally_equal(const Corpus& other) const;
};

// Disjoint, jointly exhaustive partition of report ids and APT names.
// |dev| = round(ratio * total), computed per collection.
struct CorpusSplit {
  std::set<std::string> dev_reports;
  std::set<std::string> test_reports;
  std::set<std::string> dev_profiles;
  std::set<std::string> test_profiles;
  double ratio = 0.7;
  int seed = 0;

  bool is_dev_report(const std::string& id) const { return dev_reports.count(id) > 0; }
  bool is_test_report(const std::string& id) const { return test_reports.count(id) > 0; }
  bool is_dev_profile(const std::string& name) const { return dev_profiles.count(name) > 0; }
  bool is_test_profile(const std::string& name) const { return test_profiles.count(name) > 0; }
  // True when `source_id` (report id or APT name) belongs to either test set.
  bool in_test_set(const std::string& source_id) const {
    return is_test_report(source_id) || is_test_profile(source_id);
  }
};

// Loads and validates the corpus. Throws LoadError when a required file is
// missing or no reports are found, ValidationError on any invariant breach
// (duplicate ids, dangling references, vocabulary violations, bad CVE ids).
Corpus load_corpus(const std::filesystem::path& root);

// Deterministic random partition. The same (corpus, ratio, seed) always
// produces the same split; report ids and APT names are partitioned
// independently. Throws std::invalid_argument unless 0 < ratio < 1 and the
// corpus is non-empty.
CorpusSplit split_corpus(const Corpus& corpus, double ratio, int seed);

// True iff `id` matches the canonical pattern CVE-<year>-<digits>.
bool is_canonical_cve(const std::string& id);

// Optional importer for STIX 2.1 bundles. Maps bundle objects onto
// CampaignTruth/AptProfile records:
//   intrusion-set                 -> AptProfile (description, goals, labels,
//                                    x_country custom property)
//   campaign + attributed-to      -> CampaignTruth (first_seen -> start_date,
//                                    x_report_id custom property)
//   uses -> attack-pattern        -> attack_vectors (pattern name)
//   targets/exploits -> vulnerability -> cves (vulnerability name)
struct StixImport {
  std::vector<CampaignTruth> campaigns;
  std::vector<AptProfile> profiles;
};
StixImport import_stix_bundle(const std::filesystem::path& bundle_path);

}  // namespace ctieval::corpus
