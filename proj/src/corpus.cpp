#include "ctieval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "ctieval/errors.hpp"
#include "ctieval/random_util.hpp"

namespace ctieval::corpus {

using nlohmann::json;

namespace {

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw LoadError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return doc;
}

int count_words(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  int n = 0;
  while (in >> tok) ++n;
  return n;
}

std::vector<std::string> string_list(const json& j, const std::string& field,
                                     const std::string& where) {
  if (!j.contains(field)) return {};
  if (!j.at(field).is_array())
    throw ValidationError(where + ": field '" + field + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : j.at(field)) {
    if (!v.is_string())
      throw ValidationError(where + ": field '" + field + "' must contain strings");
    out.push_back(v.get<std::string>());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void require_vocab_members(const ClosedWorldVocabulary& vocab, EntityClass cls,
                           const std::vector<std::string>& values,
                           const std::string& where) {
  std::vector<std::string> bad;
  for (const auto& v : values)
    if (!vocab.contains(cls, v)) bad.push_back(v);
  if (!bad.empty()) {
    std::string msg = where + ": values outside the " + to_string(cls) + " vocabulary:";
    for (const auto& b : bad) msg += " '" + b + "'";
    throw ValidationError(msg);
  }
}

void require_canonical_cves(const std::vector<std::string>& cves,
                            const std::string& where) {
  std::vector<std::string> bad;
  for (const auto& c : cves)
    if (!is_canonical_cve(c)) bad.push_back(c);
  if (!bad.empty()) {
    std::string msg = where + ": non-canonical CVE identifiers:";
    for (const auto& b : bad) msg += " '" + b + "'";
    throw ValidationError(msg);
  }
}

PartialDate parse_date_record(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("year"))
    throw ValidationError(where + ": start_date must be an object with a year");
  PartialDate d;
  d.year = j.at("year").get<int>();
  if (j.contains("month") && !j.at("month").is_null())
    d.month = j.at("month").get<int>();
  if (j.contains("day") && !j.at("day").is_null()) d.day = j.at("day").get<int>();
  if (!d.valid()) throw ValidationError(where + ": invalid start_date");
  return d;
}

}  // namespace

bool is_canonical_cve(const std::string& id) {
  static const std::regex pat(R"(CVE-\d{4}-\d{4,})");
  return std::regex_match(id, pat);
}

const ThreatReport& Corpus::report(const std::string& report_id) const {
  auto it = std::lower_bound(
      reports.begin(), reports.end(), report_id,
      [](const ThreatReport& r, const std::string& id) { return r.report_id < id; });
  if (it == reports.end() || it->report_id != report_id)
    throw std::invalid_argument("unknown report_id: " + report_id);
  return *it;
}

const CampaignTruth& Corpus::truth(const std::string& report_id) const {
  auto it = campaign_truths.find(report_id);
  if (it == campaign_truths.end())
    throw std::invalid_argument("no ground truth for report_id: " + report_id);
  return it->second;
}

const AptProfile& Corpus::profile(const std::string& apt_name) const {
  auto it = apt_profiles.find(apt_name);
  if (it == apt_profiles.end())
    throw std::invalid_argument("unknown APT name: " + apt_name);
  return it->second;
}

bool Corpus::has_report(const std::string& report_id) const {
  return std::any_of(reports.begin(), reports.end(),
                     [&](const ThreatReport& r) { return r.report_id == report_id; });
}

bool Corpus::has_profile(const std::string& apt_name) const {
  return apt_profiles.count(apt_name) > 0;
}

bool Corpus::structurally_equal(const Corpus& other) const {
  if (reports.size() != other.reports.size()) return false;
  for (size_t i = 0; i < reports.size(); ++i) {
    const auto& a = reports[i];
    const auto& b = other.reports[i];
    if (a.report_id != b.report_id || a.text != b.text ||
        a.source_url != b.source_url || a.word_count != b.word_count)
      return false;
  }
  auto truth_eq = [](const CampaignTruth& a, const CampaignTruth& b) {
    return a.report_id == b.report_id && a.apt_name == b.apt_name &&
           a.start_date == b.start_date && a.cves == b.cves &&
           a.attack_vectors == b.attack_vectors;
  };
  if (campaign_truths.size() != other.campaign_truths.size()) return false;
  for (const auto& [id, t] : campaign_truths) {
    auto it = other.campaign_truths.find(id);
    if (it == other.campaign_truths.end() || !truth_eq(t, it->second)) return false;
  }
  auto profile_eq = [](const AptProfile& a, const AptProfile& b) {
    return a.apt_name == b.apt_name && a.description == b.description &&
           a.country == b.country && a.labels == b.labels && a.goals == b.goals &&
           a.cves == b.cves && a.attack_vectors == b.attack_vectors;
  };
  if (apt_profiles.size() != other.apt_profiles.size()) return false;
  for (const auto& [name, p] : apt_profiles) {
    auto it = other.apt_profiles.find(name);
    if (it == other.apt_profiles.end() || !profile_eq(p, it->second)) return false;
  }
  const auto& va = vocabularies;
  const auto& vb = other.vocabularies;
  return va.attack_vectors == vb.attack_vectors && va.countries == vb.countries &&
         va.labels == vb.labels && va.goals == vb.goals;
}

Corpus load_corpus(const std::filesystem::path& root) {
  Corpus c;

  // Vocabularies first; everything else is validated against them.
  json vocab_doc = load_json_file(root / "vocabularies.json");
  c.vocabularies.attack_vectors =
      string_list(vocab_doc, "attack_vectors", "vocabularies.json");
  c.vocabularies.countries = string_list(vocab_doc, "countries", "vocabularies.json");
  c.vocabularies.labels = string_list(vocab_doc, "labels", "vocabularies.json");
  c.vocabularies.goals = string_list(vocab_doc, "goals", "vocabularies.json");
  c.vocabularies.validate();

  const auto reports_dir = root / "reports";
  if (!std::filesystem::is_directory(reports_dir))
    throw LoadError("missing file: " + reports_dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(reports_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    ThreatReport r;
    r.report_id = entry.path().stem().string();
    std::ifstream in(entry.path());
    std::ostringstream body;
    body << in.rdbuf();
    r.text = body.str();
    if (r.text.empty())
      throw ValidationError("report '" + r.report_id + "' has empty text");
    r.word_count = count_words(r.text);
    c.reports.push_back(std::move(r));
  }
  if (c.reports.empty()) throw LoadError("no reports found in " + reports_dir.string());
  std::sort(c.reports.begin(), c.reports.end(),
            [](const ThreatReport& a, const ThreatReport& b) {
              return a.report_id < b.report_id;
            });
  for (size_t i = 1; i < c.reports.size(); ++i)
    if (c.reports[i].report_id == c.reports[i - 1].report_id)
      throw ValidationError("duplicate report_id: " + c.reports[i].report_id);

  json profiles_doc = load_json_file(root / "apt_profiles.json");
  if (!profiles_doc.is_array())
    throw ValidationError("apt_profiles.json: expected an array");
  for (const auto& p : profiles_doc) {
    AptProfile prof;
    prof.apt_name = p.value("apt_name", "");
    const std::string where = "apt_profiles.json profile '" + prof.apt_name + "'";
    if (prof.apt_name.empty())
      throw ValidationError("apt_profiles.json: profile with empty apt_name");
    if (c.apt_profiles.count(prof.apt_name))
      throw ValidationError("duplicate apt_name: " + prof.apt_name);
    prof.description = p.value("description", "");
    prof.country = p.value("country", "");
    prof.labels = string_list(p, "labels", where);
    prof.goals = string_list(p, "goals", where);
    prof.cves = string_list(p, "cves", where);
    prof.attack_vectors = string_list(p, "attack_vectors", where);
    require_vocab_members(c.vocabularies, EntityClass::country, {prof.country}, where);
    if (prof.labels.empty()) throw ValidationError(where + ": labels must be non-empty");
    if (prof.goals.empty()) throw ValidationError(where + ": goals must be non-empty");
    require_vocab_members(c.vocabularies, EntityClass::labels, prof.labels, where);
    require_vocab_members(c.vocabularies, EntityClass::goals, prof.goals, where);
    require_vocab_members(c.vocabularies, EntityClass::attack_vector,
                          prof.attack_vectors, where);
    require_canonical_cves(prof.cves, where);
    c.apt_profiles.emplace(prof.apt_name, std::move(prof));
  }

  json truth_doc = load_json_file(root / "ground_truth.json");
  if (!truth_doc.is_array())
    throw ValidationError("ground_truth.json: expected an array");
  for (const auto& t : truth_doc) {
    CampaignTruth truth;
    truth.report_id = t.value("report_id", "");
    const std::string where = "ground_truth.json record '" + truth.report_id + "'";
    if (!c.has_report(truth.report_id))
      throw ValidationError(where + ": report_id does not resolve to a report");
    if (c.campaign_truths.count(truth.report_id))
      throw ValidationError("duplicate report_id in ground truth: " + truth.report_id);
    truth.apt_name = t.value("apt_name", "");
    if (truth.apt_name.empty())
      throw ValidationError(where + ": apt_name must be non-empty");
    if (!c.has_profile(truth.apt_name))
      throw ValidationError(where + ": apt_name '" + truth.apt_name +
                            "' does not resolve to a profile");
    truth.start_date = parse_date_record(t.at("start_date"), where);
    truth.cves = string_list(t, "cves", where);
    truth.attack_vectors = string_list(t, "attack_vectors", where);
    require_canonical_cves(truth.cves, where);
    require_vocab_members(c.vocabularies, EntityClass::attack_vector,
                          truth.attack_vectors, where);
    if (truth.cves.size() > 6)
      throw ValidationError(where + ": more than 6 CVEs in one campaign");
    if (truth.attack_vectors.size() > 4)
      throw ValidationError(where + ": more than 4 attack vectors in one campaign");
    c.campaign_truths.emplace(truth.report_id, std::move(truth));
  }

  return c;
}

CorpusSplit split_corpus(const Corpus& corpus, double ratio, int seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split ratio must be in (0,1)");
  if (corpus.reports.empty()) throw std::invalid_argument("corpus is empty");

  CorpusSplit split;
  split.ratio = ratio;
  split.seed = seed;

  std::mt19937_64 rng(static_cast<uint64_t>(seed));

  auto partition = [&](std::vector<std::string> ids, std::set<std::string>& dev,
                       std::set<std::string>& test) {
    std::sort(ids.begin(), ids.end());
    det_shuffle(ids, rng);
    const auto dev_count =
        static_cast<size_t>(std::lround(ratio * static_cast<double>(ids.size())));
    for (size_t i = 0; i < ids.size(); ++i)
      (i < dev_count ? dev : test).insert(ids[i]);
  };

  std::vector<std::string> report_ids;
  for (const auto& r : corpus.reports) report_ids.push_back(r.report_id);
  partition(std::move(report_ids), split.dev_reports, split.test_reports);

  std::vector<std::string> apt_names;
  for (const auto& [name, _] : corpus.apt_profiles) apt_names.push_back(name);
  partition(std::move(apt_names), split.dev_profiles, split.test_profiles);

  return split;
}

StixImport import_stix_bundle(const std::filesystem::path& bundle_path) {
  json bundle = load_json_file(bundle_path);
  if (bundle.value("type", "") != "bundle" || !bundle.contains("objects"))
    throw ValidationError("not a STIX bundle: " + bundle_path.string());

  std::map<std::string, json> by_id;
  std::vector<json> relationships;
  for (const auto& obj : bundle.at("objects")) {
    const std::string type = obj.value("type", "");
    if (type == "relationship")
      relationships.push_back(obj);
    else if (!obj.value("id", "").empty())
      by_id.emplace(obj.at("id").get<std::string>(), obj);
  }

  auto related = [&](const std::string& source_id, const std::string& rel_type,
                     const std::string& target_type) {
    std::vector<json> out;
    for (const auto& rel : relationships) {
      if (rel.value("source_ref", "") != source_id) continue;
      if (!rel_type.empty() && rel.value("relationship_type", "") != rel_type) continue;
      auto it = by_id.find(rel.value("target_ref", ""));
      if (it != by_id.end() && it->second.value("type", "") == target_type)
        out.push_back(it->second);
    }
    return out;
  };

  StixImport result;
  for (const auto& [id, obj] : by_id) {
    const std::string type = obj.value("type", "");
    if (type == "intrusion-set") {
      AptProfile prof;
      prof.apt_name = obj.value("name", "");
      prof.description = obj.value("description", "");
      prof.country = fold_term(obj.value("x_country", ""));
      for (const auto& l : obj.value("labels", json::array()))
        prof.labels.push_back(fold_term(l.get<std::string>()));
      for (const auto& g : obj.value("goals", json::array()))
        prof.goals.push_back(fold_term(g.get<std::string>()));
      for (const auto& v : related(id, "uses", "attack-pattern"))
        prof.attack_vectors.push_back(fold_term(v.value("name", "")));
      for (const auto& v : related(id, "targets", "vulnerability"))
        prof.cves.push_back(v.value("name", ""));
      std::sort(prof.labels.begin(), prof.labels.end());
      std::sort(prof.goals.begin(), prof.goals.end());
      std::sort(prof.cves.begin(), prof.cves.end());
      std::sort(prof.attack_vectors.begin(), prof.attack_vectors.end());
      result.profiles.push_back(std::move(prof));
    } else if (type == "campaign") {
      CampaignTruth truth;
      truth.report_id = obj.value("x_report_id", "");
      auto attributed = related(id, "attributed-to", "intrusion-set");
      if (!attributed.empty()) truth.apt_name = attributed.front().value("name", "");
      // first_seen: "YYYY-MM-DDThh:mm:ss..."; keep year-month-day.
      const std::string first_seen = obj.value("first_seen", "");
      if (first_seen.size() >= 10) {
        truth.start_date.year = std::stoi(first_seen.substr(0, 4));
        truth.start_date.month = std::stoi(first_seen.substr(5, 2));
        truth.start_date.day = std::stoi(first_seen.substr(8, 2));
      } else if (first_seen.size() >= 4) {
        truth.start_date.year = std::stoi(first_seen.substr(0, 4));
      }
      for (const auto& v : related(id, "uses", "attack-pattern"))
        truth.attack_vectors.push_back(fold_term(v.value("name", "")));
      for (const auto& v : related(id, "exploits", "vulnerability"))
        truth.cves.push_back(v.value("name", ""));
      for (const auto& v : related(id, "targets", "vulnerability"))
        truth.cves.push_back(v.value("name", ""));
      std::sort(truth.cves.begin(), truth.cves.end());
      truth.cves.erase(std::unique(truth.cves.begin(), truth.cves.end()),
                       truth.cves.end());
      std::sort(truth.attack_vectors.begin(), truth.attack_vectors.end());
      result.campaigns.push_back(std::move(truth));
    }
  }
  return result;
}

}  // namespace ctieval::corpus
