#include "ctieval/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "ctieval/errors.hpp"
#include "ctieval/hash.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/scoring.hpp"
#include "ctieval/random_util.hpp"

namespace ctieval::prompt {

namespace {

constexpr const char* kRoleLine = "You are a Cyber Threat Intelligence (CTI) analyst.\n\n";

constexpr const char* kExtractionSteps =
    "Step 1 - Extract the starting date of the campaign, the Advanced "
    "Persistent Threat (APT) responsible for the attacks, the CVE codes of "
    "the vulnerabilities exploited by the APT and the attack vectors "
    "employed.\n\n";

constexpr const char* kExtractionFormat =
    "Step 2 - Return the information filling in this JSON format: "
    "{\"nodes\": {\"APT\": [{\"name\": \"\"}], "
    "\"attack_vector\": [{\"name\": \"\"}], "
    "\"campaign_start\": \"\", "
    "\"CVE\": [{\"id\": \"\"}]}}\n"
    "Return only the JSON object, with no surrounding text.\n\n";

constexpr const char* kGenerationSteps =
    "Step 1 - Given the name and the description of an Advanced Persistent "
    "Threat (APT), provide the country of origin of the APT, the labels "
    "describing the type of actor, the goals it pursues, the CVE codes of "
    "the vulnerabilities it exploited over its campaigns and the attack "
    "vectors it employed.\n\n";

constexpr const char* kGenerationFormat =
    "Step 2 - Return the information filling in this JSON format: "
    "{\"country\": \"\", \"labels\": [\"\"], \"goals\": [\"\"], "
    "\"CVE\": [\"\"], \"attack_vector\": [\"\"]}\n"
    "Return only the JSON object, with no surrounding text.\n\n";

std::string join(const std::vector<std::string>& terms) {
  std::string out;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (i) out += ", ";
    out += terms[i];
  }
  return out;
}

std::string few_shot_header(EntityClass c) {
  switch (c) {
    case EntityClass::attack_vector:
      return "Examples to understand which attack vector the APT used.";
    case EntityClass::cve:
      return "Examples to understand which CVE codes the APT exploited.";
    case EntityClass::apt:
      return "Examples to understand which APT is responsible for the campaign.";
    case EntityClass::campaign:
      return "Examples to understand when the campaign started.";
    case EntityClass::country:
      return "Examples to understand the country of origin of the APT.";
    case EntityClass::labels:
      return "Examples to understand the labels of the APT.";
    case EntityClass::goals:
      return "Examples to understand the goals of the APT.";
  }
  return "Examples.";
}

void check_sources(const std::vector<FewShotExample>& few_shots,
                   const corpus::CorpusSplit* split) {
  if (!split) return;
  for (const auto& ex : few_shots) {
    if (split->in_test_set(ex.source_id))
      throw ContaminationError("few-shot example sourced from the test set: " +
                               ex.source_id);
    if (!split->is_dev_report(ex.source_id) && !split->is_dev_profile(ex.source_id))
      throw ValidationError("few-shot example source not in the dev pool: " +
                            ex.source_id);
  }
}

std::string few_shot_section(const std::vector<FewShotExample>& few_shots) {
  // Group by class, preserving first-appearance order.
  std::vector<EntityClass> order;
  std::map<EntityClass, std::vector<const FewShotExample*>> groups;
  for (const auto& ex : few_shots) {
    if (!groups.count(ex.entity_class)) order.push_back(ex.entity_class);
    groups[ex.entity_class].push_back(&ex);
  }
  std::string out;
  for (EntityClass c : order) {
    out += few_shot_header(c);
    out += "\n";
    for (const auto* ex : groups[c]) {
      out += "- " + ex->snippet + ": " + ex->gold_value + ".\n";
    }
  }
  out += "\n";
  return out;
}

Prompt assemble(TaskKind task, Mode mode,
                std::vector<std::pair<std::string, std::string>> sections) {
  Prompt p;
  p.task = task;
  p.mode = mode;
  p.sections = std::move(sections);
  for (const auto& [name, text] : p.sections) p.rendered += text;
  p.content_hash = sha256_hex(p.rendered);
  return p;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    current.push_back(ch);
    bool end = (ch == '.' || ch == '!' || ch == '?') &&
               (i + 1 >= text.size() ||
                std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      // trim
      size_t b = current.find_first_not_of(" \t\r\n");
      size_t e = current.find_last_not_of(" \t\r\n");
      if (b != std::string::npos) out.push_back(current.substr(b, e - b + 1));
      current.clear();
    }
  }
  size_t b = current.find_first_not_of(" \t\r\n");
  if (b != std::string::npos)
    out.push_back(current.substr(b, current.find_last_not_of(" \t\r\n") - b + 1));
  return out;
}

std::string icontains_sentence(const std::string& text, const std::string& needle) {
  const std::string folded_needle = fold_term(needle);
  for (const auto& s : split_sentences(text)) {
    if (fold_term(s).find(folded_needle) != std::string::npos) return s;
  }
  return {};
}

std::string clip(std::string s, size_t max_len = 240) {
  if (s.size() > max_len) {
    s.resize(max_len - 3);
    s += "...";
  }
  // Snippets become single prompt lines.
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

const std::string* Prompt::section(const std::string& name) const {
  for (const auto& [n, text] : sections)
    if (n == name) return &text;
  return nullptr;
}

Prompt build_extraction_prompt(const corpus::ThreatReport& report,
                               const ClosedWorldVocabulary& vocab,
                               const std::vector<FewShotExample>* few_shots,
                               const corpus::CorpusSplit* split) {
  if (report.text.empty())
    throw std::invalid_argument("report text is empty: " + report.report_id);
  if (few_shots) check_sources(*few_shots, split);

  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("role", kRoleLine);
  sections.emplace_back("steps", kExtractionSteps);
  sections.emplace_back("output-format", kExtractionFormat);
  sections.emplace_back("world-closing",
                        "The name of the attack vector can only be one of the "
                        "following: " +
                            join(vocab.attack_vectors) + ".\n\n");
  Mode mode = Mode::zero_shot;
  if (few_shots && !few_shots->empty()) {
    sections.emplace_back("few-shot", few_shot_section(*few_shots));
    mode = Mode::few_shot;
  }
  sections.emplace_back("input", "Step 3 - This is the CTI report to analyze:\n" +
                                     report.text + "\n");
  return assemble(TaskKind::extraction, mode, std::move(sections));
}

Prompt build_generation_prompt(const corpus::Corpus& corpus,
                               const std::string& profile_name,
                               const std::vector<FewShotExample>* few_shots,
                               const corpus::CorpusSplit* split) {
  const auto& profile = corpus.profile(profile_name);  // throws on unknown name
  return build_generation_prompt(profile.apt_name, profile.description,
                                 corpus.vocabularies, few_shots, split);
}

Prompt build_generation_prompt(const std::string& profile_name,
                               const std::string& description,
                               const ClosedWorldVocabulary& vocab,
                               const std::vector<FewShotExample>* few_shots,
                               const corpus::CorpusSplit* split) {
  if (profile_name.empty()) throw std::invalid_argument("profile name is empty");
  if (few_shots) check_sources(*few_shots, split);

  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("role", kRoleLine);
  sections.emplace_back("steps", kGenerationSteps);
  sections.emplace_back("output-format", kGenerationFormat);
  sections.emplace_back(
      "world-closing",
      "The country can only be one of the following: " + join(vocab.countries) +
          ".\nThe labels can only be chosen among the following: " +
          join(vocab.labels) +
          ".\nThe goals can only be chosen among the following: " +
          join(vocab.goals) +
          ".\nThe name of the attack vector can only be one of the following: " +
          join(vocab.attack_vectors) + ".\n\n");
  Mode mode = Mode::zero_shot;
  if (few_shots && !few_shots->empty()) {
    sections.emplace_back("few-shot", few_shot_section(*few_shots));
    mode = Mode::few_shot;
  }
  sections.emplace_back("input", "Step 3 - This is the APT to profile.\nName: " +
                                     profile_name + "\nDescription: " + description +
                                     "\n");
  return assemble(TaskKind::generation, mode, std::move(sections));
}

std::vector<FewShotExample> select_few_shots(const corpus::CorpusSplit& split,
                                             const corpus::Corpus& corpus,
                                             TaskKind task, EntityClass entity_class,
                                             int k, int seed) {
  if (k < 1) throw std::invalid_argument("few-shot count k must be >= 1");

  const bool from_reports = task == TaskKind::extraction;
  std::vector<std::string> candidates;
  if (from_reports) {
    for (const auto& id : split.dev_reports) {
      if (!corpus.campaign_truths.count(id)) continue;
      const auto& t = corpus.truth(id);
      bool has_value = true;
      if (entity_class == EntityClass::cve) has_value = !t.cves.empty();
      if (entity_class == EntityClass::attack_vector)
        has_value = !t.attack_vectors.empty();
      if (has_value) candidates.push_back(id);
    }
  } else {
    for (const auto& name : split.dev_profiles) {
      const auto& p = corpus.profile(name);
      bool has_value = true;
      if (entity_class == EntityClass::cve) has_value = !p.cves.empty();
      if (entity_class == EntityClass::attack_vector)
        has_value = !p.attack_vectors.empty();
      if (has_value) candidates.push_back(name);
    }
  }

  if (static_cast<int>(candidates.size()) < k)
    throw std::invalid_argument(
        "not enough few-shot candidates for class " + to_string(entity_class) +
        ": have " + std::to_string(candidates.size()) + ", need " +
        std::to_string(k));

  std::sort(candidates.begin(), candidates.end());
  std::mt19937_64 rng(static_cast<uint64_t>(seed));
  det_shuffle(candidates, rng);
  candidates.resize(static_cast<size_t>(k));

  std::vector<FewShotExample> out;
  for (const auto& id : candidates) {
    FewShotExample ex;
    ex.source_id = id;
    ex.entity_class = entity_class;
    if (from_reports) {
      const auto& report = corpus.report(id);
      const auto& t = corpus.truth(id);
      std::string probe;
      switch (entity_class) {
        case EntityClass::apt:
          ex.gold_value = t.apt_name;
          probe = t.apt_name;
          break;
        case EntityClass::campaign:
          ex.gold_value = t.apt_name + " / " + t.start_date.format();
          probe = std::to_string(t.start_date.year);
          break;
        case EntityClass::cve:
          ex.gold_value = t.cves.front();
          probe = t.cves.front();
          break;
        case EntityClass::attack_vector:
          ex.gold_value = t.attack_vectors.front();
          probe = t.attack_vectors.front();
          break;
        default:
          break;
      }
      std::string sentence = icontains_sentence(report.text, probe);
      if (sentence.empty()) sentence = split_sentences(report.text).front();
      ex.snippet = clip(sentence);
    } else {
      const auto& profile = corpus.profile(id);
      switch (entity_class) {
        case EntityClass::country: ex.gold_value = profile.country; break;
        case EntityClass::labels: ex.gold_value = join(profile.labels); break;
        case EntityClass::goals: ex.gold_value = join(profile.goals); break;
        case EntityClass::cve:
          ex.gold_value = profile.cves.empty() ? "" : profile.cves.front();
          break;
        case EntityClass::attack_vector:
          ex.gold_value =
              profile.attack_vectors.empty() ? "" : profile.attack_vectors.front();
          break;
        default:
          break;
      }
      auto sentences = split_sentences(profile.description);
      ex.snippet = clip(profile.apt_name + ": " +
                        (sentences.empty() ? profile.description : sentences.front()));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<FinetuneRecord> emit_finetune_dataset(const corpus::CorpusSplit& split,
                                                  const corpus::Corpus& corpus,
                                                  TaskKind task) {
  std::vector<FinetuneRecord> records;
  if (task == TaskKind::extraction) {
    if (split.dev_reports.empty())
      throw std::invalid_argument("dev pool has no reports");
    for (const auto& id : split.dev_reports) {
      if (!corpus.campaign_truths.count(id)) continue;
      FinetuneRecord rec;
      rec.prompt = build_extraction_prompt(corpus.report(id), corpus.vocabularies);
      rec.gold_completion = kg::extraction_answer_json(corpus.truth(id));

      gateway::ModelResponse echo;
      echo.text = rec.gold_completion;
      auto outcome = kg::parse_extraction(echo, corpus.vocabularies,
                                          kg::Strictness::strict);
      bool ok = outcome.status == kg::ParseStatus::ok;
      if (ok) {
        auto counts = scoring::score_extraction(&*outcome.graph, corpus.truth(id),
                                                corpus.vocabularies,
                                                scoring::DateGranularity::year_month);
        for (const auto& c : counts) ok = ok && c.fp == 0 && c.fn == 0;
      }
      if (!ok)
        throw ValidationError("fine-tune record does not round-trip: " + id);
      records.push_back(std::move(rec));
    }
  } else {
    if (split.dev_profiles.empty())
      throw std::invalid_argument("dev pool has no profiles");
    for (const auto& name : split.dev_profiles) {
      FinetuneRecord rec;
      rec.prompt = build_generation_prompt(corpus, name);
      rec.gold_completion = kg::generation_answer_json(corpus.profile(name));

      gateway::ModelResponse echo;
      echo.text = rec.gold_completion;
      auto outcome = kg::parse_generation(echo, corpus.vocabularies,
                                          kg::Strictness::strict);
      bool ok = outcome.status == kg::ParseStatus::ok;
      if (ok) {
        auto counts = scoring::score_generation(&*outcome.graph, corpus.profile(name),
                                                corpus.vocabularies);
        for (const auto& c : counts) ok = ok && c.fp == 0 && c.fn == 0;
      }
      if (!ok)
        throw ValidationError("fine-tune record does not round-trip: " + name);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

void write_finetune_jsonl(const std::vector<FinetuneRecord>& records,
                          const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
  if (!out) throw LoadError("cannot write fine-tune dataset: " + path.string());
  for (const auto& rec : records) {
    nlohmann::json line = {{"prompt", rec.prompt.rendered},
                           {"completion", rec.gold_completion}};
    out << line.dump() << "\n";
  }
}

void dump_prompt(const Prompt& p, const std::string& item_id,
                 const std::filesystem::path& out_root) {
  auto dir = out_root / "prompts" / to_string(p.task) / to_string(p.mode);
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / (item_id + ".txt"), std::ios::binary);
  out << p.rendered;
}

}  // namespace ctieval::prompt
