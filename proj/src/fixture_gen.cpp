#include "ctieval/fixture_gen.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ctieval/errors.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/pipeline.hpp"

namespace ctieval::fixtures {

using nlohmann::json;

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double token_prob(const std::string& token, size_t position, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : token) h = mix64(h ^ c);
  h = mix64(h ^ position);
  return 0.70 + 0.29 * static_cast<double>(h % 10000) / 10000.0;
}

}  // namespace

std::vector<gateway::TokenLogProb> tokenize_json(const std::string& text,
                                                 uint64_t seed) {
  std::vector<std::string> pieces;
  bool in_string = false;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      pieces.push_back(current);
      current.clear();
    }
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_string) {
      if (ch == '\\' && i + 1 < text.size()) {
        current.push_back(ch);
        current.push_back(text[++i]);
        continue;
      }
      if (ch == '"') {
        flush();
        pieces.emplace_back(1, ch);
        in_string = false;
        continue;
      }
      if (ch == ' ') {
        // Word pieces carry their leading space, mirroring BPE-style output.
        flush();
        current.push_back(ch);
        continue;
      }
      current.push_back(ch);
      continue;
    }
    if (ch == '"') {
      flush();
      pieces.emplace_back(1, ch);
      in_string = true;
      continue;
    }
    if (std::strchr("{}[]:,", ch)) {
      flush();
      pieces.emplace_back(1, ch);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty() &&
          !std::isspace(static_cast<unsigned char>(current.back())))
        flush();
      current.push_back(ch);
      continue;
    }
    if (!current.empty() && std::isspace(static_cast<unsigned char>(current.back())))
      flush();
    current.push_back(ch);
  }
  flush();

  std::vector<gateway::TokenLogProb> tokens;
  tokens.reserve(pieces.size());
  for (size_t i = 0; i < pieces.size(); ++i) {
    gateway::TokenLogProb t;
    t.token_text = pieces[i];
    t.logprob = std::log(token_prob(pieces[i], i, seed));
    t.position = static_cast<int>(i);
    tokens.push_back(std::move(t));
  }
  return tokens;
}

gateway::ModelResponse make_response(const std::string& text, uint64_t seed,
                                     bool with_tokens) {
  gateway::ModelResponse r;
  r.text = text;
  if (with_tokens) r.tokens = tokenize_json(text, seed);
  gateway::validate_tokens(r);
  return r;
}

namespace {

void apply_deviation(json& doc, TaskKind task, const Deviation& deviation) {
  auto replace_first = [&](json& arr, const char* object_key) {
    json value = object_key
                     ? json{{object_key, deviation.replace_with}}
                     : json(deviation.replace_with);
    if (arr.empty())
      arr.push_back(value);
    else
      arr[0] = value;
  };

  if (task == TaskKind::extraction) {
    json& nodes = doc.at("nodes");
    switch (deviation.entity_class) {
      case EntityClass::apt:
        replace_first(nodes.at("APT"), "name");
        break;
      case EntityClass::campaign:
        nodes["campaign_start"] = deviation.replace_with;
        break;
      case EntityClass::cve:
        replace_first(nodes.at("CVE"), "id");
        break;
      case EntityClass::attack_vector:
        replace_first(nodes.at("attack_vector"), "name");
        break;
      default:
        throw std::invalid_argument("deviation class not valid for extraction");
    }
  } else {
    switch (deviation.entity_class) {
      case EntityClass::country:
        doc["country"] = deviation.replace_with;
        break;
      case EntityClass::labels:
        replace_first(doc.at("labels"), nullptr);
        break;
      case EntityClass::goals:
        replace_first(doc.at("goals"), nullptr);
        break;
      case EntityClass::cve:
        replace_first(doc.at("CVE"), nullptr);
        break;
      case EntityClass::attack_vector:
        replace_first(doc.at("attack_vector"), nullptr);
        break;
      default:
        throw std::invalid_argument("deviation class not valid for generation");
    }
  }
}

}  // namespace

std::string scripted_answer(const corpus::Corpus& corpus, TaskKind task,
                            Mode mode, const std::string& item_id, int iteration,
                            const FixturePlan& plan) {
  std::string gold = task == TaskKind::extraction
                         ? kg::extraction_answer_json(corpus.truth(item_id))
                         : kg::generation_answer_json(corpus.profile(item_id));
  json doc = json::parse(gold);
  for (const auto& deviation : plan.deviations) {
    if (deviation.task != task || deviation.mode != mode) continue;
    if (deviation.item_id != item_id) continue;
    if (deviation.iteration != -1 && deviation.iteration != iteration) continue;
    apply_deviation(doc, task, deviation);
  }
  return doc.dump();
}

FixtureBatch build_fixture_batch(const corpus::Corpus& corpus,
                                 const corpus::CorpusSplit& split,
                                 const std::vector<TaskKind>& tasks,
                                 const std::vector<Mode>& modes,
                                 const std::string& base_model_id,
                                 const std::string& finetuned_model_id,
                                 int few_shot_k, int few_shot_seed,
                                 const FixturePlan& plan) {
  FixtureBatch batch;
  for (TaskKind task : tasks) {
    std::vector<std::string> items;
    if (task == TaskKind::extraction) {
      for (const auto& r : corpus.reports)
        if (corpus.campaign_truths.count(r.report_id)) items.push_back(r.report_id);
    } else {
      for (const auto& [name, _] : corpus.apt_profiles) items.push_back(name);
    }
    for (Mode mode : modes) {
      const std::string& model_id =
          mode == Mode::fine_tuned ? finetuned_model_id : base_model_id;
      for (const auto& item_id : items) {
        auto p = pipeline::build_item_prompt(corpus, split, task, mode, item_id,
                                             few_shot_k, few_shot_seed);
        for (int i = 0; i < plan.repetitions; ++i) {
          FixtureEntry entry;
          entry.model_id = model_id;
          entry.prompt_hash = p.content_hash;
          entry.iteration_index = i;
          const std::string text =
              scripted_answer(corpus, task, mode, item_id, i, plan);
          // Vary the logprob stream per fixture so calibration sees spread.
          uint64_t seed =
              mix64(plan.token_seed ^ fnv1a(item_id + "/" + std::to_string(i)));
          entry.response = make_response(text, seed, plan.with_tokens);
          batch.entries.push_back(std::move(entry));
        }
      }
    }
  }
  return batch;
}

void register_batch(gateway::ScriptedProvider& provider, const FixtureBatch& batch) {
  for (const auto& entry : batch.entries)
    provider.register_fixture(entry.model_id, entry.prompt_hash,
                              entry.iteration_index, entry.response);
}

void write_batch(const FixtureBatch& batch, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& entry : batch.entries) {
    json doc;
    doc["model_id"] = entry.model_id;
    doc["prompt_hash"] = entry.prompt_hash;
    doc["iteration_index"] = entry.iteration_index;
    doc["text"] = entry.response.text;
    if (entry.response.tokens) {
      json arr = json::array();
      for (const auto& t : *entry.response.tokens)
        arr.push_back({{"token_text", t.token_text},
                       {"logprob", t.logprob},
                       {"position", t.position}});
      doc["tokens"] = arr;
    }
    const std::string name = entry.prompt_hash.substr(0, 16) + "_" +
                             (entry.model_id.empty() ? "any" : entry.model_id) +
                             "_" + std::to_string(entry.iteration_index) + ".json";
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw LoadError("cannot write fixture file: " + (dir / name).string());
    out << doc.dump(2) << "\n";
  }
}

}  // namespace ctieval::fixtures
