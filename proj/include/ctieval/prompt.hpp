// Prompt assembly for both tasks. Prompts are built from fixed, ordered
// sections (role, steps, output-format, world-closing, optional few-shot,
// input); rendering is deterministic and hashed so responses can be cached
// and fixtures keyed by prompt content.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/types.hpp"

namespace ctieval::prompt {

struct FewShotExample {
  std::string source_id;  // report_id or apt_name, always from the dev pool
  std::string snippet;    // single sentence excerpted from the source
  EntityClass entity_class;
  std::string gold_value;  // canonical value; sets joined with ", "
};

struct Prompt {
  TaskKind task = TaskKind::extraction;
  Mode mode = Mode::zero_shot;
  // (section_name, text) in fixed order; `rendered` is their concatenation.
  std::vector<std::pair<std::string, std::string>> sections;
  std::string rendered;
  std::string content_hash;  // sha256 of rendered

  const std::string* section(const std::string& name) const;
};

struct FinetuneRecord {
  Prompt prompt;
  std::string gold_completion;  // JSON answer in the task's output schema
};

// Builds the extraction prompt for one report. When `few_shots` is non-null
// the prompt gains an examples section and mode few_shot. When `split` is
// given, every example source is checked against the test set; a test-set
// source raises ContaminationError.
Prompt build_extraction_prompt(const corpus::ThreatReport& report,
                               const ClosedWorldVocabulary& vocab,
                               const std::vector<FewShotExample>* few_shots = nullptr,
                               const corpus::CorpusSplit* split = nullptr);

// Builds the generation prompt for one APT profile (name resolved against
// the corpus; unknown names raise std::invalid_argument).
Prompt build_generation_prompt(const corpus::Corpus& corpus,
                               const std::string& profile_name,
                               const std::vector<FewShotExample>* few_shots = nullptr,
                               const corpus::CorpusSplit* split = nullptr);

Prompt build_generation_prompt(const std::string& profile_name,
                               const std::string& description,
                               const ClosedWorldVocabulary& vocab,
                               const std::vector<FewShotExample>* few_shots = nullptr,
                               const corpus::CorpusSplit* split = nullptr);

// Deterministically selects k few-shot examples for one entity class from
// the dev pool. Extraction draws from dev reports, generation from dev
// profiles. Throws std::invalid_argument when fewer than k candidates
// exist, naming the class.
std::vector<FewShotExample> select_few_shots(const corpus::CorpusSplit& split,
                                             const corpus::Corpus& corpus,
                                             TaskKind task, EntityClass entity_class,
                                             int k, int seed);

// One record per dev-pool item: the zero-shot prompt paired with the gold
// answer. Every completion is checked to reparse under the task schema.
std::vector<FinetuneRecord> emit_finetune_dataset(const corpus::CorpusSplit& split,
                                                  const corpus::Corpus& corpus,
                                                  TaskKind task);

// One {"prompt": ..., "completion": ...} JSON object per line, LF endings.
void write_finetune_jsonl(const std::vector<FinetuneRecord>& records,
                          const std::filesystem::path& path);

// Audit dump: prompts/<task>/<mode>/<id>.txt under `out_root`.
void dump_prompt(const Prompt& p, const std::string& item_id,
                 const std::filesystem::path& out_root);

}  // namespace ctieval::prompt
