// Scripted-fixture construction for offline runs: gold answers derived from
// ground truth, a JSON-aware tokenizer with reproducible pseudo-logprobs,
// and scenario-driven deviations for consistency experiments.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/gateway.hpp"
#include "ctieval/types.hpp"

namespace ctieval::fixtures {

// Splits JSON text into tokens that concatenate back to the exact text:
// structural characters, quotes and whitespace runs become their own
// tokens and string content is split into word pieces, so every field
// value sits on token boundaries. Logprobs are a deterministic function of
// (seed, position, token text).
std::vector<gateway::TokenLogProb> tokenize_json(const std::string& text,
                                                 uint64_t seed);

gateway::ModelResponse make_response(const std::string& text, uint64_t seed,
                                     bool with_tokens = true);

// One scripted deviation from the gold answer.
struct Deviation {
  TaskKind task = TaskKind::extraction;
  Mode mode = Mode::zero_shot;
  std::string item_id;  // report_id or apt_name
  int iteration = -1;   // -1 applies to every iteration
  EntityClass entity_class = EntityClass::cve;
  std::string replace_with;  // replaces the first gold value of that class
};

struct FixturePlan {
  int repetitions = 10;
  bool with_tokens = true;
  uint64_t token_seed = 0;
  std::vector<Deviation> deviations;
};

// Gold answer for one item with any matching deviations applied.
std::string scripted_answer(const corpus::Corpus& corpus, TaskKind task,
                            Mode mode, const std::string& item_id, int iteration,
                            const FixturePlan& plan);

struct FixtureEntry {
  std::string model_id;  // empty matches any model
  std::string prompt_hash;
  int iteration_index = 0;
  gateway::ModelResponse response;
};

struct FixtureBatch {
  std::vector<FixtureEntry> entries;
};

// Builds fixtures for every item (dev and test) of the requested tasks and
// modes, keyed against prompts built exactly the way the pipeline builds
// them. zero_shot and few_shot fixtures are keyed to `base_model_id`,
// fine_tuned fixtures to `finetuned_model_id`.
FixtureBatch build_fixture_batch(const corpus::Corpus& corpus,
                                 const corpus::CorpusSplit& split,
                                 const std::vector<TaskKind>& tasks,
                                 const std::vector<Mode>& modes,
                                 const std::string& base_model_id,
                                 const std::string& finetuned_model_id,
                                 int few_shot_k, int few_shot_seed,
                                 const FixturePlan& plan);

void register_batch(gateway::ScriptedProvider& provider, const FixtureBatch& batch);

// One JSON file per fixture under `dir`, loadable by
// ScriptedProvider::load_fixture_dir.
void write_batch(const FixtureBatch& batch, const std::filesystem::path& dir);

}  // namespace ctieval::fixtures
