// Experiment orchestration: runs prompt -> complete (xn) -> parse -> score
// for every (task, mode, model, item), persists run records, aggregates
// point metrics, bootstrap confidence intervals and calibration, and emits
// the result tables.
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctieval/consistency.hpp"
#include "ctieval/corpus.hpp"
#include "ctieval/gateway.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/prompt.hpp"
#include "ctieval/scoring.hpp"
#include "ctieval/types.hpp"

namespace ctieval::pipeline {

struct SplitSpec {
  double ratio = 0.7;
  int seed = 7;
};

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path out_dir = "out";
  SplitSpec split;
  std::vector<TaskKind> tasks = {TaskKind::extraction, TaskKind::generation};
  std::vector<Mode> modes = {Mode::zero_shot, Mode::few_shot, Mode::fine_tuned};
  std::vector<gateway::ModelConfig> models;
  int repetitions = 10;
  consistency::BootstrapConfig bootstrap;
  int calibration_bins = 10;
  kg::Strictness strictness = kg::Strictness::lenient;
  scoring::DateGranularity granularity = scoring::DateGranularity::year;
  // Modes are compared on the shared test set by default; this widens
  // zero-shot evaluation to the whole corpus.
  bool zero_shot_whole_corpus = false;
  int few_shot_k = 5;
  int few_shot_seed = 0;
  int workers = 1;
  std::optional<std::filesystem::path> aliases_path;
};

ExperimentConfig config_from_json_file(const std::filesystem::path& path);
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
// Hash over the canonical config serialization; names the run directory.
std::string config_hash(const ExperimentConfig& config);
// Throws ValidationError on an inconsistent config (no models, repetitions
// < 2, fine_tuned mode without fine-tuned model ids, ...).
void validate_config(const ExperimentConfig& config);

struct RunRecord {
  TaskKind task = TaskKind::extraction;
  Mode mode = Mode::zero_shot;
  std::string model;
  std::string item_id;
  int iteration_index = 0;
  std::string prompt_hash;
  std::string response_text;
  std::optional<std::vector<gateway::TokenLogProb>> tokens;
  bool logprobs_missing = false;
  std::string parse_status;
  std::vector<std::string> diagnostics;
  std::vector<scoring::MatchCounts> counts;
  std::vector<std::string> few_shot_sources;
  std::string fingerprint;
  std::string timestamp;  // empty for deterministic providers
  double latency_ms = 0.0;
};

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(const std::string& text);

// The few-shot examples one run uses, selected once per (task, config).
std::vector<prompt::FewShotExample> select_task_few_shots(
    const corpus::Corpus& corpus, const corpus::CorpusSplit& split, TaskKind task,
    int k, int seed);

// The prompt the pipeline sends for one (task, mode, item). Fixture
// generation builds against the same function so hashes line up.
prompt::Prompt build_item_prompt(const corpus::Corpus& corpus,
                                 const corpus::CorpusSplit& split, TaskKind task,
                                 Mode mode, const std::string& item_id,
                                 int few_shot_k, int few_shot_seed);

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<std::string> warnings;
};

// Executes the full five-step pipeline and returns the run directory:
//   <out>/runs/<config-hash>/
//     config.json, records/<task>_<mode>_<model>.jsonl, aggregates.json,
//     manifest.json, tables/{metrics,ci,calibration,bins}.csv, summary.txt
// Runs against the same config resume from the response cache.
RunResult run_experiment(const ExperimentConfig& config);

// Rebuilds the CI / calibration aggregates from persisted run records
// (standalone steps 4 and 5).
void recompute_ci(const std::filesystem::path& run_dir);
void recompute_calibration(const std::filesystem::path& run_dir);

// Writes the CSV tables and the human-readable summary from aggregates.json.
// Throws ValidationError naming the missing step when aggregates are absent.
void emit_tables(const std::filesystem::path& run_dir);

std::vector<RunRecord> load_records(const std::filesystem::path& run_dir);

// Contamination audit: every few-shot source referenced by a run record
// must belong to the dev pool. Returns human-readable violations.
std::vector<std::string> contamination_violations(
    const std::vector<RunRecord>& records, const corpus::CorpusSplit& split);

}  // namespace ctieval::pipeline
