// Output-consistency quantification: repeated sampling of one item and
// percentile-bootstrap confidence intervals over metric values. A zero
// interval width is the operational definition of perfect consistency.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/gateway.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/prompt.hpp"
#include "ctieval/scoring.hpp"
#include "ctieval/types.hpp"

namespace ctieval::consistency {

enum class MetricName { precision, recall, f1 };
std::string to_string(MetricName m);

struct SampleContext {
  TaskKind task = TaskKind::extraction;
  Mode mode = Mode::zero_shot;
  std::string model;
  EntityClass entity_class = EntityClass::campaign;
};

struct MetricSample {
  int iteration_index = 0;
  MetricName metric = MetricName::f1;
  double value = 0.0;
  SampleContext context;
};

struct BootstrapConfig {
  int n = 10;       // population size (number of repetitions)
  int k = 0;        // resample size; 0 means k = n
  int resamples = 10000;  // B
  int lower_percentile = 5;
  int upper_percentile = 95;
  uint64_t seed = 0;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double point = 0.0;  // mean of the original samples
  double width = 0.0;  // upper - lower
};

// Draws `resamples` resamples of size k with replacement (indices from
// mt19937_64(seed) modulo n), collects their means and takes the
// nearest-rank 5th/95th percentiles of the sorted mean list. Deterministic
// given (samples, config).
ConfidenceInterval bootstrap_ci(const std::vector<double>& samples,
                                const BootstrapConfig& config);

// 100 * (upper - lower) / midpoint. Requires lower + upper > 0.
double relative_ci_width(const ConfidenceInterval& ci);

// One item under repeated evaluation: its prompt plus the ground truth
// needed to score each pass.
struct EvalItem {
  TaskKind task = TaskKind::extraction;
  std::string item_id;  // report_id or apt_name
  prompt::Prompt prompt;
  const corpus::CampaignTruth* campaign_truth = nullptr;  // extraction
  const corpus::AptProfile* profile_truth = nullptr;      // generation
};

struct IterationOutcome {
  int iteration_index = 0;
  gateway::ModelResponse response;
  kg::ParseStatus parse_status = kg::ParseStatus::failed;
  std::vector<std::string> diagnostics;
  std::vector<scoring::MatchCounts> counts;  // one per entity class
};

struct RepeatedRun {
  std::vector<IterationOutcome> iterations;
  std::vector<MetricSample> samples;  // per (class, metric, iteration)
};

// Executes n complete-parse-score passes with an identical prompt and
// distinct iteration indices. Requires n >= 2. A transport failure raises
// PartialRunError listing the completed indices; completed responses stay
// cached, so re-running resumes instead of re-querying.
RepeatedRun run_repeated(const EvalItem& item, Mode mode,
                         gateway::ModelGateway& gw,
                         const ClosedWorldVocabulary& vocab,
                         kg::Strictness strictness,
                         scoring::DateGranularity granularity, int n,
                         const kg::AliasTable* aliases = nullptr);

}  // namespace ctieval::consistency
