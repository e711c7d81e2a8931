// Set matching of predicted graphs against ground truth, precision/recall/F1
// arithmetic, micro aggregation and the relative-delta helpers used in the
// result tables.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/types.hpp"

namespace ctieval::scoring {

enum class DateGranularity { year, year_month };

struct MatchCounts {
  EntityClass entity_class = EntityClass::campaign;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

// Absent metrics mark vacuous slices (tp+fp+fn == 0, or undefined P/R);
// they are excluded from aggregation and rendered as empty table cells.
struct Metrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

// Exact set matching over canonical values: tp = |pred ∩ truth|,
// fp = |pred \ truth|, fn = |truth \ pred|. Out-of-vocabulary predictions
// never match and therefore always count as false positives.
MatchCounts match_entities(std::vector<Canon> predicted, std::vector<Canon> truth,
                           EntityClass entity_class);

// Per-element TP decision, shared with the calibration step so confidence
// correctness labels can never diverge from the scorer.
bool value_correct(const Canon& predicted, const std::vector<Canon>& truth);

struct CampaignPrediction {
  std::optional<Canon> apt;
  std::optional<PartialDate> start_date;
};

bool campaign_match(const CampaignPrediction& predicted, const Canon& truth_apt,
                    const PartialDate& truth_start, DateGranularity granularity);

// One campaign slot per report: a matching prediction is tp=1; a present
// but wrong prediction is fp=1,fn=1; an absent prediction is fn=1.
MatchCounts match_campaign(const std::optional<CampaignPrediction>& predicted,
                           const Canon& truth_apt, const PartialDate& truth_start,
                           DateGranularity granularity);

Metrics compute_prf(const MatchCounts& counts);

// 2PR/(P+R), 0 when P+R == 0.
double harmonic_f1(double precision, double recall);

// Pools tp/fp/fn across reports (micro averaging), then computes P/R/F1.
// Mixing entity classes raises std::invalid_argument.
MatchCounts sum_counts(const std::vector<MatchCounts>& per_report);
Metrics aggregate_micro(const std::vector<MatchCounts>& per_report);

// 100 * (after - before) / before. Requires before > 0.
double relative_delta(double before, double after);

// Half-up rounding (ties away from zero), applied only at report-emission
// time; internal values stay full precision.
double round_half_up(double x, int decimals);
std::string format_2dp(double x);

// Graph-level scoring: one MatchCounts per entity class of the task.
// A null graph (failed parse) scores as an all-empty prediction.
std::vector<MatchCounts> score_extraction(const kg::ExtractionGraph* graph,
                                          const corpus::CampaignTruth& truth,
                                          const ClosedWorldVocabulary& vocab,
                                          DateGranularity granularity,
                                          const kg::AliasTable* aliases = nullptr);

std::vector<MatchCounts> score_generation(const kg::GenerationGraph* graph,
                                          const corpus::AptProfile& truth,
                                          const ClosedWorldVocabulary& vocab,
                                          const kg::AliasTable* aliases = nullptr);

// Canonical truth sets, normalized through the same path as predictions.
std::vector<Canon> canonical_truth_set(const std::vector<std::string>& values,
                                       EntityClass entity_class,
                                       const ClosedWorldVocabulary& vocab,
                                       const kg::AliasTable* aliases = nullptr);

}  // namespace ctieval::scoring
