// Confidence calibration from token log probabilities: per-entity
// confidence (product of value-token probabilities, computed in the log
// domain), Expected Calibration Error and Brier Score.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/gateway.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/scoring.hpp"
#include "ctieval/types.hpp"

namespace ctieval::calibration {

struct EntityConfidence {
  EntityClass entity_class = EntityClass::apt;
  std::string value;       // canonical predicted value
  double confidence = 0.0; // in (0,1]
  bool correct = false;    // the scorer's TP decision for this prediction
};

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  double brier = 0.0;
  std::vector<ReliabilityBin> bins;
  int sample_count = 0;
};

// Maps every spanned field to the tokens of its value span only. Throws
// CapabilityError when the response carries no tokens and ValidationError
// when a span does not reproduce the value text exactly.
std::map<std::string, std::vector<gateway::TokenLogProb>> segment_tokens(
    const gateway::ModelResponse& response,
    const std::map<std::string, kg::FieldSpan>& field_spans);

// exp(sum of logprobs); requires a non-empty token list.
double entity_confidence(const std::vector<gateway::TokenLogProb>& tokens);

// Equal-width bins over [0,1]; confidence 1.0 falls into the last bin.
// ECE = sum_m (|B_m|/N) * |accuracy(B_m) - mean_confidence(B_m)|.
double ece(const std::vector<std::pair<double, bool>>& samples, int bin_count = 10);

// Mean over samples of (confidence - 1{correct})^2.
double brier(const std::vector<std::pair<double, bool>>& samples);

CalibrationReport build_report(const std::vector<std::pair<double, bool>>& samples,
                               int bin_count = 10);

// Groups entries by entity class and builds one report per class.
std::map<EntityClass, CalibrationReport> calibration_report(
    const std::vector<EntityConfidence>& entries, int bin_count = 10);

// Derives per-entity confidences for one parsed extraction response.
// Correctness labels come from the same scorer decisions that produced the
// match counts. The campaign confidence multiplies the APT-name and
// campaign-start token probabilities (the two components of the campaign
// entity). Entities absent from the output yield no entry.
std::vector<EntityConfidence> derive_extraction_confidences(
    const gateway::ModelResponse& response, const kg::ExtractionGraph& graph,
    const corpus::CampaignTruth& truth, const ClosedWorldVocabulary& vocab,
    scoring::DateGranularity granularity, const kg::AliasTable* aliases = nullptr);

std::vector<EntityConfidence> derive_generation_confidences(
    const gateway::ModelResponse& response, const kg::GenerationGraph& graph,
    const corpus::AptProfile& truth, const ClosedWorldVocabulary& vocab,
    const kg::AliasTable* aliases = nullptr);

}  // namespace ctieval::calibration
