// Parses model JSON output into typed predicted graphs, normalizes entity
// values against the closed world, and records the token span of every
// JSON field value for the calibration step.
//
// Output schemas:
//   extraction  {"nodes": {"APT": [{"name": s}], "campaign_start": s,
//                "CVE": [{"id": s}], "attack_vector": [{"name": s}]}}
//   generation  {"country": s, "labels": [s], "goals": [s],
//                "CVE": [s], "attack_vector": [s]}
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctieval/corpus.hpp"
#include "ctieval/gateway.hpp"
#include "ctieval/types.hpp"

namespace ctieval::kg {

enum class Strictness { strict, lenient };
enum class ParseStatus { ok, repaired, failed };

std::string to_string(ParseStatus s);

// Maps case-folded variant names to canonical ones (e.g. APT group aliases).
using AliasTable = std::map<std::string, std::string>;
AliasTable load_aliases(const std::filesystem::path& path);

// Token span of one JSON field value: [token_begin, token_end) into the
// response token list, [char_begin, char_end) into the response text.
// Covers value content only; keys, quotes and punctuation are excluded.
struct FieldSpan {
  int token_begin = 0;
  int token_end = 0;
  size_t char_begin = 0;
  size_t char_end = 0;
};

struct PredictedValue {
  std::string raw;  // value text as it appeared in the response
  Canon canon;
  std::string field;  // span key, e.g. "CVE[0]"
};

struct ExtractionGraph {
  std::optional<PredictedValue> apt;  // field "APT[0]"
  std::string campaign_start_raw;
  std::optional<PartialDate> campaign_start;
  std::vector<PredictedValue> cves;            // deduplicated by canonical value
  std::vector<PredictedValue> attack_vectors;  // deduplicated
  std::map<std::string, FieldSpan> field_spans;

  std::vector<Canon> cve_set() const;
  std::vector<Canon> attack_vector_set() const;
};

struct GenerationGraph {
  std::optional<PredictedValue> country;  // field "country"
  std::vector<PredictedValue> labels;
  std::vector<PredictedValue> goals;
  std::vector<PredictedValue> cves;
  std::vector<PredictedValue> attack_vectors;
  std::map<std::string, FieldSpan> field_spans;

  std::vector<Canon> label_set() const;
  std::vector<Canon> goal_set() const;
  std::vector<Canon> cve_set() const;
  std::vector<Canon> attack_vector_set() const;
};

// Structural equality over canonical content (spans and raw text excluded).
bool graphs_equal(const ExtractionGraph& a, const ExtractionGraph& b);
bool graphs_equal(const GenerationGraph& a, const GenerationGraph& b);

template <typename Graph>
struct ParseOutcome {
  ParseStatus status = ParseStatus::failed;
  std::optional<Graph> graph;  // absent iff status == failed
  std::vector<std::string> diagnostics;
};

ParseOutcome<ExtractionGraph> parse_extraction(const gateway::ModelResponse& response,
                                               const ClosedWorldVocabulary& vocab,
                                               Strictness strictness,
                                               const AliasTable* aliases = nullptr);

ParseOutcome<GenerationGraph> parse_generation(const gateway::ModelResponse& response,
                                               const ClosedWorldVocabulary& vocab,
                                               Strictness strictness,
                                               const AliasTable* aliases = nullptr);

// Canonicalizes one raw entity value. CVE ids are uppercased into
// CVE-YYYY-NNNN form; vocabulary classes are case-folded and looked up
// (aliases first); APT names fall back to case-folded identity. Values that
// cannot be mapped come back with in_vocab=false and are preserved so the
// scorer can count them as false positives.
Canon normalize_entity(const std::string& raw, EntityClass entity_class,
                       const ClosedWorldVocabulary& vocab,
                       const AliasTable* aliases = nullptr);

// Accepts "YYYY", "YYYY-MM", "YYYY-MM-DD" and month-name forms
// ("June 2016", "3 October 2016", "October 3, 2016").
std::optional<PartialDate> parse_partial_date(const std::string& raw);

// Canonical serialization of predicted graphs back into the output schema.
std::string serialize_extraction(const ExtractionGraph& g);
std::string serialize_generation(const GenerationGraph& g);

// Gold answers in the output schema, straight from ground truth. Used for
// fine-tune completions and scripted gold fixtures.
std::string extraction_answer_json(const corpus::CampaignTruth& truth);
std::string generation_answer_json(const corpus::AptProfile& profile);

}  // namespace ctieval::kg
