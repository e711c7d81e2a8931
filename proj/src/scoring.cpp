#include "ctieval/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace ctieval::scoring {

namespace {

std::vector<Canon> dedup(std::vector<Canon> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

}  // namespace

MatchCounts match_entities(std::vector<Canon> predicted, std::vector<Canon> truth,
                           EntityClass entity_class) {
  predicted = dedup(std::move(predicted));
  truth = dedup(std::move(truth));

  MatchCounts counts;
  counts.entity_class = entity_class;
  for (const auto& p : predicted) {
    const bool hit = p.in_vocab && std::binary_search(truth.begin(), truth.end(), p);
    if (hit)
      ++counts.tp;
    else
      ++counts.fp;  // includes every out-of-vocabulary marker
  }
  counts.fn = static_cast<long>(truth.size()) - counts.tp;
  return counts;
}

bool value_correct(const Canon& predicted, const std::vector<Canon>& truth) {
  if (!predicted.in_vocab) return false;
  return std::find(truth.begin(), truth.end(), predicted) != truth.end();
}

bool campaign_match(const CampaignPrediction& predicted, const Canon& truth_apt,
                    const PartialDate& truth_start, DateGranularity granularity) {
  if (!predicted.apt || !predicted.start_date) return false;
  if (!(*predicted.apt == truth_apt)) return false;
  if (predicted.start_date->year != truth_start.year) return false;
  if (granularity == DateGranularity::year_month &&
      predicted.start_date->month != truth_start.month)
    return false;
  return true;
}

MatchCounts match_campaign(const std::optional<CampaignPrediction>& predicted,
                           const Canon& truth_apt, const PartialDate& truth_start,
                           DateGranularity granularity) {
  MatchCounts counts;
  counts.entity_class = EntityClass::campaign;
  if (!predicted) {
    counts.fn = 1;
    return counts;
  }
  if (campaign_match(*predicted, truth_apt, truth_start, granularity)) {
    counts.tp = 1;
  } else {
    counts.fp = 1;
    counts.fn = 1;
  }
  return counts;
}

double harmonic_f1(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                  : 0.0;
}

Metrics compute_prf(const MatchCounts& counts) {
  Metrics m;
  if (counts.tp + counts.fp > 0)
    m.precision = static_cast<double>(counts.tp) / (counts.tp + counts.fp);
  if (counts.tp + counts.fn > 0)
    m.recall = static_cast<double>(counts.tp) / (counts.tp + counts.fn);
  if (m.precision || m.recall)
    m.f1 = harmonic_f1(m.precision.value_or(0.0), m.recall.value_or(0.0));
  return m;
}

MatchCounts sum_counts(const std::vector<MatchCounts>& per_report) {
  if (per_report.empty())
    throw std::invalid_argument("cannot aggregate an empty count list");
  MatchCounts total;
  total.entity_class = per_report.front().entity_class;
  for (const auto& c : per_report) {
    if (c.entity_class != total.entity_class)
      throw std::invalid_argument("cannot aggregate mixed entity classes");
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total;
}

Metrics aggregate_micro(const std::vector<MatchCounts>& per_report) {
  return compute_prf(sum_counts(per_report));
}

double relative_delta(double before, double after) {
  if (!(before > 0.0))
    throw std::invalid_argument("relative_delta requires before > 0");
  return 100.0 * (after - before) / before;
}

double round_half_up(double x, int decimals) {
  double scale = std::pow(10.0, decimals);
  double magnitude = std::floor(std::abs(x) * scale + 0.5) / scale;
  return x < 0 ? -magnitude : magnitude;
}

std::string format_2dp(double x) {
  long long cents = static_cast<long long>(std::floor(std::abs(x) * 100.0 + 0.5));
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", x < 0 && cents > 0 ? "-" : "",
                cents / 100, cents % 100);
  return buf;
}

std::vector<Canon> canonical_truth_set(const std::vector<std::string>& values,
                                       EntityClass entity_class,
                                       const ClosedWorldVocabulary& vocab,
                                       const kg::AliasTable* aliases) {
  std::vector<Canon> out;
  for (const auto& v : values)
    out.push_back(kg::normalize_entity(v, entity_class, vocab, aliases));
  return dedup(std::move(out));
}

std::vector<MatchCounts> score_extraction(const kg::ExtractionGraph* graph,
                                          const corpus::CampaignTruth& truth,
                                          const ClosedWorldVocabulary& vocab,
                                          DateGranularity granularity,
                                          const kg::AliasTable* aliases) {
  const Canon truth_apt =
      kg::normalize_entity(truth.apt_name, EntityClass::apt, vocab, aliases);

  std::optional<CampaignPrediction> campaign;
  std::vector<Canon> predicted_apt;
  std::vector<Canon> predicted_cves;
  std::vector<Canon> predicted_vectors;
  if (graph) {
    if (graph->apt || graph->campaign_start) {
      CampaignPrediction cp;
      if (graph->apt) cp.apt = graph->apt->canon;
      cp.start_date = graph->campaign_start;
      campaign = cp;
    }
    if (graph->apt) predicted_apt.push_back(graph->apt->canon);
    predicted_cves = graph->cve_set();
    predicted_vectors = graph->attack_vector_set();
  }

  std::vector<MatchCounts> counts;
  counts.push_back(match_campaign(campaign, truth_apt, truth.start_date, granularity));
  counts.push_back(match_entities(predicted_apt, {truth_apt}, EntityClass::apt));
  counts.push_back(match_entities(
      predicted_cves,
      canonical_truth_set(truth.cves, EntityClass::cve, vocab, aliases),
      EntityClass::cve));
  counts.push_back(match_entities(
      predicted_vectors,
      canonical_truth_set(truth.attack_vectors, EntityClass::attack_vector, vocab,
                          aliases),
      EntityClass::attack_vector));
  return counts;
}

std::vector<MatchCounts> score_generation(const kg::GenerationGraph* graph,
                                          const corpus::AptProfile& truth,
                                          const ClosedWorldVocabulary& vocab,
                                          const kg::AliasTable* aliases) {
  std::vector<Canon> predicted_country;
  std::vector<Canon> predicted_labels, predicted_goals, predicted_cves,
      predicted_vectors;
  if (graph) {
    if (graph->country) predicted_country.push_back(graph->country->canon);
    predicted_labels = graph->label_set();
    predicted_goals = graph->goal_set();
    predicted_cves = graph->cve_set();
    predicted_vectors = graph->attack_vector_set();
  }

  std::vector<MatchCounts> counts;
  counts.push_back(match_entities(
      predicted_goals,
      canonical_truth_set(truth.goals, EntityClass::goals, vocab, aliases),
      EntityClass::goals));
  counts.push_back(match_entities(
      predicted_labels,
      canonical_truth_set(truth.labels, EntityClass::labels, vocab, aliases),
      EntityClass::labels));
  counts.push_back(match_entities(
      predicted_country,
      canonical_truth_set({truth.country}, EntityClass::country, vocab, aliases),
      EntityClass::country));
  counts.push_back(match_entities(
      predicted_cves,
      canonical_truth_set(truth.cves, EntityClass::cve, vocab, aliases),
      EntityClass::cve));
  counts.push_back(match_entities(
      predicted_vectors,
      canonical_truth_set(truth.attack_vectors, EntityClass::attack_vector, vocab,
                          aliases),
      EntityClass::attack_vector));
  return counts;
}

}  // namespace ctieval::scoring
