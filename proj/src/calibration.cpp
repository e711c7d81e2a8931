#include "ctieval/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctieval/errors.hpp"

namespace ctieval::calibration {

std::map<std::string, std::vector<gateway::TokenLogProb>> segment_tokens(
    const gateway::ModelResponse& response,
    const std::map<std::string, kg::FieldSpan>& field_spans) {
  if (!response.tokens)
    throw CapabilityError("logprobs missing: response carries no tokens");

  const auto& tokens = *response.tokens;
  std::map<std::string, std::vector<gateway::TokenLogProb>> out;
  for (const auto& [field, span] : field_spans) {
    if (span.token_begin < 0 || span.token_end > static_cast<int>(tokens.size()) ||
        span.token_begin >= span.token_end)
      throw ValidationError("segmentation error: span out of range for field " +
                            field);
    std::vector<gateway::TokenLogProb> slice(
        tokens.begin() + span.token_begin, tokens.begin() + span.token_end);
    std::string concat;
    for (const auto& t : slice) concat += t.token_text;
    const std::string value_text =
        response.text.substr(span.char_begin, span.char_end - span.char_begin);
    if (concat != value_text)
      throw ValidationError(
          "segmentation error: span tokens do not reproduce the value text for "
          "field " +
          field);
    out.emplace(field, std::move(slice));
  }
  return out;
}

double entity_confidence(const std::vector<gateway::TokenLogProb>& tokens) {
  if (tokens.empty())
    throw std::invalid_argument("entity confidence over an empty token list");
  double log_sum = 0.0;
  for (const auto& t : tokens) log_sum += t.logprob;
  double confidence = std::exp(log_sum);
  // exp of a very negative sum can flush to zero; keep confidence in (0,1].
  if (confidence <= 0.0) confidence = std::numeric_limits<double>::min();
  if (confidence > 1.0) confidence = 1.0;
  return confidence;
}

namespace {

void check_samples(const std::vector<std::pair<double, bool>>& samples) {
  if (samples.empty()) throw std::invalid_argument("no calibration samples");
  for (const auto& [confidence, _] : samples)
    if (!(confidence >= 0.0 && confidence <= 1.0))
      throw std::invalid_argument("confidence outside [0,1]");
}

int bin_of(double confidence, int bin_count) {
  int bin = static_cast<int>(std::floor(confidence * bin_count));
  // confidence 1.0 belongs to the last bin
  return std::min(bin, bin_count - 1);
}

}  // namespace

double ece(const std::vector<std::pair<double, bool>>& samples, int bin_count) {
  if (bin_count < 1) throw std::invalid_argument("bin_count must be >= 1");
  check_samples(samples);

  std::vector<int> counts(static_cast<size_t>(bin_count), 0);
  std::vector<double> conf_sum(static_cast<size_t>(bin_count), 0.0);
  std::vector<int> correct(static_cast<size_t>(bin_count), 0);
  for (const auto& [confidence, is_correct] : samples) {
    int b = bin_of(confidence, bin_count);
    ++counts[b];
    conf_sum[b] += confidence;
    if (is_correct) ++correct[b];
  }

  const double total = static_cast<double>(samples.size());
  double result = 0.0;
  for (int b = 0; b < bin_count; ++b) {
    if (counts[b] == 0) continue;
    const double accuracy = static_cast<double>(correct[b]) / counts[b];
    const double mean_confidence = conf_sum[b] / counts[b];
    result += (counts[b] / total) * std::abs(accuracy - mean_confidence);
  }
  return result;
}

double brier(const std::vector<std::pair<double, bool>>& samples) {
  check_samples(samples);
  double sum = 0.0;
  for (const auto& [confidence, is_correct] : samples) {
    const double outcome = is_correct ? 1.0 : 0.0;
    sum += (confidence - outcome) * (confidence - outcome);
  }
  return sum / static_cast<double>(samples.size());
}

CalibrationReport build_report(const std::vector<std::pair<double, bool>>& samples,
                               int bin_count) {
  CalibrationReport report;
  report.ece = ece(samples, bin_count);
  report.brier = brier(samples);
  report.sample_count = static_cast<int>(samples.size());

  std::vector<ReliabilityBin> bins(static_cast<size_t>(bin_count));
  for (int b = 0; b < bin_count; ++b) {
    bins[b].lo = static_cast<double>(b) / bin_count;
    bins[b].hi = static_cast<double>(b + 1) / bin_count;
  }
  std::vector<double> conf_sum(static_cast<size_t>(bin_count), 0.0);
  std::vector<int> correct(static_cast<size_t>(bin_count), 0);
  for (const auto& [confidence, is_correct] : samples) {
    int b = bin_of(confidence, bin_count);
    ++bins[b].count;
    conf_sum[b] += confidence;
    if (is_correct) ++correct[b];
  }
  for (int b = 0; b < bin_count; ++b) {
    if (bins[b].count == 0) continue;
    bins[b].mean_confidence = conf_sum[b] / bins[b].count;
    bins[b].accuracy = static_cast<double>(correct[b]) / bins[b].count;
  }
  report.bins = std::move(bins);
  return report;
}

std::map<EntityClass, CalibrationReport> calibration_report(
    const std::vector<EntityConfidence>& entries, int bin_count) {
  if (entries.empty()) throw std::invalid_argument("no calibration entries");
  std::map<EntityClass, std::vector<std::pair<double, bool>>> by_class;
  for (const auto& e : entries)
    by_class[e.entity_class].emplace_back(e.confidence, e.correct);

  std::map<EntityClass, CalibrationReport> out;
  for (const auto& [cls, samples] : by_class)
    out.emplace(cls, build_report(samples, bin_count));
  return out;
}

namespace {

std::optional<double> field_confidence(
    const std::map<std::string, std::vector<gateway::TokenLogProb>>& segments,
    const std::string& field) {
  auto it = segments.find(field);
  if (it == segments.end() || it->second.empty()) return std::nullopt;
  return entity_confidence(it->second);
}

}  // namespace

std::vector<EntityConfidence> derive_extraction_confidences(
    const gateway::ModelResponse& response, const kg::ExtractionGraph& graph,
    const corpus::CampaignTruth& truth, const ClosedWorldVocabulary& vocab,
    scoring::DateGranularity granularity, const kg::AliasTable* aliases) {
  auto segments = segment_tokens(response, graph.field_spans);
  std::vector<EntityConfidence> out;

  const Canon truth_apt =
      kg::normalize_entity(truth.apt_name, EntityClass::apt, vocab, aliases);

  if (graph.apt) {
    if (auto confidence = field_confidence(segments, graph.apt->field)) {
      EntityConfidence e;
      e.entity_class = EntityClass::apt;
      e.value = graph.apt->canon.value;
      e.confidence = *confidence;
      e.correct = scoring::value_correct(graph.apt->canon, {truth_apt});
      out.push_back(e);
    }
  }

  // The campaign entity is the (APT name, starting date) pair; its
  // confidence multiplies the token probabilities of both fields.
  {
    double log_sum = 0.0;
    bool any = false;
    for (const char* field : {"APT[0]", "campaign_start"}) {
      auto it = segments.find(field);
      if (it == segments.end() || it->second.empty()) continue;
      for (const auto& t : it->second) log_sum += t.logprob;
      any = true;
    }
    if (any) {
      scoring::CampaignPrediction prediction;
      if (graph.apt) prediction.apt = graph.apt->canon;
      prediction.start_date = graph.campaign_start;
      EntityConfidence e;
      e.entity_class = EntityClass::campaign;
      e.value = (graph.apt ? graph.apt->canon.value : "") + " / " +
                (graph.campaign_start ? graph.campaign_start->format() : "");
      e.confidence = std::max(std::exp(log_sum), std::numeric_limits<double>::min());
      e.correct = scoring::campaign_match(prediction, truth_apt, truth.start_date,
                                          granularity);
      out.push_back(e);
    }
  }

  const auto truth_cves =
      scoring::canonical_truth_set(truth.cves, EntityClass::cve, vocab, aliases);
  for (const auto& v : graph.cves) {
    if (auto confidence = field_confidence(segments, v.field)) {
      out.push_back(EntityConfidence{EntityClass::cve, v.canon.value, *confidence,
                                     scoring::value_correct(v.canon, truth_cves)});
    }
  }

  const auto truth_vectors = scoring::canonical_truth_set(
      truth.attack_vectors, EntityClass::attack_vector, vocab, aliases);
  for (const auto& v : graph.attack_vectors) {
    if (auto confidence = field_confidence(segments, v.field)) {
      out.push_back(EntityConfidence{EntityClass::attack_vector, v.canon.value,
                                     *confidence,
                                     scoring::value_correct(v.canon, truth_vectors)});
    }
  }
  return out;
}

std::vector<EntityConfidence> derive_generation_confidences(
    const gateway::ModelResponse& response, const kg::GenerationGraph& graph,
    const corpus::AptProfile& truth, const ClosedWorldVocabulary& vocab,
    const kg::AliasTable* aliases) {
  auto segments = segment_tokens(response, graph.field_spans);
  std::vector<EntityConfidence> out;

  if (graph.country) {
    if (auto confidence = field_confidence(segments, graph.country->field)) {
      const auto truth_country = scoring::canonical_truth_set(
          {truth.country}, EntityClass::country, vocab, aliases);
      out.push_back(EntityConfidence{
          EntityClass::country, graph.country->canon.value, *confidence,
          scoring::value_correct(graph.country->canon, truth_country)});
    }
  }

  auto emit_set = [&](const std::vector<kg::PredictedValue>& values,
                      const std::vector<std::string>& truth_values,
                      EntityClass cls) {
    const auto truth_set =
        scoring::canonical_truth_set(truth_values, cls, vocab, aliases);
    for (const auto& v : values) {
      if (auto confidence = field_confidence(segments, v.field)) {
        out.push_back(EntityConfidence{cls, v.canon.value, *confidence,
                                       scoring::value_correct(v.canon, truth_set)});
      }
    }
  };
  emit_set(graph.labels, truth.labels, EntityClass::labels);
  emit_set(graph.goals, truth.goals, EntityClass::goals);
  emit_set(graph.cves, truth.cves, EntityClass::cve);
  emit_set(graph.attack_vectors, truth.attack_vectors, EntityClass::attack_vector);
  return out;
}

}  // namespace ctieval::calibration
