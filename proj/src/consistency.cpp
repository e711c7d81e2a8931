#include "ctieval/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ctieval/errors.hpp"

namespace ctieval::consistency {

std::string to_string(MetricName m) {
  switch (m) {
    case MetricName::precision: return "P";
    case MetricName::recall: return "R";
    case MetricName::f1: return "F1";
  }
  return "?";
}

namespace {

// Nearest-rank percentile over a sorted list: the smallest element such
// that at least pct% of the list is <= it.
double nearest_rank(const std::vector<double>& sorted, int pct) {
  const auto n = static_cast<long long>(sorted.size());
  long long rank = (static_cast<long long>(pct) * n + 99) / 100;  // ceil
  rank = std::clamp(rank, 1ll, n);
  return sorted[static_cast<size_t>(rank - 1)];
}

}  // namespace

ConfidenceInterval bootstrap_ci(const std::vector<double>& samples,
                                const BootstrapConfig& config) {
  if (samples.empty()) throw std::invalid_argument("bootstrap over empty samples");
  const int n = static_cast<int>(samples.size());
  const int k = config.k > 0 ? config.k : n;
  if (k > n) throw std::invalid_argument("resample size k exceeds population size n");
  if (config.resamples < 1000)
    throw std::invalid_argument("bootstrap requires at least 1000 resamples");
  if (config.lower_percentile < 0 || config.upper_percentile > 100 ||
      config.lower_percentile > config.upper_percentile)
    throw std::invalid_argument("invalid percentile bounds");

  std::mt19937_64 rng(config.seed);
  std::vector<double> means;
  means.reserve(static_cast<size_t>(config.resamples));
  for (int b = 0; b < config.resamples; ++b) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j)
      sum += samples[static_cast<size_t>(rng() % static_cast<uint64_t>(n))];
    means.push_back(sum / k);
  }
  std::sort(means.begin(), means.end());

  // Resample means live in [min, max] mathematically; clamp away the last
  // ulp of summation error so the interval invariant holds exactly.
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  ConfidenceInterval ci;
  ci.lower = std::clamp(nearest_rank(means, config.lower_percentile), *lo_it, *hi_it);
  ci.upper = std::clamp(nearest_rank(means, config.upper_percentile), *lo_it, *hi_it);
  ci.point = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  ci.width = ci.upper - ci.lower;
  return ci;
}

double relative_ci_width(const ConfidenceInterval& ci) {
  const double midpoint = (ci.lower + ci.upper) / 2.0;
  if (!(midpoint > 0.0))
    throw std::invalid_argument("relative CI width undefined at midpoint 0");
  return 100.0 * (ci.upper - ci.lower) / midpoint;
}

RepeatedRun run_repeated(const EvalItem& item, Mode mode,
                         gateway::ModelGateway& gw,
                         const ClosedWorldVocabulary& vocab,
                         kg::Strictness strictness,
                         scoring::DateGranularity granularity, int n,
                         const kg::AliasTable* aliases) {
  if (n < 2) throw std::invalid_argument("repeated runs require n >= 2");
  if (item.task == TaskKind::extraction && !item.campaign_truth)
    throw std::invalid_argument("extraction item without campaign truth");
  if (item.task == TaskKind::generation && !item.profile_truth)
    throw std::invalid_argument("generation item without profile truth");

  std::string model_override;
  if (mode == Mode::fine_tuned) {
    if (!gw.config().finetuned_model_id)
      throw std::invalid_argument("fine_tuned mode requires a fine-tuned model id");
    model_override = *gw.config().finetuned_model_id;
  }

  RepeatedRun run;
  std::vector<int> completed;
  for (int i = 0; i < n; ++i) {
    IterationOutcome outcome;
    outcome.iteration_index = i;
    try {
      outcome.response = gw.complete(item.prompt, i, model_override);
    } catch (const CapabilityError&) {
      throw;  // not transient; retrying or resuming cannot help
    } catch (const GatewayError& e) {
      throw PartialRunError("iteration " + std::to_string(i) + " failed: " +
                                e.what() + " (completed " +
                                std::to_string(completed.size()) + " of " +
                                std::to_string(n) + ")",
                            completed);
    }

    if (item.task == TaskKind::extraction) {
      auto parsed = kg::parse_extraction(outcome.response, vocab, strictness, aliases);
      outcome.parse_status = parsed.status;
      outcome.diagnostics = parsed.diagnostics;
      outcome.counts = scoring::score_extraction(
          parsed.graph ? &*parsed.graph : nullptr, *item.campaign_truth, vocab,
          granularity, aliases);
    } else {
      auto parsed = kg::parse_generation(outcome.response, vocab, strictness, aliases);
      outcome.parse_status = parsed.status;
      outcome.diagnostics = parsed.diagnostics;
      outcome.counts = scoring::score_generation(
          parsed.graph ? &*parsed.graph : nullptr, *item.profile_truth, vocab,
          aliases);
    }

    SampleContext context{item.task, mode, gw.config().model_id,
                          EntityClass::campaign};
    for (const auto& counts : outcome.counts) {
      context.entity_class = counts.entity_class;
      auto metrics = scoring::compute_prf(counts);
      auto add = [&](MetricName name, const std::optional<double>& value) {
        if (!value) return;
        run.samples.push_back(MetricSample{i, name, *value, context});
      };
      add(MetricName::precision, metrics.precision);
      add(MetricName::recall, metrics.recall);
      add(MetricName::f1, metrics.f1);
    }

    completed.push_back(i);
    run.iterations.push_back(std::move(outcome));
  }
  return run;
}

}  // namespace ctieval::consistency
