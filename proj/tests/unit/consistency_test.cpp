#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "ctieval/consistency.hpp"
#include "ctieval/errors.hpp"
#include "ctieval/fixture_gen.hpp"

using namespace ctieval;
using consistency::BootstrapConfig;

namespace {

// Independent resampler, written against the documented algorithm rather
// than the implementation: mt19937_64(seed), index = next() % n, nearest
// rank percentiles over the sorted mean list, bounds clamped into the
// sample range.
std::pair<double, double> reference_bootstrap(const std::vector<double>& samples,
                                              const BootstrapConfig& cfg) {
  const int n = static_cast<int>(samples.size());
  const int k = cfg.k > 0 ? cfg.k : n;
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> means;
  for (int b = 0; b < cfg.resamples; ++b) {
    double sum = 0;
    for (int j = 0; j < k; ++j) sum += samples[rng() % n];
    means.push_back(sum / k);
  }
  std::sort(means.begin(), means.end());
  auto rank = [&](int pct) {
    long long r = (static_cast<long long>(pct) * cfg.resamples + 99) / 100;
    if (r < 1) r = 1;
    return means[static_cast<size_t>(r - 1)];
  };
  const double lo = *std::min_element(samples.begin(), samples.end());
  const double hi = *std::max_element(samples.begin(), samples.end());
  return {std::clamp(rank(cfg.lower_percentile), lo, hi),
          std::clamp(rank(cfg.upper_percentile), lo, hi)};
}

}  // namespace

TEST_CASE("ten identical samples give a zero-width interval") {
  std::vector<double> samples(10, 0.80);
  BootstrapConfig cfg;
  cfg.seed = 11;
  auto ci = consistency::bootstrap_ci(samples, cfg);
  CHECK(ci.lower == 0.80);
  CHECK(ci.upper == 0.80);
  CHECK(ci.width == 0.0);
  CHECK(ci.point == doctest::Approx(0.80));
}

TEST_CASE("two-sample bootstrap converges to the exhaustive enumeration oracle") {
  // samples {0.6, 0.8}, k=2: the 2^2 equally likely resamples have means
  // {0.6, 0.7, 0.7, 0.8}; nearest-rank 5th/95th percentiles are 0.6 and 0.8.
  std::vector<double> samples = {0.6, 0.8};
  BootstrapConfig cfg;
  cfg.k = 2;
  cfg.resamples = 10000;
  cfg.seed = 2024;
  auto ci = consistency::bootstrap_ci(samples, cfg);
  CHECK(std::abs(ci.lower - 0.6) <= 0.01);
  CHECK(std::abs(ci.upper - 0.8) <= 0.01);
}

TEST_CASE("bootstrap matches an independently coded resampler exactly") {
  std::vector<double> samples = {0.61, 0.64, 0.60, 0.62, 0.64,
                                 0.59, 0.61, 0.63, 0.60, 0.62};
  for (uint64_t seed : {0ull, 7ull, 123456789ull}) {
    BootstrapConfig cfg;
    cfg.seed = seed;
    auto ci = consistency::bootstrap_ci(samples, cfg);
    auto [lower, upper] = reference_bootstrap(samples, cfg);
    REQUIRE(ci.lower == lower);
    REQUIRE(ci.upper == upper);
  }
}

TEST_CASE("identical seeds give identical intervals") {
  std::vector<double> samples = {0.1, 0.9, 0.5, 0.7, 0.3, 0.5, 0.2, 0.8, 0.4, 0.6};
  BootstrapConfig cfg;
  cfg.seed = 42;
  auto a = consistency::bootstrap_ci(samples, cfg);
  auto b = consistency::bootstrap_ci(samples, cfg);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
}

TEST_CASE("interval bounds stay within the sample range") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> samples;
    const int n = 2 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i)
      samples.push_back(static_cast<double>(rng() % 1000) / 1000.0);
    BootstrapConfig cfg;
    cfg.resamples = 2000;
    cfg.seed = rng();
    auto ci = consistency::bootstrap_ci(samples, cfg);
    const double lo = *std::min_element(samples.begin(), samples.end());
    const double hi = *std::max_element(samples.begin(), samples.end());
    REQUIRE(ci.lower >= lo);
    REQUIRE(ci.upper <= hi);
    REQUIRE(ci.lower <= ci.upper);
  }
}

TEST_CASE("bootstrap argument validation") {
  BootstrapConfig cfg;
  CHECK_THROWS_AS(consistency::bootstrap_ci({}, cfg), std::invalid_argument);
  cfg.k = 11;
  CHECK_THROWS_AS(consistency::bootstrap_ci(std::vector<double>(10, 0.5), cfg),
                  std::invalid_argument);
  cfg.k = 0;
  cfg.resamples = 10;
  CHECK_THROWS_AS(consistency::bootstrap_ci(std::vector<double>(10, 0.5), cfg),
                  std::invalid_argument);
}

TEST_CASE("relative CI width anchors") {
  auto width = [](double lo, double hi) {
    consistency::ConfidenceInterval ci;
    ci.lower = lo;
    ci.upper = hi;
    ci.width = hi - lo;
    return consistency::relative_ci_width(ci);
  };
  CHECK(scoring::format_2dp(width(0.58, 0.60)) == "3.39");
  CHECK(scoring::format_2dp(width(0.72, 0.74)) == "2.74");
  CHECK(scoring::format_2dp(width(0.19, 0.25)) == "27.27");
  consistency::ConfidenceInterval zero;
  CHECK_THROWS_AS(consistency::relative_ci_width(zero), std::invalid_argument);
}

// --- run_repeated against the scripted provider --------------------------

namespace {

struct RepeatedHarness {
  corpus::Corpus corp = corpus::load_corpus(std::string(CTIEVAL_FIXTURE_DIR) +
                                            "/corpus");
  gateway::ModelConfig model_config;
  std::shared_ptr<gateway::ScriptedProvider> provider;
  consistency::EvalItem item;

  RepeatedHarness() {
    model_config.provider_id = "scripted";
    model_config.model_id = "scripted-base";
    provider = std::make_shared<gateway::ScriptedProvider>(true);

    item.task = TaskKind::extraction;
    item.item_id = "rpt-001";
    item.prompt = prompt::build_extraction_prompt(corp.report("rpt-001"),
                                                  corp.vocabularies);
    item.campaign_truth = &corp.truth("rpt-001");
  }

  void register_gold(int n, int divergent_iteration = -1) {
    for (int i = 0; i < n; ++i) {
      std::string text = kg::extraction_answer_json(corp.truth("rpt-001"));
      if (i == divergent_iteration) {
        // swap the CVE for a wrong one at this iteration only
        auto pos = text.find("CVE-2016-4117");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 13, "CVE-2000-0001");
      }
      provider->register_fixture(item.prompt.content_hash, i,
                                 fixtures::make_response(text, 17));
    }
  }
};

}  // namespace

TEST_CASE("ten identical fixtures give ten equal samples and zero CI width") {
  RepeatedHarness h;
  h.register_gold(10);
  gateway::ModelGateway gw(h.provider, h.model_config, "");
  auto run = consistency::run_repeated(h.item, Mode::zero_shot, gw,
                                       h.corp.vocabularies, kg::Strictness::lenient,
                                       scoring::DateGranularity::year, 10);
  REQUIRE(run.iterations.size() == 10);

  // every iteration scored identically
  std::map<std::pair<int, int>, std::vector<double>> by_metric;
  for (const auto& s : run.samples)
    by_metric[{static_cast<int>(s.context.entity_class), static_cast<int>(s.metric)}]
        .push_back(s.value);
  for (const auto& [key, values] : by_metric) {
    REQUIRE(values.size() == 10);
    BootstrapConfig cfg;
    auto ci = consistency::bootstrap_ci(values, cfg);
    REQUIRE(ci.width == 0.0);
  }
}

TEST_CASE("a fixture differing at iteration 3 moves only that sample") {
  RepeatedHarness h;
  h.register_gold(10, /*divergent_iteration=*/3);
  gateway::ModelGateway gw(h.provider, h.model_config, "");
  auto run = consistency::run_repeated(h.item, Mode::zero_shot, gw,
                                       h.corp.vocabularies, kg::Strictness::lenient,
                                       scoring::DateGranularity::year, 10);
  std::vector<double> cve_f1(10, -1.0);
  for (const auto& s : run.samples) {
    if (s.context.entity_class == EntityClass::cve &&
        s.metric == consistency::MetricName::f1)
      cve_f1[static_cast<size_t>(s.iteration_index)] = s.value;
  }
  for (int i = 0; i < 10; ++i) {
    if (i == 3)
      CHECK(cve_f1[static_cast<size_t>(i)] == doctest::Approx(0.0));
    else
      CHECK(cve_f1[static_cast<size_t>(i)] == doctest::Approx(1.0));
  }
  BootstrapConfig cfg;
  auto ci = consistency::bootstrap_ci(cve_f1, cfg);
  CHECK(ci.width > 0.0);
}

TEST_CASE("n=1 is rejected") {
  RepeatedHarness h;
  h.register_gold(1);
  gateway::ModelGateway gw(h.provider, h.model_config, "");
  CHECK_THROWS_AS(
      consistency::run_repeated(h.item, Mode::zero_shot, gw, h.corp.vocabularies,
                                kg::Strictness::lenient,
                                scoring::DateGranularity::year, 1),
      std::invalid_argument);
}

TEST_CASE("a missing fixture is a capability error, not a partial run") {
  RepeatedHarness h;
  h.register_gold(5);  // iterations 0..4 only, run wants 8
  gateway::ModelGateway gw(h.provider, h.model_config, "");
  CHECK_THROWS_AS(
      consistency::run_repeated(h.item, Mode::zero_shot, gw, h.corp.vocabularies,
                                kg::Strictness::lenient,
                                scoring::DateGranularity::year, 8),
      CapabilityError);
}

namespace {

// Succeeds for the first `limit` iterations, then fails like a network.
class FlakyProvider : public gateway::Provider {
 public:
  FlakyProvider(std::shared_ptr<gateway::Provider> inner, int limit)
      : inner_(std::move(inner)), limit_(limit) {}
  gateway::ModelResponse complete_raw(const prompt::Prompt& p,
                                      const gateway::ModelConfig& config,
                                      const std::string& effective_model,
                                      int iteration_index) override {
    if (iteration_index >= limit_) throw TransportError("connection reset");
    return inner_->complete_raw(p, config, effective_model, iteration_index);
  }
  bool supports_logprobs() const override { return inner_->supports_logprobs(); }
  bool deterministic() const override { return true; }

 private:
  std::shared_ptr<gateway::Provider> inner_;
  int limit_;
};

}  // namespace

TEST_CASE("a transport failure mid-run raises a resumable partial-run error") {
  RepeatedHarness h;
  h.register_gold(8);
  auto flaky = std::make_shared<FlakyProvider>(h.provider, 5);
  auto cfg = h.model_config;
  cfg.max_retries = 0;
  gateway::ModelGateway gw(flaky, cfg, "");
  try {
    consistency::run_repeated(h.item, Mode::zero_shot, gw, h.corp.vocabularies,
                              kg::Strictness::lenient,
                              scoring::DateGranularity::year, 8);
    FAIL("expected PartialRunError");
  } catch (const PartialRunError& e) {
    CHECK(e.completed_iterations == std::vector<int>{0, 1, 2, 3, 4});
  }
}
