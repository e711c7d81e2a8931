#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ctieval/corpus.hpp"
#include "ctieval/fixture_gen.hpp"
#include "ctieval/kg_parse.hpp"
#include "ctieval/scoring.hpp"

using namespace ctieval;

namespace {

ClosedWorldVocabulary test_vocab() {
  ClosedWorldVocabulary v;
  v.attack_vectors = {"drive-by compromise", "spear-phishing attachment",
                      "spear-phishing link", "unknown", "valid accounts"};
  v.countries = {"china", "north korea", "russia"};
  v.labels = {"nation-state actor", "spy"};
  v.goals = {"espionage", "information theft"};
  return v;
}

gateway::ModelResponse text_response(const std::string& text) {
  gateway::ModelResponse r;
  r.text = text;
  return r;
}

const char* kExactExtraction =
    R"({"nodes": {"APT": [{"name": "APT37"}], "campaign_start": "2016-06",)"
    R"( "CVE": [{"id": "CVE-2016-4117"}],)"
    R"( "attack_vector": [{"name": "spear-phishing link"}]}})";

}  // namespace

TEST_CASE("normalize_entity canonicalizes common raw forms") {
  auto vocab = test_vocab();
  auto cve = kg::normalize_entity("cve-2014-6321", EntityClass::cve, vocab);
  CHECK(cve.value == "CVE-2014-6321");
  CHECK(cve.in_vocab);

  auto vector = kg::normalize_entity("Spear-Phishing Attachment",
                                     EntityClass::attack_vector, vocab);
  CHECK(vector.value == "spear-phishing attachment");
  CHECK(vector.in_vocab);

  auto unknown =
      kg::normalize_entity("totally-new-vector", EntityClass::attack_vector, vocab);
  CHECK(unknown.value == "totally-new-vector");
  CHECK_FALSE(unknown.in_vocab);
}

TEST_CASE("normalization is idempotent") {
  auto vocab = test_vocab();
  std::mt19937_64 rng(5);
  const std::vector<std::string> pool = {
      "CVE-2014-6321", "cve 2017 0199", "Spear-Phishing Link", "SPEAR-PHISHING  link",
      "APT37", "Lazarus  Group", "not a thing", "CVE-XX-1", "Russia", "unknown"};
  for (EntityClass cls : {EntityClass::cve, EntityClass::attack_vector,
                          EntityClass::apt, EntityClass::country}) {
    for (const auto& raw : pool) {
      auto once = kg::normalize_entity(raw, cls, vocab);
      auto twice = kg::normalize_entity(once.value, cls, vocab);
      REQUIRE(once == twice);
    }
  }
}

TEST_CASE("alias table maps variant APT names") {
  auto vocab = test_vocab();
  kg::AliasTable aliases{{"ke3chang", "k3chang"}};
  auto c = kg::normalize_entity("Ke3chang", EntityClass::apt, vocab, &aliases);
  CHECK(c.value == "k3chang");
}

TEST_CASE("schema-exact extraction JSON parses ok") {
  auto vocab = test_vocab();
  auto outcome = kg::parse_extraction(text_response(kExactExtraction), vocab,
                                      kg::Strictness::strict);
  REQUIRE(outcome.status == kg::ParseStatus::ok);
  REQUIRE(outcome.graph.has_value());
  const auto& g = *outcome.graph;
  CHECK(g.apt->canon.value == "apt37");
  CHECK(g.campaign_start == PartialDate{2016, 6, std::nullopt});
  REQUIRE(g.cves.size() == 1);
  CHECK(g.cves[0].canon.value == "CVE-2016-4117");
  REQUIRE(g.attack_vectors.size() == 1);
  CHECK(g.attack_vectors[0].canon.value == "spear-phishing link");
  CHECK(g.attack_vectors[0].canon.in_vocab);
}

TEST_CASE("markdown fences strip to a repaired but identical graph") {
  auto vocab = test_vocab();
  std::string fenced = std::string("Here is the answer:\n```json\n") +
                       kExactExtraction + "\n```\nLet me know if more is needed.";

  auto strict = kg::parse_extraction(text_response(fenced), vocab,
                                     kg::Strictness::strict);
  CHECK(strict.status == kg::ParseStatus::failed);
  CHECK_FALSE(strict.graph.has_value());

  auto lenient = kg::parse_extraction(text_response(fenced), vocab,
                                      kg::Strictness::lenient);
  REQUIRE(lenient.status == kg::ParseStatus::repaired);
  auto bare = kg::parse_extraction(text_response(kExactExtraction), vocab,
                                   kg::Strictness::lenient);
  REQUIRE(bare.status == kg::ParseStatus::ok);
  CHECK(kg::graphs_equal(*lenient.graph, *bare.graph));
}

TEST_CASE("prose without JSON fails in both modes") {
  auto vocab = test_vocab();
  for (auto strictness : {kg::Strictness::strict, kg::Strictness::lenient}) {
    auto outcome =
        kg::parse_extraction(text_response("I cannot help with that"), vocab,
                             strictness);
    CHECK(outcome.status == kg::ParseStatus::failed);
    CHECK_FALSE(outcome.graph.has_value());
    CHECK_FALSE(outcome.diagnostics.empty());
  }
}

TEST_CASE("generation parsing: valid, vacuous and duplicated input") {
  auto vocab = test_vocab();

  auto ok = kg::parse_generation(
      text_response(R"({"country": "China", "labels": ["nation-state actor"],)"
                    R"( "goals": ["espionage"], "CVE": ["CVE-2014-6321"],)"
                    R"( "attack_vector": ["valid accounts"]})"),
      vocab, kg::Strictness::strict);
  REQUIRE(ok.status == kg::ParseStatus::ok);
  CHECK(ok.graph->country->canon.value == "china");
  CHECK(ok.graph->labels.size() == 1);

  auto vacuous = kg::parse_generation(text_response("{}"), vocab,
                                      kg::Strictness::strict);
  REQUIRE(vacuous.status == kg::ParseStatus::ok);
  CHECK_FALSE(vacuous.graph->country.has_value());
  CHECK(vacuous.graph->labels.empty());
  CHECK(vacuous.graph->cves.empty());

  auto duplicated = kg::parse_generation(
      text_response(R"({"CVE": ["CVE-2014-6321", "cve-2014-6321", "CVE-2014-6321"]})"),
      vocab, kg::Strictness::lenient);
  REQUIRE(duplicated.status == kg::ParseStatus::ok);
  CHECK(duplicated.graph->cves.size() == 1);
  CHECK(duplicated.graph->cves[0].canon.value == "CVE-2014-6321");
}

TEST_CASE("shape violations fail strict parses and are skipped leniently") {
  auto vocab = test_vocab();
  const char* bad = R"({"nodes": {"APT": [{"name": 42}]}})";
  auto strict = kg::parse_extraction(text_response(bad), vocab,
                                     kg::Strictness::strict);
  CHECK(strict.status == kg::ParseStatus::failed);

  auto lenient = kg::parse_extraction(text_response(bad), vocab,
                                      kg::Strictness::lenient);
  REQUIRE(lenient.status == kg::ParseStatus::ok);
  CHECK_FALSE(lenient.graph->apt.has_value());
  CHECK_FALSE(lenient.diagnostics.empty());
}

TEST_CASE("dates parse at the precision given") {
  CHECK(kg::parse_partial_date("2016") == PartialDate{2016, std::nullopt, std::nullopt});
  CHECK(kg::parse_partial_date("2016-06") == PartialDate{2016, 6, std::nullopt});
  CHECK(kg::parse_partial_date("2016-06-15") == PartialDate{2016, 6, 15});
  CHECK(kg::parse_partial_date("June 2016") == PartialDate{2016, 6, std::nullopt});
  CHECK(kg::parse_partial_date("3 October 2016") == PartialDate{2016, 10, 3});
  CHECK(kg::parse_partial_date("October 3, 2016") == PartialDate{2016, 10, 3});
  CHECK_FALSE(kg::parse_partial_date("sometime soon").has_value());
  CHECK_FALSE(kg::parse_partial_date("2016-13").has_value());
}

TEST_CASE("serialized graphs reparse to structurally equal graphs") {
  auto corpus = corpus::load_corpus(std::string(CTIEVAL_FIXTURE_DIR) + "/corpus");
  for (const auto& [id, truth] : corpus.campaign_truths) {
    auto text = kg::extraction_answer_json(truth);
    auto first = kg::parse_extraction(text_response(text), corpus.vocabularies,
                                      kg::Strictness::strict);
    REQUIRE(first.status == kg::ParseStatus::ok);
    auto second = kg::parse_extraction(text_response(kg::serialize_extraction(
                                           *first.graph)),
                                       corpus.vocabularies, kg::Strictness::strict);
    REQUIRE(second.status == kg::ParseStatus::ok);
    REQUIRE(kg::graphs_equal(*first.graph, *second.graph));
  }
  for (const auto& [name, profile] : corpus.apt_profiles) {
    auto text = kg::generation_answer_json(profile);
    auto first = kg::parse_generation(text_response(text), corpus.vocabularies,
                                      kg::Strictness::strict);
    REQUIRE(first.status == kg::ParseStatus::ok);
    auto second = kg::parse_generation(text_response(kg::serialize_generation(
                                           *first.graph)),
                                       corpus.vocabularies, kg::Strictness::strict);
    REQUIRE(second.status == kg::ParseStatus::ok);
    REQUIRE(kg::graphs_equal(*first.graph, *second.graph));
  }
}

TEST_CASE("field spans cover exactly the value tokens") {
  auto vocab = test_vocab();
  auto response = fixtures::make_response(kExactExtraction, /*seed=*/3);
  auto outcome = kg::parse_extraction(response, vocab, kg::Strictness::strict);
  REQUIRE(outcome.status == kg::ParseStatus::ok);
  const auto& g = *outcome.graph;

  REQUIRE(g.field_spans.count("APT[0]") == 1);
  REQUIRE(g.field_spans.count("campaign_start") == 1);
  REQUIRE(g.field_spans.count("CVE[0]") == 1);
  REQUIRE(g.field_spans.count("attack_vector[0]") == 1);

  const auto& tokens = *response.tokens;
  for (const auto& [field, span] : g.field_spans) {
    std::string concat;
    for (int i = span.token_begin; i < span.token_end; ++i)
      concat += tokens[static_cast<size_t>(i)].token_text;
    REQUIRE(concat ==
            response.text.substr(span.char_begin, span.char_end - span.char_begin));
  }
  // multi-word value spans more than one token
  const auto& vec_span = g.field_spans.at("attack_vector[0]");
  CHECK(vec_span.token_end - vec_span.token_begin > 1);
}

TEST_CASE("spans survive fence repair with shifted offsets") {
  auto vocab = test_vocab();
  std::string fenced =
      std::string("```json\n") + kExactExtraction + "\n```";
  auto response = fixtures::make_response(fenced, /*seed=*/3);
  auto outcome = kg::parse_extraction(response, vocab, kg::Strictness::lenient);
  REQUIRE(outcome.status == kg::ParseStatus::repaired);
  const auto& g = *outcome.graph;
  REQUIRE(g.field_spans.count("APT[0]") == 1);
  const auto& span = g.field_spans.at("APT[0]");
  CHECK(response.text.substr(span.char_begin, span.char_end - span.char_begin) ==
        "APT37");
}

TEST_CASE("aliases carry predictions through to a scoring match") {
  auto corpus = corpus::load_corpus(std::string(CTIEVAL_FIXTURE_DIR) + "/corpus");
  kg::AliasTable aliases{{"reaper", "apt37"}};

  auto outcome = kg::parse_extraction(
      text_response(R"({"nodes": {"APT": [{"name": "Reaper"}],)"
                    R"( "campaign_start": "2016-06"}})"),
      corpus.vocabularies, kg::Strictness::strict, &aliases);
  REQUIRE(outcome.status == kg::ParseStatus::ok);
  CHECK(outcome.graph->apt->canon.value == "apt37");

  auto counts = scoring::score_extraction(&*outcome.graph, corpus.truth("rpt-001"),
                                          corpus.vocabularies,
                                          scoring::DateGranularity::year, &aliases);
  for (const auto& c : counts) {
    if (c.entity_class == EntityClass::apt || c.entity_class == EntityClass::campaign)
      CHECK(c.tp == 1);
  }
}

TEST_CASE("random graphs survive a serialize-reparse round trip") {
  auto vocab = test_vocab();
  std::mt19937_64 rng(31);
  const std::vector<std::string> apts = {"APT37", "Lazarus Group", "turla"};
  const std::vector<std::string> raw_cves = {"CVE-2016-4117", "cve-2017-0199",
                                             "CVE-2013-5065"};
  const std::vector<std::string> raw_vectors = {
      "spear-phishing link", "Valid Accounts", "made-up-vector", "unknown"};

  for (int trial = 0; trial < 60; ++trial) {
    kg::ExtractionGraph g;
    if (rng() % 2) {
      std::string raw = apts[rng() % apts.size()];
      g.apt = kg::PredictedValue{raw, kg::normalize_entity(raw, EntityClass::apt,
                                                           vocab),
                                 "APT[0]"};
    }
    if (rng() % 2)
      g.campaign_start = PartialDate{2010 + static_cast<int>(rng() % 10),
                                     rng() % 2 ? std::optional<int>(1 + rng() % 12)
                                               : std::nullopt,
                                     std::nullopt};
    for (const auto& raw : raw_cves)
      if (rng() % 2)
        g.cves.push_back(kg::PredictedValue{
            raw, kg::normalize_entity(raw, EntityClass::cve, vocab), ""});
    for (const auto& raw : raw_vectors)
      if (rng() % 2)
        g.attack_vectors.push_back(kg::PredictedValue{
            raw, kg::normalize_entity(raw, EntityClass::attack_vector, vocab), ""});

    auto text = kg::serialize_extraction(g);
    auto reparsed = kg::parse_extraction(text_response(text), vocab,
                                         kg::Strictness::strict);
    REQUIRE(reparsed.status == kg::ParseStatus::ok);
    REQUIRE(kg::graphs_equal(g, *reparsed.graph));
  }
}

TEST_CASE("empty values produce no prediction and no span") {
  auto vocab = test_vocab();
  const char* skeleton =
      R"({"nodes": {"APT": [{"name": ""}], "campaign_start": "",)"
      R"( "CVE": [], "attack_vector": []}})";
  auto response = fixtures::make_response(skeleton, /*seed=*/1);
  auto outcome = kg::parse_extraction(response, vocab, kg::Strictness::strict);
  REQUIRE(outcome.status == kg::ParseStatus::ok);
  CHECK_FALSE(outcome.graph->apt.has_value());
  CHECK_FALSE(outcome.graph->campaign_start.has_value());
  CHECK(outcome.graph->field_spans.empty());
}
