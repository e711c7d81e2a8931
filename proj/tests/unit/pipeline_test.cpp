#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctieval/errors.hpp"
#include "ctieval/fixture_gen.hpp"
#include "ctieval/pipeline.hpp"

using namespace ctieval;
namespace fs = std::filesystem;

namespace {

const fs::path kCorpusDir = fs::path(CTIEVAL_FIXTURE_DIR) / "corpus";

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("ctieval_pipe_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

pipeline::ExperimentConfig small_config(const fs::path& out,
                                        const fs::path& fixture_dir) {
  pipeline::ExperimentConfig config;
  config.corpus_path = kCorpusDir;
  config.out_dir = out;
  config.tasks = {TaskKind::extraction};
  config.modes = {Mode::zero_shot};
  config.repetitions = 2;
  config.zero_shot_whole_corpus = true;
  config.few_shot_k = 3;
  config.bootstrap.resamples = 1000;

  gateway::ModelConfig model;
  model.provider_id = "scripted";
  model.model_id = "scripted-base";
  model.finetuned_model_id = "scripted-ft";
  model.endpoint = fixture_dir.string();
  config.models.push_back(model);
  return config;
}

fs::path make_gold_fixtures(const std::string& tag, int repetitions) {
  auto corpus = corpus::load_corpus(kCorpusDir);
  auto split = corpus::split_corpus(corpus, 0.7, 7);
  fixtures::FixturePlan plan;
  plan.repetitions = repetitions;
  auto batch = fixtures::build_fixture_batch(
      corpus, split, {TaskKind::extraction, TaskKind::generation},
      {Mode::zero_shot, Mode::few_shot, Mode::fine_tuned}, "scripted-base",
      "scripted-ft", 3, 0, plan);
  auto dir = temp_dir("fixtures_" + tag);
  fixtures::write_batch(batch, dir);
  return dir;
}

}  // namespace

TEST_CASE("experiment config round-trips through JSON") {
  auto config = small_config("/tmp/out", "/tmp/fixtures");
  auto text = pipeline::config_to_json(config);
  auto back = pipeline::config_from_json(text);
  CHECK(pipeline::config_hash(config) == pipeline::config_hash(back));
  CHECK(back.tasks == config.tasks);
  CHECK(back.modes == config.modes);
  CHECK(back.repetitions == 2);
  CHECK(back.models.size() == 1);
  CHECK(back.models[0].finetuned_model_id == std::optional<std::string>("scripted-ft"));
}

TEST_CASE("config validation rejects inconsistent experiments") {
  auto config = small_config("/tmp/out", "/tmp/fixtures");
  auto no_models = config;
  no_models.models.clear();
  CHECK_THROWS_AS(pipeline::validate_config(no_models), ValidationError);

  auto one_rep = config;
  one_rep.repetitions = 1;
  CHECK_THROWS_AS(pipeline::validate_config(one_rep), ValidationError);

  auto ft_without_id = config;
  ft_without_id.modes = {Mode::fine_tuned};
  ft_without_id.models[0].finetuned_model_id.reset();
  CHECK_THROWS_AS(pipeline::validate_config(ft_without_id), ValidationError);

  auto bad_ratio = config;
  bad_ratio.split.ratio = 1.5;
  CHECK_THROWS_AS(pipeline::validate_config(bad_ratio), ValidationError);
}

TEST_CASE("run records round-trip through JSON") {
  pipeline::RunRecord r;
  r.task = TaskKind::generation;
  r.mode = Mode::few_shot;
  r.model = "scripted-base";
  r.item_id = "Turla";
  r.iteration_index = 4;
  r.prompt_hash = "abc";
  r.response_text = "{\"country\": \"russia\"}";
  r.tokens = std::vector<gateway::TokenLogProb>{{"{\"country\"", -0.2, 0},
                                                {": \"russia\"}", -0.1, 1}};
  r.parse_status = "ok";
  r.diagnostics = {"note"};
  scoring::MatchCounts c;
  c.entity_class = EntityClass::country;
  c.tp = 1;
  r.counts.push_back(c);
  r.few_shot_sources = {"APT37"};
  r.fingerprint = "fp";
  r.latency_ms = 1.5;

  auto back = pipeline::record_from_json(pipeline::record_to_json(r));
  CHECK(back.task == r.task);
  CHECK(back.mode == r.mode);
  CHECK(back.item_id == r.item_id);
  CHECK(back.tokens->size() == 2);
  CHECK(back.counts.size() == 1);
  CHECK(back.counts[0].tp == 1);
  CHECK(back.few_shot_sources == r.few_shot_sources);
  CHECK(pipeline::record_to_json(back) == pipeline::record_to_json(r));
}

TEST_CASE("item prompts are deterministic and mode-aware") {
  auto corpus = corpus::load_corpus(kCorpusDir);
  auto split = corpus::split_corpus(corpus, 0.7, 7);

  auto zero = pipeline::build_item_prompt(corpus, split, TaskKind::extraction,
                                          Mode::zero_shot, "rpt-001", 3, 0);
  auto zero2 = pipeline::build_item_prompt(corpus, split, TaskKind::extraction,
                                           Mode::zero_shot, "rpt-001", 3, 0);
  CHECK(zero.content_hash == zero2.content_hash);

  auto few = pipeline::build_item_prompt(corpus, split, TaskKind::extraction,
                                         Mode::few_shot, "rpt-001", 3, 0);
  CHECK(few.content_hash != zero.content_hash);
  CHECK(few.rendered.find("Examples") != std::string::npos);

  // fine-tuned evaluation reuses the zero-shot prompt text
  auto ft = pipeline::build_item_prompt(corpus, split, TaskKind::extraction,
                                        Mode::fine_tuned, "rpt-001", 3, 0);
  CHECK(ft.rendered == zero.rendered);
  CHECK(ft.mode == Mode::fine_tuned);
}

TEST_CASE("a small zero-shot run produces records and perfect gold metrics") {
  auto fixture_dir = make_gold_fixtures("small", 2);
  auto out = temp_dir("run_small");
  auto config = small_config(out, fixture_dir);

  auto result = pipeline::run_experiment(config);
  // 12 items x 2 iterations for (extraction, zero_shot, scripted-base)
  auto records = pipeline::load_records(result.run_dir);
  CHECK(records.size() == 24);

  auto metrics_csv = slurp(result.run_dir / "tables" / "metrics.csv");
  CHECK(metrics_csv.find("extraction,zero_shot,scripted-base,campaign,1.00,1.00,1.00") !=
        std::string::npos);
  CHECK(metrics_csv.find("extraction,zero_shot,scripted-base,apt,1.00,1.00,1.00") !=
        std::string::npos);
  CHECK(metrics_csv.find("extraction,zero_shot,scripted-base,cve,1.00,1.00,1.00") !=
        std::string::npos);
  CHECK(
      metrics_csv.find(
          "extraction,zero_shot,scripted-base,attack_vector,1.00,1.00,1.00") !=
      std::string::npos);

  auto ci_csv = slurp(result.run_dir / "tables" / "ci.csv");
  CHECK(ci_csv.find("campaign,P,1.00,1.00") != std::string::npos);

  CHECK(fs::exists(result.run_dir / "summary.txt"));
  CHECK(fs::exists(result.run_dir / "tables" / "calibration.csv"));

  // CI cells render as "[lower, upper]" in the summary
  auto summary = slurp(result.run_dir / "summary.txt");
  CHECK(summary.find("[1.00, 1.00]") != std::string::npos);

  // prompt audit dumps
  CHECK(fs::exists(result.run_dir / "prompts" / "extraction" / "zero_shot" /
                   "rpt-001.txt"));

  fs::remove_all(out);
  fs::remove_all(fixture_dir);
}

TEST_CASE("a 12-item whole-corpus run at n=10 yields 120 records per group") {
  auto fixture_dir = make_gold_fixtures("count", 10);
  auto out = temp_dir("run_count");
  auto config = small_config(out, fixture_dir);
  config.repetitions = 10;

  auto result = pipeline::run_experiment(config);
  auto records = pipeline::load_records(result.run_dir);
  CHECK(records.size() == 120);  // 12 items x 10 iterations, one group

  fs::remove_all(out);
  fs::remove_all(fixture_dir);
}

TEST_CASE("re-running the same config is byte-identical and resumable") {
  auto fixture_dir = make_gold_fixtures("rerun", 2);
  auto out_a = temp_dir("rerun_a");
  auto out_b = temp_dir("rerun_b");
  auto config_a = small_config(out_a, fixture_dir);
  auto config_b = small_config(out_b, fixture_dir);

  auto run_a = pipeline::run_experiment(config_a);
  auto run_b = pipeline::run_experiment(config_b);

  auto records_name = "extraction_zero_shot_scripted-base.jsonl";
  CHECK(slurp(run_a.run_dir / "records" / records_name) ==
        slurp(run_b.run_dir / "records" / records_name));
  CHECK(slurp(run_a.run_dir / "tables" / "metrics.csv") ==
        slurp(run_b.run_dir / "tables" / "metrics.csv"));
  CHECK(slurp(run_a.run_dir / "tables" / "ci.csv") ==
        slurp(run_b.run_dir / "tables" / "ci.csv"));
  CHECK(slurp(run_a.run_dir / "summary.txt") == slurp(run_b.run_dir / "summary.txt"));

  // resume: records deleted, cache kept, third run reproduces the bytes
  auto before = slurp(run_a.run_dir / "records" / records_name);
  fs::remove_all(run_a.run_dir / "records");
  auto run_c = pipeline::run_experiment(config_a);
  CHECK(slurp(run_c.run_dir / "records" / records_name) == before);

  fs::remove_all(out_a);
  fs::remove_all(out_b);
  fs::remove_all(fixture_dir);
}

TEST_CASE("workers > 1 produce the same record bytes as a serial run") {
  auto fixture_dir = make_gold_fixtures("workers", 2);
  auto out_serial = temp_dir("workers_serial");
  auto out_parallel = temp_dir("workers_parallel");
  auto config_serial = small_config(out_serial, fixture_dir);
  auto config_parallel = small_config(out_parallel, fixture_dir);
  config_parallel.workers = 4;

  auto run_serial = pipeline::run_experiment(config_serial);
  auto run_parallel = pipeline::run_experiment(config_parallel);
  auto records_name = "extraction_zero_shot_scripted-base.jsonl";
  CHECK(slurp(run_serial.run_dir / "records" / records_name) ==
        slurp(run_parallel.run_dir / "records" / records_name));

  fs::remove_all(out_serial);
  fs::remove_all(out_parallel);
  fs::remove_all(fixture_dir);
}

TEST_CASE("an all-zero metric renders a CI with an empty relative width") {
  // A class whose metric value is 0 in every iteration has a degenerate
  // [0, 0] interval; the relative width is undefined at midpoint 0 and the
  // cell stays empty.
  auto corpus = corpus::load_corpus(kCorpusDir);
  auto split = corpus::split_corpus(corpus, 0.7, 7);

  fixtures::FixturePlan plan;
  plan.repetitions = 2;
  // every report's only APT prediction is wrong in every iteration
  for (const auto& r : corpus.reports)
    plan.deviations.push_back({TaskKind::extraction, Mode::zero_shot, r.report_id,
                               -1, EntityClass::apt, "WrongGroup"});
  auto batch = fixtures::build_fixture_batch(
      corpus, split, {TaskKind::extraction}, {Mode::zero_shot}, "scripted-base",
      "scripted-ft", 3, 0, plan);
  auto fixture_dir = temp_dir("zero_fixtures");
  fixtures::write_batch(batch, fixture_dir);

  auto out = temp_dir("run_zero");
  auto config = small_config(out, fixture_dir);
  auto result = pipeline::run_experiment(config);

  auto metrics_csv = slurp(result.run_dir / "tables" / "metrics.csv");
  CHECK(metrics_csv.find("extraction,zero_shot,scripted-base,apt,0.00,0.00,0.00") !=
        std::string::npos);
  auto ci_csv = slurp(result.run_dir / "tables" / "ci.csv");
  CHECK(ci_csv.find("extraction,zero_shot,scripted-base,apt,P,0.00,0.00,\n") !=
        std::string::npos);

  fs::remove_all(out);
  fs::remove_all(fixture_dir);
}

TEST_CASE("contamination audit flags non-dev sources") {
  auto corpus = corpus::load_corpus(kCorpusDir);
  auto split = corpus::split_corpus(corpus, 0.7, 7);

  pipeline::RunRecord clean;
  clean.task = TaskKind::extraction;
  clean.mode = Mode::few_shot;
  clean.item_id = "rpt-004";
  clean.few_shot_sources = {*split.dev_reports.begin()};
  CHECK(pipeline::contamination_violations({clean}, split).empty());

  pipeline::RunRecord dirty = clean;
  dirty.few_shot_sources = {*split.test_reports.begin()};
  auto violations = pipeline::contamination_violations({dirty}, split);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].find(*split.test_reports.begin()) != std::string::npos);
}

TEST_CASE("emit_tables on a directory without aggregates names the step") {
  auto dir = temp_dir("empty_run");
  CHECK_THROWS_WITH_AS(pipeline::emit_tables(dir), doctest::Contains("aggregates"),
                       ValidationError);
  fs::remove_all(dir);
}
