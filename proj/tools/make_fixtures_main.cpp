// Generates scripted-provider fixture files for a corpus: gold answers per
// (task, mode, item, iteration), optionally perturbed by a scenario file.
//
// Scenario JSON:
//   {"repetitions": 10, "token_seed": 0, "with_tokens": true,
//    "deviations": [{"task": "extraction", "mode": "few_shot",
//                    "item_id": "rpt-001", "iteration": -1,
//                    "class": "cve", "replace_with": "CVE-2000-0001"}]}

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctieval/corpus.hpp"
#include "ctieval/errors.hpp"
#include "ctieval/fixture_gen.hpp"
#include "ctieval/pipeline.hpp"

using namespace ctieval;

int main(int argc, char** argv) {
  CLI::App app{"ctieval-make-fixtures - build scripted provider fixtures"};

  std::string corpus_dir;
  std::string out_dir;
  std::string scenario_file;
  std::string base_model = "scripted-base";
  std::string finetuned_model = "scripted-ft";
  double ratio = 0.7;
  int seed = 7;
  int repetitions = 10;
  int few_shot_k = 3;
  int few_shot_seed = 0;
  app.add_option("--corpus", corpus_dir, "corpus directory")->required();
  app.add_option("--out", out_dir, "fixture output directory")->required();
  app.add_option("--scenario", scenario_file, "scenario JSON file");
  app.add_option("--base-model", base_model, "model id for zero/few-shot fixtures");
  app.add_option("--ft-model", finetuned_model, "model id for fine-tuned fixtures");
  app.add_option("--ratio", ratio, "split ratio");
  app.add_option("--seed", seed, "split seed");
  app.add_option("--repetitions", repetitions, "iterations per item");
  app.add_option("--few-shot-k", few_shot_k, "few-shot examples per class");
  app.add_option("--few-shot-seed", few_shot_seed, "few-shot selection seed");

  CLI11_PARSE(app, argc, argv);

  try {
    auto corpus = corpus::load_corpus(corpus_dir);
    auto split = corpus::split_corpus(corpus, ratio, seed);

    fixtures::FixturePlan plan;
    plan.repetitions = repetitions;
    if (!scenario_file.empty()) {
      std::ifstream in(scenario_file);
      if (!in) throw LoadError("missing scenario file: " + scenario_file);
      nlohmann::json doc;
      in >> doc;
      plan.repetitions = doc.value("repetitions", repetitions);
      plan.with_tokens = doc.value("with_tokens", true);
      plan.token_seed = doc.value("token_seed", 0ull);
      for (const auto& d : doc.value("deviations", nlohmann::json::array())) {
        fixtures::Deviation dev;
        dev.task = task_from_string(d.at("task").get<std::string>());
        dev.mode = mode_from_string(d.at("mode").get<std::string>());
        dev.item_id = d.at("item_id").get<std::string>();
        dev.iteration = d.value("iteration", -1);
        dev.entity_class =
            entity_class_from_string(d.at("class").get<std::string>());
        dev.replace_with = d.at("replace_with").get<std::string>();
        plan.deviations.push_back(std::move(dev));
      }
    }

    auto batch = fixtures::build_fixture_batch(
        corpus, split,
        {TaskKind::extraction, TaskKind::generation},
        {Mode::zero_shot, Mode::few_shot, Mode::fine_tuned}, base_model,
        finetuned_model, few_shot_k, few_shot_seed, plan);
    fixtures::write_batch(batch, out_dir);
    std::cout << "wrote " << batch.entries.size() << " fixtures to " << out_dir
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
