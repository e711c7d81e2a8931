// ctieval command line: split | emit-ft | run | ci | calibrate | report
//
// Exit codes: 0 success, 2 validation error, 3 provider error, 4 partial run.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctieval/consistency.hpp"
#include "ctieval/corpus.hpp"
#include "ctieval/errors.hpp"
#include "ctieval/pipeline.hpp"
#include "ctieval/prompt.hpp"

namespace {

using namespace ctieval;

struct GlobalOptions {
  std::string config_file;
  std::string corpus_dir;
  std::string out_dir;
  std::string provider;
  std::optional<int> seed;
  std::optional<int> repetitions;
  bool strict = false;
  bool lenient = false;
};

pipeline::ExperimentConfig resolve_config(const GlobalOptions& opts) {
  pipeline::ExperimentConfig config;
  if (!opts.config_file.empty())
    config = pipeline::config_from_json_file(opts.config_file);
  if (!opts.corpus_dir.empty()) config.corpus_path = opts.corpus_dir;
  if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
  if (opts.seed) config.split.seed = *opts.seed;
  if (opts.repetitions) config.repetitions = *opts.repetitions;
  if (opts.strict) config.strictness = kg::Strictness::strict;
  if (opts.lenient) config.strictness = kg::Strictness::lenient;
  if (!opts.provider.empty()) {
    if (config.models.empty()) {
      gateway::ModelConfig m;
      m.provider_id = opts.provider;
      m.model_id = opts.provider;
      config.models.push_back(m);
    } else {
      for (auto& m : config.models) m.provider_id = opts.provider;
    }
  }
  return config;
}

std::filesystem::path resolve_run_dir(const pipeline::ExperimentConfig& config) {
  return config.out_dir / "runs" / pipeline::config_hash(config);
}

int cmd_split(const pipeline::ExperimentConfig& config) {
  auto corpus = corpus::load_corpus(config.corpus_path);
  auto split = corpus::split_corpus(corpus, config.split.ratio, config.split.seed);
  nlohmann::json j;
  j["ratio"] = split.ratio;
  j["seed"] = split.seed;
  j["dev_reports"] = split.dev_reports;
  j["test_reports"] = split.test_reports;
  j["dev_profiles"] = split.dev_profiles;
  j["test_profiles"] = split.test_profiles;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_emit_ft(const pipeline::ExperimentConfig& config) {
  auto corpus = corpus::load_corpus(config.corpus_path);
  auto split = corpus::split_corpus(corpus, config.split.ratio, config.split.seed);
  std::filesystem::create_directories(config.out_dir);
  for (TaskKind task : config.tasks) {
    auto records = prompt::emit_finetune_dataset(split, corpus, task);
    auto path = config.out_dir / ("finetune_" + to_string(task) + ".jsonl");
    prompt::write_finetune_jsonl(records, path);
    std::cout << "wrote " << records.size() << " records to " << path.string()
              << "\n";
  }
  return 0;
}

int cmd_run(const pipeline::ExperimentConfig& config) {
  auto result = pipeline::run_experiment(config);
  std::cout << "run directory: " << result.run_dir.string() << "\n";
  for (const auto& w : result.warnings) std::cout << "warning: " << w << "\n";
  return 0;
}

int cmd_ci(const pipeline::ExperimentConfig& config) {
  pipeline::recompute_ci(resolve_run_dir(config));
  std::cout << "updated " << (resolve_run_dir(config) / "tables" / "ci.csv").string()
            << "\n";
  return 0;
}

int cmd_calibrate(const pipeline::ExperimentConfig& config) {
  pipeline::recompute_calibration(resolve_run_dir(config));
  std::cout << "updated "
            << (resolve_run_dir(config) / "tables" / "calibration.csv").string()
            << "\n";
  return 0;
}

int cmd_report(const pipeline::ExperimentConfig& config) {
  auto run_dir = resolve_run_dir(config);
  pipeline::emit_tables(run_dir);
  std::cout << "tables written under " << (run_dir / "tables").string() << "\n";
  std::cout << "summary: " << (run_dir / "summary.txt").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctieval - offline-testable LLM evaluation harness for CTI tasks"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config_file, "experiment config JSON file");
  app.add_option("--corpus", opts.corpus_dir, "corpus directory");
  app.add_option("--out", opts.out_dir, "output directory");
  app.add_option("--provider", opts.provider,
                 "provider id override (scripted|scripted-nologprobs|http)");
  int seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "split seed override");
  int repetitions_value = 0;
  auto* rep_opt =
      app.add_option("--repetitions", repetitions_value, "repetitions per item");
  auto* strict_flag = app.add_flag("--strict", opts.strict, "strict JSON parsing");
  app.add_flag("--lenient", opts.lenient, "lenient JSON parsing (default)")
      ->excludes(strict_flag);

  auto* split_cmd = app.add_subcommand("split", "compute and print the corpus split");
  auto* emit_ft_cmd =
      app.add_subcommand("emit-ft", "emit supervised fine-tuning datasets");
  auto* run_cmd = app.add_subcommand("run", "run the full evaluation pipeline");
  auto* ci_cmd =
      app.add_subcommand("ci", "recompute bootstrap CIs from run records");
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "recompute calibration from run records");
  auto* report_cmd = app.add_subcommand("report", "re-emit tables and summary");

  CLI11_PARSE(app, argc, argv);

  if (seed_opt->count() > 0) opts.seed = seed_value;
  if (rep_opt->count() > 0) opts.repetitions = repetitions_value;

  try {
    auto config = resolve_config(opts);
    if (split_cmd->parsed()) return cmd_split(config);
    if (emit_ft_cmd->parsed()) return cmd_emit_ft(config);
    if (run_cmd->parsed()) return cmd_run(config);
    if (ci_cmd->parsed()) return cmd_ci(config);
    if (calibrate_cmd->parsed()) return cmd_calibrate(config);
    if (report_cmd->parsed()) return cmd_report(config);
  } catch (const PartialRunError& e) {
    std::cerr << "partial run: " << e.what() << "\n";
    return 4;
  } catch (const GatewayError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
