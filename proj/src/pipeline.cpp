#include "ctieval/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "ctieval/calibration.hpp"
#include "ctieval/errors.hpp"
#include "ctieval/hash.hpp"

namespace ctieval::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

json model_to_json(const gateway::ModelConfig& m) {
  json j;
  j["provider_id"] = m.provider_id;
  j["model_id"] = m.model_id;
  j["finetuned_model_id"] = m.finetuned_model_id ? json(*m.finetuned_model_id)
                                                 : json(nullptr);
  j["temperature"] = m.temperature;
  j["seed"] = m.seed;
  j["max_output_tokens"] = m.max_output_tokens;
  j["json_mode"] = m.json_mode;
  j["logprobs_requested"] = m.logprobs_requested;
  j["endpoint"] = m.endpoint;
  j["credential_ref"] = m.credential_ref;
  j["requests_per_minute"] = m.requests_per_minute;
  j["max_retries"] = m.max_retries;
  return j;
}

gateway::ModelConfig model_from_json(const json& j) {
  gateway::ModelConfig m;
  m.provider_id = j.value("provider_id", "scripted");
  m.model_id = j.value("model_id", "model");
  if (j.contains("finetuned_model_id") && !j.at("finetuned_model_id").is_null())
    m.finetuned_model_id = j.at("finetuned_model_id").get<std::string>();
  m.temperature = j.value("temperature", 0.0);
  m.seed = j.value("seed", 0);
  m.max_output_tokens = j.value("max_output_tokens", 1024);
  m.json_mode = j.value("json_mode", true);
  m.logprobs_requested = j.value("logprobs_requested", true);
  m.endpoint = j.value("endpoint", "");
  m.credential_ref = j.value("credential_ref", "");
  m.requests_per_minute = j.value("requests_per_minute", 30);
  m.max_retries = j.value("max_retries", 3);
  return m;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? ch : '-');
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["corpus"] = c.corpus_path.string();
  j["out"] = c.out_dir.string();
  j["split"] = {{"ratio", c.split.ratio}, {"seed", c.split.seed}};
  json tasks = json::array();
  for (auto t : c.tasks) tasks.push_back(to_string(t));
  j["tasks"] = tasks;
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  j["modes"] = modes;
  json models = json::array();
  for (const auto& m : c.models) models.push_back(model_to_json(m));
  j["models"] = models;
  j["repetitions"] = c.repetitions;
  j["bootstrap"] = {{"resamples", c.bootstrap.resamples},
                    {"k", c.bootstrap.k},
                    {"lower_percentile", c.bootstrap.lower_percentile},
                    {"upper_percentile", c.bootstrap.upper_percentile},
                    {"seed", c.bootstrap.seed}};
  j["calibration_bins"] = c.calibration_bins;
  j["strictness"] = c.strictness == kg::Strictness::strict ? "strict" : "lenient";
  j["date_granularity"] =
      c.granularity == scoring::DateGranularity::year ? "year" : "year_month";
  j["zero_shot_whole_corpus"] = c.zero_shot_whole_corpus;
  j["few_shot_k"] = c.few_shot_k;
  j["few_shot_seed"] = c.few_shot_seed;
  j["workers"] = c.workers;
  j["aliases"] = c.aliases_path ? json(c.aliases_path->string()) : json(nullptr);
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("invalid config JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.corpus_path = j.value("corpus", "");
  c.out_dir = j.value("out", "out");
  if (j.contains("split")) {
    c.split.ratio = j.at("split").value("ratio", 0.7);
    c.split.seed = j.at("split").value("seed", 7);
  }
  if (j.contains("tasks")) {
    c.tasks.clear();
    for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from_string(t.get<std::string>()));
  }
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) c.modes.push_back(mode_from_string(m.get<std::string>()));
  }
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) c.models.push_back(model_from_json(m));
  }
  c.repetitions = j.value("repetitions", 10);
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    c.bootstrap.resamples = b.value("resamples", 10000);
    c.bootstrap.k = b.value("k", 0);
    c.bootstrap.lower_percentile = b.value("lower_percentile", 5);
    c.bootstrap.upper_percentile = b.value("upper_percentile", 95);
    c.bootstrap.seed = b.value("seed", 0ull);
  }
  c.calibration_bins = j.value("calibration_bins", 10);
  c.strictness = j.value("strictness", "lenient") == std::string("strict")
                     ? kg::Strictness::strict
                     : kg::Strictness::lenient;
  c.granularity = j.value("date_granularity", "year") == std::string("year_month")
                      ? scoring::DateGranularity::year_month
                      : scoring::DateGranularity::year;
  c.zero_shot_whole_corpus = j.value("zero_shot_whole_corpus", false);
  c.few_shot_k = j.value("few_shot_k", 5);
  c.few_shot_seed = j.value("few_shot_seed", 0);
  c.workers = j.value("workers", 1);
  if (j.contains("aliases") && !j.at("aliases").is_null())
    c.aliases_path = j.at("aliases").get<std::string>();
  return c;
}

ExperimentConfig config_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(config_to_json(config)).substr(0, 12);
}

void validate_config(const ExperimentConfig& config) {
  if (config.corpus_path.empty()) throw ValidationError("config: corpus path not set");
  if (config.models.empty()) throw ValidationError("config: no models configured");
  if (config.tasks.empty()) throw ValidationError("config: no tasks selected");
  if (config.modes.empty()) throw ValidationError("config: no modes selected");
  if (config.repetitions < 2)
    throw ValidationError("config: repetitions must be >= 2 (CIs need repeats)");
  if (!(config.split.ratio > 0.0 && config.split.ratio < 1.0))
    throw ValidationError("config: split ratio must be in (0,1)");
  const bool wants_finetuned =
      std::find(config.modes.begin(), config.modes.end(), Mode::fine_tuned) !=
      config.modes.end();
  if (wants_finetuned) {
    for (const auto& m : config.models)
      if (!m.finetuned_model_id)
        throw ValidationError("config: fine_tuned mode requires finetuned_model_id "
                              "for model " +
                              m.model_id);
  }
  if (config.few_shot_k < 1) throw ValidationError("config: few_shot_k must be >= 1");
  if (config.workers < 1) throw ValidationError("config: workers must be >= 1");
}

// ---------------------------------------------------------------------------
// Records

std::string record_to_json(const RunRecord& r) {
  json j;
  j["task"] = to_string(r.task);
  j["mode"] = to_string(r.mode);
  j["model"] = r.model;
  j["item_id"] = r.item_id;
  j["iteration_index"] = r.iteration_index;
  j["prompt_hash"] = r.prompt_hash;
  j["response_text"] = r.response_text;
  if (r.tokens) {
    json arr = json::array();
    for (const auto& t : *r.tokens)
      arr.push_back({{"token_text", t.token_text},
                     {"logprob", t.logprob},
                     {"position", t.position}});
    j["tokens"] = arr;
  } else {
    j["tokens"] = nullptr;
  }
  j["logprobs_missing"] = r.logprobs_missing;
  j["parse_status"] = r.parse_status;
  j["diagnostics"] = r.diagnostics;
  json counts = json::array();
  for (const auto& c : r.counts)
    counts.push_back({{"class", to_string(c.entity_class)},
                      {"tp", c.tp},
                      {"fp", c.fp},
                      {"fn", c.fn}});
  j["counts"] = counts;
  j["few_shot_sources"] = r.few_shot_sources;
  j["fingerprint"] = r.fingerprint;
  j["timestamp"] = r.timestamp;
  j["latency_ms"] = r.latency_ms;
  return j.dump();
}

RunRecord record_from_json(const std::string& text) {
  json j = json::parse(text);
  RunRecord r;
  r.task = task_from_string(j.at("task").get<std::string>());
  r.mode = mode_from_string(j.at("mode").get<std::string>());
  r.model = j.at("model").get<std::string>();
  r.item_id = j.at("item_id").get<std::string>();
  r.iteration_index = j.at("iteration_index").get<int>();
  r.prompt_hash = j.value("prompt_hash", "");
  r.response_text = j.value("response_text", "");
  if (j.contains("tokens") && !j.at("tokens").is_null()) {
    std::vector<gateway::TokenLogProb> tokens;
    for (const auto& t : j.at("tokens")) {
      gateway::TokenLogProb tok;
      tok.token_text = t.at("token_text").get<std::string>();
      tok.logprob = t.at("logprob").get<double>();
      tok.position = t.at("position").get<int>();
      tokens.push_back(std::move(tok));
    }
    r.tokens = std::move(tokens);
  }
  r.logprobs_missing = j.value("logprobs_missing", false);
  r.parse_status = j.value("parse_status", "failed");
  if (j.contains("diagnostics"))
    r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  for (const auto& c : j.value("counts", json::array())) {
    scoring::MatchCounts mc;
    mc.entity_class = entity_class_from_string(c.at("class").get<std::string>());
    mc.tp = c.at("tp").get<long>();
    mc.fp = c.at("fp").get<long>();
    mc.fn = c.at("fn").get<long>();
    r.counts.push_back(mc);
  }
  if (j.contains("few_shot_sources"))
    r.few_shot_sources = j.at("few_shot_sources").get<std::vector<std::string>>();
  r.fingerprint = j.value("fingerprint", "");
  r.timestamp = j.value("timestamp", "");
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Prompts

std::vector<prompt::FewShotExample> select_task_few_shots(
    const corpus::Corpus& corpus, const corpus::CorpusSplit& split, TaskKind task,
    int k, int seed) {
  // Extraction teaches the pattern-like classes; generation teaches the
  // profile fields the closed world constrains.
  static const std::vector<EntityClass> kExtractionClasses = {
      EntityClass::attack_vector, EntityClass::cve};
  static const std::vector<EntityClass> kGenerationClasses = {
      EntityClass::country, EntityClass::labels, EntityClass::goals};
  const auto& classes =
      task == TaskKind::extraction ? kExtractionClasses : kGenerationClasses;

  std::vector<prompt::FewShotExample> out;
  int class_offset = 0;
  for (EntityClass cls : classes) {
    auto examples =
        prompt::select_few_shots(split, corpus, task, cls, k, seed + class_offset);
    out.insert(out.end(), examples.begin(), examples.end());
    ++class_offset;
  }
  return out;
}

prompt::Prompt build_item_prompt(const corpus::Corpus& corpus,
                                 const corpus::CorpusSplit& split, TaskKind task,
                                 Mode mode, const std::string& item_id,
                                 int few_shot_k, int few_shot_seed) {
  std::optional<std::vector<prompt::FewShotExample>> few_shots;
  if (mode == Mode::few_shot)
    few_shots = select_task_few_shots(corpus, split, task, few_shot_k, few_shot_seed);

  prompt::Prompt p;
  if (task == TaskKind::extraction) {
    p = prompt::build_extraction_prompt(corpus.report(item_id), corpus.vocabularies,
                                        few_shots ? &*few_shots : nullptr, &split);
  } else {
    p = prompt::build_generation_prompt(corpus, item_id,
                                        few_shots ? &*few_shots : nullptr, &split);
  }
  p.mode = mode;  // fine_tuned reuses the zero-shot text, addressed by model id
  return p;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

struct GroupKey {
  std::string task;
  std::string mode;
  std::string model;
  auto operator<=>(const GroupKey&) const = default;
};

struct Aggregates {
  json metrics = json::array();
  json ci = json::array();
  json calibration = json::array();
  json calibration_bins = json::array();
  std::vector<std::string> warnings;
};

// Micro metrics per class for one iteration across all items of a group.
std::map<EntityClass, scoring::Metrics> iteration_metrics(
    const std::vector<const RunRecord*>& records, int iteration,
    const std::vector<EntityClass>& classes) {
  std::map<EntityClass, std::vector<scoring::MatchCounts>> by_class;
  for (const auto* r : records) {
    if (r->iteration_index != iteration) continue;
    for (const auto& c : r->counts) by_class[c.entity_class].push_back(c);
  }
  std::map<EntityClass, scoring::Metrics> out;
  for (EntityClass cls : classes) {
    auto it = by_class.find(cls);
    if (it == by_class.end()) continue;
    out[cls] = scoring::aggregate_micro(it->second);
  }
  return out;
}

json metrics_row(const std::string& task, const std::string& mode,
                 const std::string& model, EntityClass cls,
                 const scoring::MatchCounts& total, const scoring::Metrics& m) {
  json row;
  row["task"] = task;
  row["mode"] = mode;
  row["model"] = model;
  row["class"] = to_string(cls);
  row["tp"] = total.tp;
  row["fp"] = total.fp;
  row["fn"] = total.fn;
  row["precision"] = m.precision ? json(*m.precision) : json(nullptr);
  row["recall"] = m.recall ? json(*m.recall) : json(nullptr);
  row["f1"] = m.f1 ? json(*m.f1) : json(nullptr);
  return row;
}

void aggregate_group(Aggregates& agg, const ExperimentConfig& config,
                     const corpus::Corpus& corpus, TaskKind task, Mode mode,
                     const std::string& model,
                     const std::vector<const RunRecord*>& records,
                     const kg::AliasTable* aliases) {
  const auto& classes = classes_for(task);
  const std::string task_name = to_string(task);
  const std::string mode_name = to_string(mode);

  // Point metrics: the canonical single pass (iteration 0).
  {
    std::map<EntityClass, std::vector<scoring::MatchCounts>> by_class;
    for (const auto* r : records) {
      if (r->iteration_index != 0) continue;
      for (const auto& c : r->counts) by_class[c.entity_class].push_back(c);
    }
    for (EntityClass cls : classes) {
      auto it = by_class.find(cls);
      if (it == by_class.end()) continue;
      auto total = scoring::sum_counts(it->second);
      agg.metrics.push_back(metrics_row(task_name, mode_name, model, cls, total,
                                        scoring::compute_prf(total)));
    }
  }

  // Confidence intervals over per-iteration metric values.
  {
    std::map<EntityClass, std::map<consistency::MetricName, std::vector<double>>>
        samples;
    for (int i = 0; i < config.repetitions; ++i) {
      auto metrics = iteration_metrics(records, i, classes);
      for (const auto& [cls, m] : metrics) {
        if (m.precision)
          samples[cls][consistency::MetricName::precision].push_back(*m.precision);
        if (m.recall)
          samples[cls][consistency::MetricName::recall].push_back(*m.recall);
        if (m.f1) samples[cls][consistency::MetricName::f1].push_back(*m.f1);
      }
    }
    consistency::BootstrapConfig bootstrap = config.bootstrap;
    bootstrap.n = config.repetitions;
    for (EntityClass cls : classes) {
      auto it = samples.find(cls);
      if (it == samples.end()) continue;
      for (auto metric :
           {consistency::MetricName::precision, consistency::MetricName::recall,
            consistency::MetricName::f1}) {
        auto sit = it->second.find(metric);
        if (sit == it->second.end()) continue;
        if (static_cast<int>(sit->second.size()) != config.repetitions) {
          agg.warnings.push_back("ci skipped (metric not defined in every "
                                 "iteration): " +
                                 task_name + "/" + mode_name + "/" + model + "/" +
                                 to_string(cls) + "/" +
                                 consistency::to_string(metric));
          continue;
        }
        auto ci = consistency::bootstrap_ci(sit->second, bootstrap);
        json row;
        row["task"] = task_name;
        row["mode"] = mode_name;
        row["model"] = model;
        row["class"] = to_string(cls);
        row["metric"] = consistency::to_string(metric);
        row["lower"] = ci.lower;
        row["upper"] = ci.upper;
        row["point"] = ci.point;
        row["width"] = ci.width;
        if (ci.lower + ci.upper > 0.0)
          row["rel_width_pct"] = consistency::relative_ci_width(ci);
        else
          row["rel_width_pct"] = nullptr;
        agg.ci.push_back(row);
      }
    }
  }

  // Calibration from the canonical pass of every item.
  {
    std::vector<calibration::EntityConfidence> entries;
    bool any_tokens = false;
    for (const auto* r : records) {
      if (r->iteration_index != 0) continue;
      if (!r->tokens) continue;
      any_tokens = true;
      gateway::ModelResponse response;
      response.text = r->response_text;
      response.tokens = r->tokens;
      if (task == TaskKind::extraction) {
        auto parsed = kg::parse_extraction(response, corpus.vocabularies,
                                           config.strictness, aliases);
        if (!parsed.graph) continue;
        auto derived = calibration::derive_extraction_confidences(
            response, *parsed.graph, corpus.truth(r->item_id), corpus.vocabularies,
            config.granularity, aliases);
        entries.insert(entries.end(), derived.begin(), derived.end());
      } else {
        auto parsed = kg::parse_generation(response, corpus.vocabularies,
                                           config.strictness, aliases);
        if (!parsed.graph) continue;
        auto derived = calibration::derive_generation_confidences(
            response, *parsed.graph, corpus.profile(r->item_id),
            corpus.vocabularies, aliases);
        entries.insert(entries.end(), derived.begin(), derived.end());
      }
    }
    if (!any_tokens) {
      agg.warnings.push_back(
          "calibration skipped (no log probabilities available): " + task_name +
          "/" + mode_name + "/" + model);
    } else if (!entries.empty()) {
      auto reports = calibration::calibration_report(entries, config.calibration_bins);
      for (const auto& [cls, report] : reports) {
        json row;
        row["task"] = task_name;
        row["mode"] = mode_name;
        row["model"] = model;
        row["class"] = to_string(cls);
        row["ece"] = report.ece;
        row["brier"] = report.brier;
        row["n"] = report.sample_count;
        agg.calibration.push_back(row);
        for (const auto& bin : report.bins) {
          if (bin.count == 0) continue;
          json brow;
          brow["task"] = task_name;
          brow["mode"] = mode_name;
          brow["model"] = model;
          brow["class"] = to_string(cls);
          brow["bin_lo"] = bin.lo;
          brow["bin_hi"] = bin.hi;
          brow["count"] = bin.count;
          brow["mean_confidence"] = bin.mean_confidence;
          brow["accuracy"] = bin.accuracy;
          agg.calibration_bins.push_back(brow);
        }
      }
    }
  }
}

std::vector<std::string> group_items(const corpus::Corpus& corpus,
                                     const corpus::CorpusSplit& split, TaskKind task,
                                     Mode mode, bool zero_shot_whole_corpus) {
  std::vector<std::string> items;
  const bool whole = mode == Mode::zero_shot && zero_shot_whole_corpus;
  if (task == TaskKind::extraction) {
    for (const auto& r : corpus.reports) {
      if (!corpus.campaign_truths.count(r.report_id)) continue;
      if (whole || split.is_test_report(r.report_id)) items.push_back(r.report_id);
    }
  } else {
    for (const auto& [name, _] : corpus.apt_profiles)
      if (whole || split.is_test_profile(name)) items.push_back(name);
  }
  return items;
}

void write_aggregates(const std::filesystem::path& run_dir, const Aggregates& agg,
                      const std::string& hash) {
  json doc;
  doc["config_hash"] = hash;
  doc["metrics"] = agg.metrics;
  doc["ci"] = agg.ci;
  doc["calibration"] = agg.calibration;
  doc["calibration_bins"] = agg.calibration_bins;
  doc["warnings"] = agg.warnings;
  std::ofstream out(run_dir / "aggregates.json", std::ios::binary);
  out << doc.dump(2) << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Run

RunResult run_experiment(const ExperimentConfig& config) {
  validate_config(config);

  auto corpus = corpus::load_corpus(config.corpus_path);
  auto split = corpus::split_corpus(corpus, config.split.ratio, config.split.seed);

  kg::AliasTable aliases_storage;
  const kg::AliasTable* aliases = nullptr;
  if (config.aliases_path) {
    aliases_storage = kg::load_aliases(*config.aliases_path);
    aliases = &aliases_storage;
  }

  const std::string hash = config_hash(config);
  const auto run_dir = config.out_dir / "runs" / hash;
  std::filesystem::create_directories(run_dir / "records");
  std::filesystem::create_directories(run_dir / "tables");
  {
    std::ofstream out(run_dir / "config.json", std::ios::binary);
    out << config_to_json(config) << "\n";
  }

  Aggregates agg;
  std::vector<RunRecord> all_records;

  for (const auto& model_cfg : config.models) {
    auto provider = gateway::make_provider(model_cfg);
    gateway::ModelGateway gw(provider, model_cfg, run_dir / "cache");
    const bool deterministic = gw.deterministic();

    for (TaskKind task : config.tasks) {
      std::vector<prompt::FewShotExample> task_few_shots;
      std::vector<std::string> few_shot_sources;
      const bool wants_few_shot =
          std::find(config.modes.begin(), config.modes.end(), Mode::few_shot) !=
          config.modes.end();
      if (wants_few_shot) {
        task_few_shots = select_task_few_shots(corpus, split, task,
                                               config.few_shot_k,
                                               config.few_shot_seed);
        for (const auto& ex : task_few_shots)
          few_shot_sources.push_back(ex.source_id);
        std::sort(few_shot_sources.begin(), few_shot_sources.end());
        few_shot_sources.erase(
            std::unique(few_shot_sources.begin(), few_shot_sources.end()),
            few_shot_sources.end());
      }

      for (Mode mode : config.modes) {
        auto items = group_items(corpus, split, task, mode,
                                 config.zero_shot_whole_corpus);
        std::vector<std::vector<RunRecord>> per_item(items.size());

        auto run_item = [&](size_t index) {
          const std::string& item_id = items[index];
          consistency::EvalItem eval;
          eval.task = task;
          eval.item_id = item_id;
          eval.prompt = build_item_prompt(corpus, split, task, mode, item_id,
                                          config.few_shot_k, config.few_shot_seed);
          if (task == TaskKind::extraction)
            eval.campaign_truth = &corpus.truth(item_id);
          else
            eval.profile_truth = &corpus.profile(item_id);

          prompt::dump_prompt(eval.prompt, item_id, run_dir);

          auto run = consistency::run_repeated(eval, mode, gw, corpus.vocabularies,
                                               config.strictness, config.granularity,
                                               config.repetitions, aliases);
          std::vector<RunRecord> records;
          for (auto& outcome : run.iterations) {
            RunRecord r;
            r.task = task;
            r.mode = mode;
            r.model = model_cfg.model_id;
            r.item_id = item_id;
            r.iteration_index = outcome.iteration_index;
            r.prompt_hash = eval.prompt.content_hash;
            r.response_text = outcome.response.text;
            r.tokens = outcome.response.tokens;
            r.logprobs_missing = outcome.response.logprobs_missing;
            r.parse_status = kg::to_string(outcome.parse_status);
            r.diagnostics = outcome.diagnostics;
            r.counts = outcome.counts;
            if (mode == Mode::few_shot) r.few_shot_sources = few_shot_sources;
            r.fingerprint = outcome.response.request_fingerprint;
            r.timestamp = deterministic ? "" : utc_timestamp();
            r.latency_ms = deterministic ? 0.0 : outcome.response.latency_ms;
            records.push_back(std::move(r));
          }
          per_item[index] = std::move(records);
        };

        if (config.workers <= 1) {
          for (size_t i = 0; i < items.size(); ++i) run_item(i);
        } else {
          for (size_t start = 0; start < items.size();
               start += static_cast<size_t>(config.workers)) {
            std::vector<std::future<void>> futures;
            const size_t end = std::min(
                items.size(), start + static_cast<size_t>(config.workers));
            for (size_t i = start; i < end; ++i)
              futures.push_back(
                  std::async(std::launch::async, [&run_item, i] { run_item(i); }));
            for (auto& f : futures) f.get();
          }
        }

        // Records land in canonical (item, iteration) order regardless of
        // worker interleaving.
        const auto record_path =
            run_dir / "records" /
            (to_string(task) + "_" + to_string(mode) + "_" +
             sanitize(model_cfg.model_id) + ".jsonl");
        std::ofstream out(record_path, std::ios::binary | std::ios::trunc);
        if (!out)
          throw LoadError("cannot write run records: " + record_path.string());
        for (auto& records : per_item) {
          for (auto& r : records) {
            out << record_to_json(r) << "\n";
            all_records.push_back(std::move(r));
          }
        }
      }
    }
  }

  for (const auto& model_cfg : config.models) {
    for (TaskKind task : config.tasks) {
      for (Mode mode : config.modes) {
        std::vector<const RunRecord*> group;
        for (const auto& r : all_records) {
          if (r.task == task && r.mode == mode && r.model == model_cfg.model_id)
            group.push_back(&r);
        }
        if (group.empty()) continue;
        aggregate_group(agg, config, corpus, task, mode, model_cfg.model_id, group,
                        aliases);
      }
    }
  }

  // Contamination audit over everything just written.
  for (const auto& violation : contamination_violations(all_records, split))
    agg.warnings.push_back("contamination: " + violation);

  write_aggregates(run_dir, agg, hash);
  emit_tables(run_dir);

  RunResult result;
  result.run_dir = run_dir;
  result.warnings = agg.warnings;
  return result;
}

// ---------------------------------------------------------------------------
// Standalone steps

namespace {

struct LoadedRun {
  ExperimentConfig config;
  std::vector<RunRecord> records;
  json aggregates;
};

LoadedRun load_run(const std::filesystem::path& run_dir) {
  LoadedRun run;
  run.config = config_from_json_file(run_dir / "config.json");
  run.records = load_records(run_dir);
  auto agg_path = run_dir / "aggregates.json";
  std::ifstream in(agg_path, std::ios::binary);
  if (in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    run.aggregates = json::parse(buf.str());
  } else {
    run.aggregates = json{{"metrics", json::array()},
                          {"ci", json::array()},
                          {"calibration", json::array()},
                          {"calibration_bins", json::array()},
                          {"warnings", json::array()}};
  }
  return run;
}

Aggregates recompute_all(const LoadedRun& run) {
  auto corpus = corpus::load_corpus(run.config.corpus_path);
  kg::AliasTable aliases_storage;
  const kg::AliasTable* aliases = nullptr;
  if (run.config.aliases_path) {
    aliases_storage = kg::load_aliases(*run.config.aliases_path);
    aliases = &aliases_storage;
  }

  Aggregates agg;
  std::map<GroupKey, std::vector<const RunRecord*>> groups;
  for (const auto& r : run.records)
    groups[GroupKey{to_string(r.task), to_string(r.mode), r.model}].push_back(&r);
  for (const auto& model_cfg : run.config.models) {
    for (TaskKind task : run.config.tasks) {
      for (Mode mode : run.config.modes) {
        auto it = groups.find(
            GroupKey{to_string(task), to_string(mode), model_cfg.model_id});
        if (it == groups.end()) continue;
        aggregate_group(agg, run.config, corpus, task, mode, model_cfg.model_id,
                        it->second, aliases);
      }
    }
  }
  return agg;
}

}  // namespace

void recompute_ci(const std::filesystem::path& run_dir) {
  auto run = load_run(run_dir);
  if (run.records.empty())
    throw ValidationError("no run records in " + run_dir.string() +
                          "; run the pipeline first");
  Aggregates fresh = recompute_all(run);
  run.aggregates["ci"] = fresh.ci;
  std::ofstream out(run_dir / "aggregates.json", std::ios::binary);
  out << run.aggregates.dump(2) << "\n";
  emit_tables(run_dir);
}

void recompute_calibration(const std::filesystem::path& run_dir) {
  auto run = load_run(run_dir);
  if (run.records.empty())
    throw ValidationError("no run records in " + run_dir.string() +
                          "; run the pipeline first");
  Aggregates fresh = recompute_all(run);
  run.aggregates["calibration"] = fresh.calibration;
  run.aggregates["calibration_bins"] = fresh.calibration_bins;
  json warnings = json::array();
  for (const auto& w : fresh.warnings) warnings.push_back(w);
  run.aggregates["warnings"] = warnings;
  std::ofstream out(run_dir / "aggregates.json", std::ios::binary);
  out << run.aggregates.dump(2) << "\n";
  emit_tables(run_dir);
}

std::vector<RunRecord> load_records(const std::filesystem::path& run_dir) {
  std::vector<RunRecord> records;
  const auto records_dir = run_dir / "records";
  if (!std::filesystem::is_directory(records_dir)) return records;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(records_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      records.push_back(record_from_json(line));
    }
  }
  return records;
}

std::vector<std::string> contamination_violations(
    const std::vector<RunRecord>& records, const corpus::CorpusSplit& split) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    for (const auto& source : r.few_shot_sources) {
      if (split.is_dev_report(source) || split.is_dev_profile(source)) continue;
      out.push_back("record " + to_string(r.task) + "/" + to_string(r.mode) + "/" +
                    r.item_id + " iteration " + std::to_string(r.iteration_index) +
                    " references non-dev source " + source);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string csv_cell(const json& value) {
  if (value.is_null()) return "";
  if (value.is_number()) return scoring::format_2dp(value.get<double>());
  return value.get<std::string>();
}

std::string pad(const std::string& s, size_t width) {
  std::string out = s;
  while (out.size() < width) out.push_back(' ');
  return out;
}

}  // namespace

void emit_tables(const std::filesystem::path& run_dir) {
  auto agg_path = run_dir / "aggregates.json";
  std::ifstream in(agg_path, std::ios::binary);
  if (!in)
    throw ValidationError("missing aggregates.json in " + run_dir.string() +
                          "; run the pipeline first");
  std::ostringstream buf;
  buf << in.rdbuf();
  json agg = json::parse(buf.str());
  for (const char* step : {"metrics", "ci", "calibration"})
    if (!agg.contains(step))
      throw ValidationError(std::string("aggregates missing step: ") + step);

  const auto tables = run_dir / "tables";
  std::filesystem::create_directories(tables);

  {
    std::ofstream out(tables / "metrics.csv", std::ios::binary);
    out << "task,mode,model,class,P,R,F1\n";
    for (const auto& row : agg.at("metrics")) {
      out << row.at("task").get<std::string>() << ","
          << row.at("mode").get<std::string>() << ","
          << row.at("model").get<std::string>() << ","
          << row.at("class").get<std::string>() << ","
          << csv_cell(row.at("precision")) << "," << csv_cell(row.at("recall"))
          << "," << csv_cell(row.at("f1")) << "\n";
    }
  }
  {
    std::ofstream out(tables / "ci.csv", std::ios::binary);
    out << "task,mode,model,class,metric,lower,upper,rel_width_pct\n";
    for (const auto& row : agg.at("ci")) {
      out << row.at("task").get<std::string>() << ","
          << row.at("mode").get<std::string>() << ","
          << row.at("model").get<std::string>() << ","
          << row.at("class").get<std::string>() << ","
          << row.at("metric").get<std::string>() << ","
          << csv_cell(row.at("lower")) << "," << csv_cell(row.at("upper")) << ","
          << csv_cell(row.at("rel_width_pct")) << "\n";
    }
  }
  {
    std::ofstream out(tables / "calibration.csv", std::ios::binary);
    out << "task,mode,class,ECE,BS,N\n";
    for (const auto& row : agg.at("calibration")) {
      out << row.at("task").get<std::string>() << ","
          << row.at("mode").get<std::string>() << ","
          << row.at("class").get<std::string>() << "," << csv_cell(row.at("ece"))
          << "," << csv_cell(row.at("brier")) << "," << row.at("n").get<int>()
          << "\n";
    }
  }
  {
    std::ofstream out(tables / "bins.csv", std::ios::binary);
    out << "task,mode,class,bin_lo,bin_hi,count,mean_confidence,accuracy\n";
    for (const auto& row : agg.value("calibration_bins", json::array())) {
      out << row.at("task").get<std::string>() << ","
          << row.at("mode").get<std::string>() << ","
          << row.at("class").get<std::string>() << ","
          << csv_cell(row.at("bin_lo")) << "," << csv_cell(row.at("bin_hi")) << ","
          << row.at("count").get<int>() << ","
          << csv_cell(row.at("mean_confidence")) << ","
          << csv_cell(row.at("accuracy")) << "\n";
    }
  }

  // Human-readable summary.
  {
    std::ofstream out(run_dir / "summary.txt", std::ios::binary);

    auto find_metrics = [&](const std::string& task, const std::string& mode,
                            const std::string& model, const std::string& cls)
        -> const json* {
      for (const auto& row : agg.at("metrics"))
        if (row.at("task") == task && row.at("mode") == mode &&
            row.at("model") == model && row.at("class") == cls)
          return &row;
      return nullptr;
    };
    auto find_ci = [&](const std::string& task, const std::string& mode,
                       const std::string& model, const std::string& cls,
                       const std::string& metric) -> const json* {
      for (const auto& row : agg.at("ci"))
        if (row.at("task") == task && row.at("mode") == mode &&
            row.at("model") == model && row.at("class") == cls &&
            row.at("metric") == metric)
          return &row;
      return nullptr;
    };

    std::vector<std::string> tasks;
    std::vector<std::string> modes;
    std::vector<std::string> models;
    std::vector<std::string> seen_classes;
    for (const auto& row : agg.at("metrics")) {
      auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
      };
      push_unique(tasks, row.at("task"));
      push_unique(modes, row.at("mode"));
      push_unique(models, row.at("model"));
    }

    for (const auto& task : tasks) {
      std::vector<std::string> classes;
      for (EntityClass cls : classes_for(task_from_string(task)))
        classes.push_back(to_string(cls));

      out << "== point metrics: " << task << " ==\n";
      out << pad("class", 16) << pad("model", 16);
      for (const auto& mode : modes) out << pad(mode + " P/R/F1", 22);
      out << "\n";
      for (const auto& cls : classes) {
        for (const auto& model : models) {
          out << pad(cls, 16) << pad(model, 16);
          for (const auto& mode : modes) {
            const json* row = find_metrics(task, mode, model, cls);
            std::string cell = "-";
            if (row) {
              cell = csv_cell(row->at("precision")) + "/" +
                     csv_cell(row->at("recall")) + "/" + csv_cell(row->at("f1"));
            }
            out << pad(cell, 22);
          }
          out << "\n";
        }
      }
      out << "\n== confidence intervals: " << task << " ==\n";
      out << pad("class", 16) << pad("model", 16) << pad("metric", 8);
      for (const auto& mode : modes) out << pad(mode, 16);
      out << "\n";
      for (const auto& cls : classes) {
        for (const auto& model : models) {
          for (const char* metric : {"P", "R", "F1"}) {
            out << pad(cls, 16) << pad(model, 16) << pad(metric, 8);
            bool any = false;
            std::string line;
            for (const auto& mode : modes) {
              const json* row = find_ci(task, mode, model, cls, metric);
              std::string cell = "-";
              if (row) {
                any = true;
                cell = "[" + csv_cell(row->at("lower")) + ", " +
                       csv_cell(row->at("upper")) + "]";
              }
              line += pad(cell, 16);
            }
            if (any)
              out << line << "\n";
            else
              out << pad("-", 16) << "\n";
          }
        }
      }
      out << "\n== calibration: " << task << " ==\n";
      out << pad("class", 16);
      for (const auto& mode : modes) out << pad(mode + " ECE/BS", 20);
      out << "\n";
      for (const auto& cls : classes) {
        out << pad(cls, 16);
        for (const auto& mode : modes) {
          std::string cell = "-";
          for (const auto& row : agg.at("calibration")) {
            if (row.at("task") == task && row.at("mode") == mode &&
                row.at("class") == cls) {
              cell = csv_cell(row.at("ece")) + "/" + csv_cell(row.at("brier"));
              break;
            }
          }
          out << pad(cell, 20);
        }
        out << "\n";
      }
      out << "\n";
    }

    const auto& warnings = agg.value("warnings", json::array());
    if (!warnings.empty()) {
      out << "== warnings ==\n";
      for (const auto& w : warnings) out << "- " << w.get<std::string>() << "\n";
    }
  }
}

}  // namespace ctieval::pipeline
