#include "ctieval/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ctieval/errors.hpp"
#include "ctieval/hash.hpp"
#include "ctieval/prompt.hpp"

namespace ctieval::gateway {

using nlohmann::json;

void validate_tokens(const ModelResponse& response) {
  if (!response.tokens) return;
  std::string concat;
  int last_pos = -1;
  for (const auto& t : *response.tokens) {
    if (t.position <= last_pos)
      throw ValidationError("token positions not strictly increasing");
    if (t.logprob > 0.0)
      throw ValidationError("token logprob above zero at position " +
                            std::to_string(t.position));
    last_pos = t.position;
    concat += t.token_text;
  }
  if (concat != response.text)
    throw ValidationError("token texts do not concatenate to the response text");
}

namespace {

json tokens_to_json(const std::vector<TokenLogProb>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens)
    arr.push_back({{"token_text", t.token_text},
                   {"logprob", t.logprob},
                   {"position", t.position}});
  return arr;
}

std::vector<TokenLogProb> tokens_from_json(const json& arr) {
  std::vector<TokenLogProb> out;
  for (const auto& t : arr) {
    TokenLogProb tok;
    tok.token_text = t.at("token_text").get<std::string>();
    tok.logprob = t.at("logprob").get<double>();
    tok.position = t.at("position").get<int>();
    out.push_back(std::move(tok));
  }
  return out;
}

}  // namespace

std::string response_to_json(const ModelResponse& r) {
  json doc;
  doc["text"] = r.text;
  doc["tokens"] = r.tokens ? tokens_to_json(*r.tokens) : json(nullptr);
  doc["latency_ms"] = r.latency_ms;
  doc["provider_meta"] = json(r.provider_meta);
  doc["request_fingerprint"] = r.request_fingerprint;
  doc["logprobs_missing"] = r.logprobs_missing;
  return doc.dump();
}

ModelResponse response_from_json(const std::string& text) {
  json doc = json::parse(text);
  ModelResponse r;
  r.text = doc.at("text").get<std::string>();
  if (!doc.at("tokens").is_null()) r.tokens = tokens_from_json(doc.at("tokens"));
  r.latency_ms = doc.value("latency_ms", 0.0);
  if (doc.contains("provider_meta"))
    r.provider_meta =
        doc.at("provider_meta").get<std::map<std::string, std::string>>();
  r.request_fingerprint = doc.value("request_fingerprint", "");
  r.logprobs_missing = doc.value("logprobs_missing", false);
  return r;
}

std::string request_fingerprint(const std::string& model_id,
                                const std::string& prompt_hash,
                                double temperature, int seed,
                                int iteration_index) {
  char temp_buf[32];
  std::snprintf(temp_buf, sizeof(temp_buf), "%.6g", temperature);
  std::string key = model_id + "\n" + prompt_hash + "\n" + temp_buf + "\n" +
                    std::to_string(seed) + "\n" + std::to_string(iteration_index);
  return sha256_hex(key);
}

// ---------------------------------------------------------------------------
// ScriptedProvider

ScriptedProvider::ScriptedProvider(bool with_logprobs)
    : with_logprobs_(with_logprobs) {}

void ScriptedProvider::register_fixture(const std::string& prompt_hash,
                                        int iteration_index,
                                        ModelResponse response) {
  register_fixture("", prompt_hash, iteration_index, std::move(response));
}

void ScriptedProvider::register_fixture(const std::string& model_id,
                                        const std::string& prompt_hash,
                                        int iteration_index,
                                        ModelResponse response) {
  validate_tokens(response);
  std::lock_guard<std::mutex> lock(mu_);
  Key key{model_id, prompt_hash, iteration_index};
  if (fixtures_.count(key))
    throw std::invalid_argument("duplicate fixture key: " + prompt_hash +
                                " iteration " + std::to_string(iteration_index));
  fixtures_.emplace(std::move(key), std::move(response));
}

void ScriptedProvider::load_fixture_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw LoadError("scripted fixture directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    json doc;
    try {
      in >> doc;
    } catch (const json::parse_error& e) {
      throw LoadError("invalid fixture file " + file.string() + ": " + e.what());
    }
    ModelResponse r;
    r.text = doc.at("text").get<std::string>();
    if (doc.contains("tokens") && !doc.at("tokens").is_null())
      r.tokens = tokens_from_json(doc.at("tokens"));
    r.latency_ms = doc.value("latency_ms", 0.0);
    register_fixture(doc.value("model_id", ""),
                     doc.at("prompt_hash").get<std::string>(),
                     doc.at("iteration_index").get<int>(), std::move(r));
  }
}

size_t ScriptedProvider::fixture_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return fixtures_.size();
}

ModelResponse ScriptedProvider::complete_raw(const prompt::Prompt& p,
                                             const ModelConfig& /*config*/,
                                             const std::string& effective_model,
                                             int iteration_index) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = fixtures_.find(Key{effective_model, p.content_hash, iteration_index});
  if (it == fixtures_.end())
    it = fixtures_.find(Key{"", p.content_hash, iteration_index});
  if (it == fixtures_.end())
    throw CapabilityError("no fixture for prompt hash " + p.content_hash +
                          " iteration " + std::to_string(iteration_index) +
                          " (model " + effective_model + ")");
  ModelResponse r = it->second;
  if (!with_logprobs_) r.tokens.reset();
  return r;
}

// ---------------------------------------------------------------------------
// HttpProvider

namespace {

// "http://host:port/prefix" -> {"http://host:port", "/prefix"}
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw GatewayError("endpoint must include a scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

ModelResponse HttpProvider::complete_raw(const prompt::Prompt& p,
                                         const ModelConfig& config,
                                         const std::string& effective_model,
                                         int iteration_index) {
  auto [base, prefix] = split_endpoint(config.endpoint);
  if (base.rfind("https://", 0) == 0)
    throw GatewayError(
        "https endpoints require a TLS-enabled build; use an http endpoint or "
        "a local gateway");

  httplib::Client client(base);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);

  httplib::Headers headers;
  if (!config.credential_ref.empty()) {
    const char* key = std::getenv(config.credential_ref.c_str());
    if (!key)
      throw GatewayError("credential environment variable not set: " +
                         config.credential_ref);
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body;
  body["model"] = effective_model;
  body["messages"] = json::array({{{"role", "user"}, {"content", p.rendered}}});
  body["temperature"] = config.temperature;
  body["seed"] = config.seed;
  body["max_tokens"] = config.max_output_tokens;
  if (config.json_mode) body["response_format"] = {{"type", "json_object"}};
  if (config.logprobs_requested) body["logprobs"] = true;
  // Distinct iterations must not be deduplicated upstream.
  body["metadata"] = {{"iteration_index", iteration_index}};

  auto started = std::chrono::steady_clock::now();
  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                         "application/json");
  auto elapsed = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - started)
                     .count();

  if (!res)
    throw TransportError("connection to " + base +
                         " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("provider returned status " + std::to_string(res->status));
  if (res->status >= 400) {
    if (config.json_mode && res->body.find("response_format") != std::string::npos)
      throw CapabilityError("provider refused JSON mode: " + res->body);
    throw GatewayError("provider returned status " + std::to_string(res->status) +
                       ": " + res->body);
  }

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw GatewayError(std::string("unparseable provider response: ") + e.what());
  }

  ModelResponse out;
  out.latency_ms = elapsed;
  try {
    const auto& choice = doc.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("logprobs") && !choice.at("logprobs").is_null() &&
        choice.at("logprobs").contains("content")) {
      std::vector<TokenLogProb> tokens;
      int pos = 0;
      for (const auto& t : choice.at("logprobs").at("content")) {
        TokenLogProb tok;
        tok.token_text = t.at("token").get<std::string>();
        tok.logprob = t.at("logprob").get<double>();
        tok.position = pos++;
        tokens.push_back(std::move(tok));
      }
      out.tokens = std::move(tokens);
    }
    if (doc.contains("model") && doc.at("model").is_string())
      out.provider_meta["model"] = doc.at("model").get<std::string>();
  } catch (const json::exception& e) {
    throw GatewayError(std::string("unexpected provider response shape: ") +
                       e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// RateLimiter

RateLimiter::RateLimiter(int per_minute, std::function<double()> now_seconds,
                         std::function<void(double)> sleep_seconds)
    : per_minute_(per_minute),
      tokens_(static_cast<double>(per_minute)),
      now_(std::move(now_seconds)),
      sleep_(std::move(sleep_seconds)) {
  if (!now_) {
    now_ = [] {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    };
  }
  if (!sleep_) {
    sleep_ = [](double seconds) {
      std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };
  }
  last_refill_ = now_();
}

void RateLimiter::acquire() {
  if (per_minute_ <= 0) return;
  std::unique_lock<std::mutex> lock(mu_);
  const double rate = per_minute_ / 60.0;
  for (;;) {
    double now = now_();
    tokens_ = std::min(static_cast<double>(per_minute_),
                       tokens_ + (now - last_refill_) * rate);
    last_refill_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    double wait = (1.0 - tokens_) / rate;
    lock.unlock();
    sleep_(wait);
    lock.lock();
  }
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::optional<ModelResponse> ResponseCache::get(const std::string& fingerprint) const {
  if (dir_.empty()) return std::nullopt;
  std::lock_guard<std::mutex> lock(mu_);
  auto path = dir_ / (fingerprint + ".json");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return response_from_json(buf.str());
}

void ResponseCache::put(const std::string& fingerprint, const ModelResponse& response) {
  if (dir_.empty()) return;
  std::lock_guard<std::mutex> lock(mu_);
  auto path = dir_ / (fingerprint + ".json");
  auto tmp = dir_ / (fingerprint + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << response_to_json(response);
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// ModelGateway

ModelGateway::ModelGateway(std::shared_ptr<Provider> provider, ModelConfig config,
                           std::filesystem::path cache_dir)
    : provider_(std::move(provider)),
      config_(std::move(config)),
      cache_(std::move(cache_dir)),
      limiter_(provider_->deterministic() ? 0 : config_.requests_per_minute) {}

ModelResponse ModelGateway::complete(const prompt::Prompt& p, int iteration_index,
                                     const std::string& model_override) {
  if (p.rendered.empty()) throw std::invalid_argument("prompt is empty");
  if (iteration_index < 0) throw std::invalid_argument("iteration_index < 0");

  const std::string effective_model =
      model_override.empty() ? config_.model_id : model_override;
  const std::string fp = request_fingerprint(
      effective_model, p.content_hash, config_.temperature, config_.seed,
      iteration_index);

  // Idempotence by fingerprint: a cached response is never re-requested.
  if (auto cached = cache_.get(fp)) return *cached;

  ModelResponse response;
  int attempt = 0;
  for (;;) {
    try {
      limiter_.acquire();
      response = provider_->complete_raw(p, config_, effective_model,
                                         iteration_index);
      break;
    } catch (const TransportError& e) {
      ++attempt;
      if (attempt > config_.max_retries)
        throw GatewayError(std::string("transport failure after ") +
                           std::to_string(config_.max_retries) +
                           " retries: " + e.what());
      std::this_thread::sleep_for(
          std::chrono::milliseconds(200ll << std::min(attempt, 5)));
    }
  }

  try {
    validate_tokens(response);
  } catch (const ValidationError& e) {
    response.tokens.reset();
    response.provider_meta["token_validation"] = e.what();
  }
  if (!config_.logprobs_requested)
    response.tokens.reset();
  else if (!response.tokens)
    response.logprobs_missing = true;

  response.request_fingerprint = fp;
  cache_.put(fp, response);
  return response;
}

std::shared_ptr<Provider> make_provider(const ModelConfig& config) {
  if (config.provider_id == "scripted") {
    auto provider = std::make_shared<ScriptedProvider>(true);
    if (!config.endpoint.empty() && std::filesystem::is_directory(config.endpoint))
      provider->load_fixture_dir(config.endpoint);
    return provider;
  }
  if (config.provider_id == "scripted-nologprobs") {
    auto provider = std::make_shared<ScriptedProvider>(false);
    if (!config.endpoint.empty() && std::filesystem::is_directory(config.endpoint))
      provider->load_fixture_dir(config.endpoint);
    return provider;
  }
  if (config.provider_id == "http") return std::make_shared<HttpProvider>();
  throw std::invalid_argument("unknown provider_id: " + config.provider_id);
}

}  // namespace ctieval::gateway
