// Uniform chat-completion interface: a deterministic scripted provider for
// offline runs, an HTTP provider for hosted models, a fingerprint-addressed
// response cache and a per-provider rate limiter.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ctieval/types.hpp"

namespace ctieval::prompt {
struct Prompt;
}

namespace ctieval::gateway {

struct ModelConfig {
  std::string provider_id;  // "scripted" | "http"
  std::string model_id;
  std::optional<std::string> finetuned_model_id;
  double temperature = 0.0;
  int seed = 0;
  int max_output_tokens = 1024;
  bool json_mode = true;
  bool logprobs_requested = true;
  std::string endpoint;        // base URL (http) or fixture directory (scripted)
  std::string credential_ref;  // environment variable holding the API key
  int requests_per_minute = 30;  // 0 = unlimited
  int max_retries = 3;
};

struct TokenLogProb {
  std::string token_text;
  double logprob = 0.0;  // always <= 0
  int position = 0;
};

struct ModelResponse {
  std::string text;
  std::optional<std::vector<TokenLogProb>> tokens;
  double latency_ms = 0.0;
  std::map<std::string, std::string> provider_meta;
  std::string request_fingerprint;
  // Set when logprobs were requested but the provider returned none;
  // the calibration step decides how to handle it.
  bool logprobs_missing = false;
};

// Throws ValidationError unless token positions strictly increase and the
// concatenated token texts reproduce the response text exactly.
void validate_tokens(const ModelResponse& response);

std::string response_to_json(const ModelResponse& response);
ModelResponse response_from_json(const std::string& text);

// Digest of (model_id, prompt hash, temperature, seed, iteration_index).
// Includes the iteration index on purpose: repeated-sampling runs must not
// collapse into one cached answer.
std::string request_fingerprint(const std::string& model_id,
                                const std::string& prompt_hash,
                                double temperature, int seed,
                                int iteration_index);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ModelResponse complete_raw(const prompt::Prompt& p,
                                     const ModelConfig& config,
                                     const std::string& effective_model,
                                     int iteration_index) = 0;
  virtual bool supports_logprobs() const = 0;
  // Deterministic providers make whole pipeline runs bit-reproducible;
  // run records then carry zeroed timestamps and latencies.
  virtual bool deterministic() const { return false; }
};

// Replays registered fixture responses keyed by (model, prompt hash,
// iteration index). Fixtures registered without a model id match any model.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(bool with_logprobs = true);

  void register_fixture(const std::string& prompt_hash, int iteration_index,
                        ModelResponse response);
  void register_fixture(const std::string& model_id, const std::string& prompt_hash,
                        int iteration_index, ModelResponse response);
  // Loads every *.json fixture file under dir:
  //   {"prompt_hash": h, "iteration_index": i, "model_id"?: m,
  //    "text": s, "tokens"?: [{"token_text": t, "logprob": l, "position": p}]}
  void load_fixture_dir(const std::filesystem::path& dir);
  size_t fixture_count() const;

  ModelResponse complete_raw(const prompt::Prompt& p, const ModelConfig& config,
                             const std::string& effective_model,
                             int iteration_index) override;
  bool supports_logprobs() const override { return with_logprobs_; }
  bool deterministic() const override { return true; }

 private:
  struct Key {
    std::string model_id;  // empty = wildcard
    std::string prompt_hash;
    int iteration_index;
    auto operator<=>(const Key&) const = default;
  };
  bool with_logprobs_;
  std::map<Key, ModelResponse> fixtures_;
  mutable std::mutex mu_;
};

// Chat-completion-over-HTTP provider (OpenAI-style request/response JSON).
// Credentials come only from the environment variable named in
// ModelConfig::credential_ref.
class HttpProvider : public Provider {
 public:
  HttpProvider() = default;
  ModelResponse complete_raw(const prompt::Prompt& p, const ModelConfig& config,
                             const std::string& effective_model,
                             int iteration_index) override;
  bool supports_logprobs() const override { return true; }
};

// Token bucket, refilled continuously at per_minute/60 tokens per second.
// Clock and sleeper are injectable for tests.
class RateLimiter {
 public:
  explicit RateLimiter(int per_minute,
                       std::function<double()> now_seconds = {},
                       std::function<void(double)> sleep_seconds = {});
  void acquire();

 private:
  int per_minute_;
  double tokens_;
  double last_refill_;
  std::function<double()> now_;
  std::function<void(double)> sleep_;
  std::mutex mu_;
};

// Content-addressed response store: cache/<fingerprint>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<ModelResponse> get(const std::string& fingerprint) const;
  void put(const std::string& fingerprint, const ModelResponse& response);

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<Provider> provider, ModelConfig config,
               std::filesystem::path cache_dir);

  // Completes `p` for the given iteration. Cached responses are returned
  // byte-identically without touching the provider. `model_override`
  // addresses a fine-tuned model id; empty uses config.model_id.
  ModelResponse complete(const prompt::Prompt& p, int iteration_index,
                         const std::string& model_override = "");

  const ModelConfig& config() const { return config_; }
  bool supports_logprobs() const { return provider_->supports_logprobs(); }
  bool deterministic() const { return provider_->deterministic(); }
  Provider& provider() { return *provider_; }

 private:
  std::shared_ptr<Provider> provider_;
  ModelConfig config_;
  ResponseCache cache_;
  RateLimiter limiter_;
};

// Instantiates the provider named by config.provider_id. For "scripted",
// fixtures are loaded from config.endpoint when it names a directory.
std::shared_ptr<Provider> make_provider(const ModelConfig& config);

}  // namespace ctieval::gateway
