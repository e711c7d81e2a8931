#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctieval {

// Exit-code mapping used by the CLI:
//   ValidationError / LoadError / ContaminationError -> 2
//   GatewayError / CapabilityError                   -> 3
//   PartialRunError                                  -> 4
// std::invalid_argument is treated as a validation error.

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A prompt or fine-tune artifact referenced a test-set item.
struct ContaminationError : ValidationError {
  using ValidationError::ValidationError;
};

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Connection-level failure (connect error, 5xx, 429); retried with bounded
// backoff before surfacing as a GatewayError.
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};

// Provider lacks a requested capability (JSON mode, logprobs, fixture).
struct CapabilityError : GatewayError {
  using GatewayError::GatewayError;
};

// Some iterations of a repeated run completed, others failed; the run can
// be resumed because completed responses are cached by fingerprint.
struct PartialRunError : std::runtime_error {
  PartialRunError(const std::string& msg, std::vector<int> completed)
      : std::runtime_error(msg), completed_iterations(std::move(completed)) {}
  std::vector<int> completed_iterations;
};

}  // namespace ctieval
