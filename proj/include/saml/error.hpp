#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace saml {

// Error taxonomy mapped onto CLI exit codes:
//   InputError -> 2, BackendUnavailableError -> 3, ArtifactMissingError -> 4,
//   ContractViolationError -> 5. Anything else -> 1.

/// Bad or inconsistent input data (corpus layout, config, CSV schema).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A segmenter backend failed transiently (unreachable, timeout, 5xx).
/// Retryable; carries the instance ids whose prompts failed.
class BackendUnavailableError : public std::runtime_error {
 public:
  BackendUnavailableError(const std::string& msg, std::vector<std::string> instance_ids = {})
      : std::runtime_error(msg), instance_ids(std::move(instance_ids)) {}
  std::vector<std::string> instance_ids;
};

/// A required artifact (checkpoint, boxes.csv, ...) does not exist.
class ArtifactMissingError : public std::runtime_error {
 public:
  explicit ArtifactMissingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A component broke its contract (wrong-shaped mask, non-finite logits).
class ContractViolationError : public std::runtime_error {
 public:
  explicit ContractViolationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace saml
