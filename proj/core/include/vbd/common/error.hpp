#pragma once

#include <stdexcept>
#include <string>

namespace vbd {

/// Base of every error the library throws. `exit_code()` is what the CLI
/// returns when the exception escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Malformed or inconsistent configuration, scenario or schema.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// A required input artifact (corpus, checkpoint, log) is absent or unreadable.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Non-finite activations, losses or divergence during training.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// A caller violated an operation's precondition (e.g. the malicious oracle
/// queried in a scene without the trigger).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace vbd
