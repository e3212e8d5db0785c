#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace biobench {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text (pairs files, CSVs, JSON). Carries a 1-based line
// number when one is known; 0 means "not line-addressable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Structurally valid input whose parts disagree (count mismatches,
// duplicate ids, digest mismatches).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Referenced files do not exist. Collects every miss before raising.
class MissingFilesError : public Error {
 public:
  explicit MissingFilesError(std::vector<std::string> missing)
      : Error(format(missing)), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  static std::string format(const std::vector<std::string>& missing);
  std::vector<std::string> missing_;
};

// Bad or unusable run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Provider rejected the credential (HTTP 401/403). Never retried.
class AuthError : public Error {
 public:
  AuthError(int status, const std::string& detail)
      : Error("authentication rejected (HTTP " + std::to_string(status) +
              "): " + detail),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Provider answered but violated its own wire contract (missing text,
// undecodable body, non-retryable status).
class ProviderError : public Error {
 public:
  using Error::Error;
};

// Retries exhausted. Keeps the per-attempt log for diagnosis.
class TransportError : public Error {
 public:
  explicit TransportError(std::vector<std::string> attempts)
      : Error(format(attempts)), attempts_(std::move(attempts)) {}
  const std::vector<std::string>& attempts() const { return attempts_; }

 private:
  static std::string format(const std::vector<std::string>& attempts);
  std::vector<std::string> attempts_;
};

// A scripted test provider saw a request it has no answer for.
class MockScriptError : public Error {
 public:
  using Error::Error;
};

// Ledger on disk does not belong to the live protocol/config.
class ResumeMismatchError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

}  // namespace biobench
