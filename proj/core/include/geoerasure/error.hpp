#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoerasure {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file: bad header, unknown name, unparsable row.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a value rule (non-positive count, duplicate row).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation's precondition (mismatched candidate sets, empty range).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

class DivisionByZeroError : public Error {
 public:
  explicit DivisionByZeroError(std::string country)
      : Error("predicted probability is zero for '" + country + "'"),
        country_(std::move(country)) {}

  const std::string& country() const noexcept { return country_; }

 private:
  std::string country_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

/// Backend could not be reached. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Backend lacks a requested feature (e.g. temperature != 1).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Backend answered but the answer is unusable (tokenizer failure, bad payload).
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Some prompts could not be scored while building a report.
class ReportError : public Error {
 public:
  ReportError(const std::string& what, std::vector<std::string> failed_prompts)
      : Error(what), failed_prompts_(std::move(failed_prompts)) {}

  const std::vector<std::string>& failed_prompts() const noexcept { return failed_prompts_; }

 private:
  std::vector<std::string> failed_prompts_;
};

}  // namespace geoerasure
