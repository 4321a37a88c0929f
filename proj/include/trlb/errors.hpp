#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trlb {

/// Violated precondition or invalid argument value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Text input that does not parse; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Malformed or inconsistent binary/manifest file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File that cannot be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}

  /// Epoch during which the failure occurred (1-based; 0 means before training).
  std::size_t epoch() const noexcept { return epoch_; }
  void set_epoch(std::size_t e) noexcept { epoch_ = e; }

 private:
  std::size_t epoch_;
};

}  // namespace trlb
