#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace alertpred {

// Base for every data/contract error raised by the library. The CLI maps
// these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record. Line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string reason)
      : Error("line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(std::move(reason)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

}  // namespace alertpred
