#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <fmt/core.h>

namespace stepwise {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file content. Carries the offending file and 1-based line.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(fmt::format("{}:{}: {}", file, line, what)),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// A referenced file or directory does not exist or cannot be opened.
class MissingFileError : public Error {
 public:
  explicit MissingFileError(const std::string& path)
      : Error(fmt::format("cannot open '{}'", path)), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Arguments violate an operation's preconditions (shapes, ranges, sizes).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace stepwise
