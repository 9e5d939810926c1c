#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kc {

// Root of every domain error raised by the library. The CLI maps these to
// exit code 1; anything else is a usage error or a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t line, std::size_t column, std::string message);

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string detail_;
};

class UnknownPrefix : public Error {
 public:
  UnknownPrefix(std::string prefix, std::size_t line);

  const std::string& prefix() const { return prefix_; }
  std::size_t line() const { return line_; }

 private:
  std::string prefix_;
  std::size_t line_;
};

class AmbiguousName : public Error {
 public:
  explicit AmbiguousName(std::string name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kc
