#include "kc/error.hpp"

namespace kc {

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string message)
    : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": " +
            message),
      line_(line),
      column_(column),
      detail_(std::move(message)) {}

UnknownPrefix::UnknownPrefix(std::string prefix, std::size_t line)
    : Error("unknown prefix '" + prefix + ":' on line " + std::to_string(line)),
      prefix_(std::move(prefix)),
      line_(line) {}

AmbiguousName::AmbiguousName(std::string name)
    : Error("name \"" + name + "\" is carried by more than one node"), name_(std::move(name)) {}

}  // namespace kc
