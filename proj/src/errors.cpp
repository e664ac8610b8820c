#include "mter/errors.hpp"

namespace mter {

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
      line_(line) {}

}  // namespace mter
