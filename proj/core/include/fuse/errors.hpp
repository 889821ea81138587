#pragma once

#include <stdexcept>
#include <string>

namespace fuse {

/// Bad input data or configuration. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file content; carries the offending line when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : ValidationError(path + ":" + std::to_string(line) + ": " + what) {}
    using ValidationError::ValidationError;
};

} // namespace fuse
