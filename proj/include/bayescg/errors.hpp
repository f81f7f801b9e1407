#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bayescg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input file could not be parsed. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// An iteration could not continue: a curvature term vanished or became non-finite,
/// or a factorization pivot was not positive.
class BreakdownError : public Error {
public:
    BreakdownError(const std::string& what, std::ptrdiff_t index)
        : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

    std::ptrdiff_t index() const noexcept { return index_; }

private:
    std::ptrdiff_t index_;
};

inline void require(bool condition, const char* message) {
    if (!condition) throw ConfigError(message);
}

inline void require_dims(bool condition, const char* message) {
    if (!condition) throw DimensionError(message);
}

}  // namespace bayescg
