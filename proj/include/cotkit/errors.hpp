#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cotkit {

/// A precondition of a public operation was violated by the caller.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A state or value left its declared range.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Token-level parse failure. `position` is the offset of the offending token.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t position, const std::string& what)
        : std::runtime_error("token " + std::to_string(position) + ": " + what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Sampling or dataset assembly could not produce a valid result.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reading or writing dataset files failed. `line` is 1-based, 0 when not line-specific.
class DatasetIoError : public std::runtime_error {
public:
    DatasetIoError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace cotkit
