#pragma once

// Exception hierarchy shared by every module. The CLI maps UsageError to
// exit code 2 and every other Error to exit code 1.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xlg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input (manifest, JSON, JSONL). Carries line/field context in the message.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structurally valid input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Binary container problems: bad magic, unknown version, bad header.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Declared sizes disagree with the bytes actually present.
class LengthError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise unusable numeric payload.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite value at a specific matrix cell.
class NonFiniteError : public DataError {
public:
    NonFiniteError(std::uint64_t row, std::uint64_t neuron, const std::string& where)
        : DataError("non-finite activation at (row " + std::to_string(row) + ", neuron " +
                    std::to_string(neuron) + ")" + (where.empty() ? "" : " in " + where)),
          row_(row),
          neuron_(neuron) {}

    std::uint64_t row() const noexcept { return row_; }
    std::uint64_t neuron() const noexcept { return neuron_; }

private:
    std::uint64_t row_;
    std::uint64_t neuron_;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A metric is mathematically undefined for the given input (e.g. AP with one class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// A required (concept, language) or (layer, language) cell is missing.
class CompletenessError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace xlg
