#pragma once

#include <stdexcept>
#include <string>

namespace ctrldiff {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: validation/contract/dimension/index/length/numeric -> 1, io -> 2.

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid input data (bad JSONL record, schema violation). Carries the line
// number when the source is a file.
struct ValidationError : std::runtime_error {
    ValidationError(const std::string& msg, long line = -1, std::string field = "")
        : std::runtime_error(line >= 0 ? "line " + std::to_string(line) + ": " + msg : msg),
          line_number(line),
          field_name(std::move(field)) {}
    long line_number;
    std::string field_name;
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LengthError : std::runtime_error {
    explicit LengthError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaped a numeric kernel.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctrldiff
