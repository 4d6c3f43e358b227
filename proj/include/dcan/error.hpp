#pragma once

#include <stdexcept>
#include <string>

namespace dcan {

// Shape or dimension disagreement between operands.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Out-of-range lookup (token ids, label indices).
struct IndexError : std::out_of_range {
    explicit IndexError(const std::string& msg) : std::out_of_range(msg) {}
};

// Mathematically degenerate input (e.g. zero-norm weight vector).
struct DegenerateInputError : std::invalid_argument {
    explicit DegenerateInputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Caller broke a documented precondition that cannot be expressed in types.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// File parsing failure; message carries location (line or byte offset).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcan
