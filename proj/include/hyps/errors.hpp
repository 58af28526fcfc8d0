#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Error taxonomy shared by all modules. The CLI maps these onto its exit
// codes: config/shape/format/data -> 2, numeric divergence -> 3,
// insufficient data -> 4.

#include <stdexcept>
#include <string>

namespace hyps {

// Dimension disagreement between operands (names both shapes).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (rank bounds, bad model config, bad flags).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: non-convergence, NaN loss, divergence.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file content (bad magic, truncated payload, bad datatype).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Contract misuse by the caller (non-scalar loss, wrong snapshot count).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Input data violates a schema or content contract.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Not enough data to run the requested procedure (e.g. a class smaller
// than the fold count).
class InsufficientDataError : public std::runtime_error {
public:
    explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace hyps
