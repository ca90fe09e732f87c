#pragma once

#include <stdexcept>
#include <string>

namespace ukt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatch between op inputs.
struct DimensionError : Error {
    using Error::Error;
};

// Value outside an op's domain (sqrt/log of nonpositive input, nonpositive covariance).
struct DomainError : Error {
    using Error::Error;
};

// API misuse, e.g. backward on a non-scalar.
struct UsageError : Error {
    using Error::Error;
};

// Non-finite values during gradient checking or training.
struct NumericError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct LookupError : Error {
    using Error::Error;
};

// Metric undefined for the given input (single-class AUC, empty prediction set).
struct EvaluationError : Error {
    using Error::Error;
};

}  // namespace ukt
