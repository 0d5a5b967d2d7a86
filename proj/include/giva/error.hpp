#pragma once

#include <stdexcept>
#include <string>

namespace giva {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible matrix/vector shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Rank argument out of range for the operand.
class RankError : public Error {
public:
    using Error::Error;
};

// Numerically rank-deficient or otherwise degenerate input.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

// Non-finite values or failed convergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

// API used outside its stated contract (stale cache, mismatched provenance).
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed input file.
class ParseError : public Error {
public:
    using Error::Error;
};

// Empty or unusable data source.
class DataError : public Error {
public:
    using Error::Error;
};

// Training loss blew up.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Corrupt or inconsistent checkpoint.
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration; message carries the field path.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace giva
