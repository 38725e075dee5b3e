#pragma once

#include <stdexcept>
#include <string>

namespace spikereg {

// Every failure raised by the library derives from Error so callers can
// catch one type; the subclasses map onto the CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Raised when a standardization scale is zero or negative.
class DegenerateScaleError : public Error {
public:
    using Error::Error;
};

// NaN/Inf detected in a forward pass, loss, or gradient.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed or missing input files, inconsistent datasets.
class DataError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace spikereg
