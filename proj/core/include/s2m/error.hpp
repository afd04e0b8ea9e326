#pragma once

#include <stdexcept>
#include <string>

namespace s2m {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, named by op and operand shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by an op, or a numeric contract violated (e.g. routing gate outside [0,1]).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or argument value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Unreadable or inconsistent on-disk data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Misuse of the gradient tape (non-scalar root, detached graph, reused tape).
class AutodiffError : public Error {
public:
    using Error::Error;
};

} // namespace s2m
