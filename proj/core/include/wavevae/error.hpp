#pragma once

#include <stdexcept>
#include <string>

namespace wvae {

// Base for every error raised by the library. Callers that only need to
// report failures catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible or invalid tensor extents.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input outside an operation's mathematical domain (log of non-positive, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// An operation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (bad magic, truncated payload, bad header).
class FormatError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration or command-line input.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Misuse of stateful objects, e.g. calling backward on a consumed tape.
class StateError : public Error {
public:
    using Error::Error;
};

}  // namespace wvae
