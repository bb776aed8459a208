#pragma once

#include <stdexcept>
#include <string>

namespace sparsecnn {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Non-positive or otherwise unusable dimensions.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Coordinates outside the spatial grid.
class BoundsError : public Error {
public:
    using Error::Error;
};

/// Mismatched tensor/layer shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Scalar argument outside its legal range (probabilities, scales, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration; message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; message carries the line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Malformed binary file (bad magic, truncation, size mismatch).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Checkpoint incompatible with the requested network.
class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace sparsecnn
