#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace usrlsh {

using PointId = std::uint64_t;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A dimension is zero or two operands disagree on length.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("invalid dimension: " + what) {}
};

/// Bad argument value (non-finite input, k = 0, out-of-range sign, ...).
class InvalidArgumentError : public Error {
public:
    explicit InvalidArgumentError(const std::string& what) : Error("invalid argument: " + what) {}
};

/// Inconsistent parameter combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("configuration error: " + what) {}
};

/// Mean norm of the dataset is zero, so alpha is undefined.
class DegenerateDatasetError : public Error {
public:
    explicit DegenerateDatasetError(const std::string& what) : Error("degenerate dataset: " + what) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error("not found: " + what) {}
};

class DuplicateIdError : public Error {
public:
    explicit DuplicateIdError(const std::string& what) : Error("duplicate id: " + what) {}
};

class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& what) : Error("unsupported operation: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

/// On-disk data does not follow the expected layout (magic, version, sizes).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

/// File ends early or carries trailing garbage.
class CorruptionError : public FormatError {
public:
    explicit CorruptionError(const std::string& what) : FormatError("corrupt data: " + what) {}
};

inline void require_finite(std::span<const float> x, const char* what) {
    for (float v : x) {
        if (!std::isfinite(v)) throw InvalidArgumentError(std::string(what) + " contains a non-finite value");
    }
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                             std::to_string(got));
    }
}

}  // namespace usrlsh
