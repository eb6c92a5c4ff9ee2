#pragma once

#include <stdexcept>
#include <string>

namespace gcps {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed or unsupported file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Input that makes an operation undefined (zero variance, empty ground truth, ...).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string dims(int w, int h) {
    return std::to_string(w) + "x" + std::to_string(h);
}

inline void require_same_size(int w0, int h0, int w1, int h1, const char* what) {
    if (w0 != w1 || h0 != h1) {
        throw DimensionMismatch(std::string(what) + ": " + dims(w0, h0) + " vs " + dims(w1, h1));
    }
}

}  // namespace detail
}  // namespace gcps
