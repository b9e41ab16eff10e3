#pragma once

#include <stdexcept>
#include <string>

namespace medsynth {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on a numeric argument or configuration value failed.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Tensor or image shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A non-finite value appeared during training or sampling.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long where)
        : Error(what), where_(where) {}

    // Epoch (training) or step index (sampling) where the value appeared.
    long where() const noexcept { return where_; }

private:
    long where_;
};

// Malformed or unreadable input data.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace medsynth
