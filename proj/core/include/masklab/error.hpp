#ifndef MASKLAB_ERROR_HPP
#define MASKLAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace masklab {

// Base of all library errors. The CLI maps each subclass to a stable
// numeric exit code (see tools/).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Wrong argument values, shape mismatches, out-of-range indices.
class DomainError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finiteness is required (fail-fast NaN policy).
class NumericError : public Error {
public:
    using Error::Error;
};

// File I/O failures: missing paths, short reads, unwritable outputs.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed or version-incompatible on-disk data.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace masklab

#endif  // MASKLAB_ERROR_HPP
