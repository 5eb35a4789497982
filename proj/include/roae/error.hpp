#pragma once

#include <stdexcept>
#include <string>

namespace roae {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity reached a kernel or a weight update.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A file was readable but its contents do not match the expected layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A checkpoint was written by an incompatible format version.
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Invalid argument supplied by a caller (bad flag, empty input set, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace roae
