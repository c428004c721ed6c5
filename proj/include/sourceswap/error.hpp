#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sourceswap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    using Error::Error;
};

/// Raised when an inverse transform leaves a large imaginary residue, which
/// means something upstream broke the conjugate symmetry of a real signal.
class SymmetryBroken : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class FramingError : public ProtocolError {
public:
    FramingError(std::uint64_t offset, const std::string& what)
        : ProtocolError("framing error at byte " + std::to_string(offset) + ": " + what),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace sourceswap
