#pragma once

#include <stdexcept>
#include <string>

namespace hybagg {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or unsatisfiable parameters (degrees, moduli, noise widths, budgets).
class ParamError : public Error {
public:
    using Error::Error;
};

/// Two ring elements from different (degree, modulus-chain) contexts were mixed.
class ContextMismatchError : public Error {
public:
    using Error::Error;
};

/// Encoding rejected an input (overflow guard, dimension mismatch).
class CodecError : public Error {
public:
    using Error::Error;
};

/// Pairwise-mask bookkeeping failure (missing pair, mixed rounds, bad point).
class MaskingError : public Error {
public:
    using Error::Error;
};

/// Protocol state-machine violation (incomplete cohort, duplicate id, wrong round).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Malformed wire bytes (magic, version, truncation, non-canonical residue).
class SerializationError : public Error {
public:
    using Error::Error;
};

/// A completed round failed the plaintext-sum verification.
class VerificationError : public Error {
public:
    using Error::Error;
};

}  // namespace hybagg
