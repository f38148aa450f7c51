#pragma once

#include <stdexcept>
#include <string>

namespace nilgeo {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input shapes or values violate a constructor contract.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// The pair (L1, L2) is linearly dependent and cannot be normalized.
class DependentPair : public Error {
public:
    explicit DependentPair(const std::string& msg) : Error(msg) {}
};

// The top two eigenvalue blocks are not separated from the rest of the
// spectrum; the caller is outside the double-not-triple stratum.
class GapTooSmall : public Error {
public:
    explicit GapTooSmall(const std::string& msg) : Error(msg) {}
};

// No eigenvalue collision found in the search region.
class NoResonance : public Error {
public:
    explicit NoResonance(const std::string& msg) : Error(msg) {}
};

// The located collision involves the third modulus as well.
class TripleDetected : public Error {
public:
    explicit TripleDetected(const std::string& msg) : Error(msg) {}
};

// Malformed input file; carries a line number for diagnostics.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_ = 0;
};

// A requested numerical accuracy target could not be met.
class ErrTargetUnmet : public Error {
public:
    explicit ErrTargetUnmet(const std::string& msg) : Error(msg) {}
};

// Bad command-line or run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace nilgeo
