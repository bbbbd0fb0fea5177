#ifndef WRML_ERRORS_HPP
#define WRML_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace wrml {

// Base class for all library errors. Subclasses distinguish configuration
// problems from numerical failures so callers can map them to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid inputs / configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class EmptyGrid : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class NonFiniteInput : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class InsufficientReplicates : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Numerical failures.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Circulant embedding has an eigenvalue surrogate below tolerance; sampling
// through the spectral square root is not possible.
class NonPositiveEmbedding : public NumericalError {
public:
    NonPositiveEmbedding(const std::string& msg, double min_surrogate)
        : NumericalError(msg), min_surrogate(min_surrogate) {}
    double min_surrogate;
};

class SingularSystem : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class LinearSolveFailure : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CFLViolation : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class RankDeficient : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class UnnormalizedWeights : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateEnsemble : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ZeroVariance : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateBasis : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace wrml

#endif
