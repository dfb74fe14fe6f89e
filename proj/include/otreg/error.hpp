#pragma once

#include <stdexcept>
#include <string>

namespace otreg {

// Mismatched dimensions between related inputs.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Values outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Rotation fails the SO(3) invariants.
struct InvalidTransformError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Feature row with (near-)zero norm; normalized distances are undefined.
struct DegenerateFeatureError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Transport instance with no mass to move.
struct InfeasibleInstanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientPairsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Rank-deficient (e.g. collinear) point configuration.
struct DegenerateGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Synthetic scene generation could not hit its target.
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace otreg
