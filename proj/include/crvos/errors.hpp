#pragma once

#include <stdexcept>
#include <string>

namespace crvos {

// Tensor/mask dimensions do not satisfy an operation's shape contract.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (variant/specifier mismatch, bad resolution, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset-level problems: missing annotations, bad labels, unreadable layout.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed checkpoint or weight file.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged or could not proceed.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace crvos
