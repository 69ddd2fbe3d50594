#pragma once

#include <stdexcept>
#include <string>

namespace fieldkf {

/// Raised when a configuration file is malformed or contains unknown keys.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when one of the library's model assumptions is violated:
///   A1  measurement kernel bounded and absolutely integrable
///   A2  noise covariance kernel bounded and absolutely integrable
///   A3  noise spectrum invertible almost everywhere
///   A4  whitened measurement transform integrable
///   A6  (A, Q) stabilizable
///   A7  (A, G) detectable
struct AssumptionError : std::runtime_error {
    AssumptionError(int number, const std::string& detail)
        : std::runtime_error("assumption " + std::to_string(number) + " violated: " + detail),
          assumption(number) {}
    int assumption;
};

/// Raised when circulant embedding produces a negative spectrum and no
/// dense fallback is possible.
struct EmbeddingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fieldkf
