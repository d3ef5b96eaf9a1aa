#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vlg {

inline constexpr const char* kVersion = "0.1.0";

// Label value for points excluded from losses and metrics.
inline constexpr std::int32_t kIgnoreLabel = 255;

// Thrown on malformed files, bad magic, truncation.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on invalid configuration or schema violations.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a pipeline stage needs an artifact a previous stage has not produced.
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on numeric failure: divergence, non-finite losses, failed gradient checks.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vlg
