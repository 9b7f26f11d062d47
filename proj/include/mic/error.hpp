#pragma once

#include <stdexcept>
#include <string>

namespace mic {

// Base class for everything this library throws on contract violations.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or shape disagreement between matrices/layers.
struct ShapeError : Error {
    using Error::Error;
};

// Zero-norm vector fed to a cosine, index build, etc.
struct DegenerateVectorError : Error {
    using Error::Error;
};

// Backward called with a stale or mismatched forward cache.
struct InvalidStateError : Error {
    using Error::Error;
};

// Non-finite gradients or loss during optimization.
struct DivergedError : Error {
    using Error::Error;
};

// Bad rows, unreadable files, malformed corpora.
struct IngestError : Error {
    using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
    using Error::Error;
};

// Invalid user-supplied configuration values.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace mic
