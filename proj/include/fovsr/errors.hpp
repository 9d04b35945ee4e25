#pragma once

#include <stdexcept>
#include <string>

namespace fovsr {

// Bad runtime configuration (missing backbone, cue row too wide, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operation invoked before its required state exists (params not loaded, ...).
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File / dataset ingestion failures. Message names the offending path or row.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training aborted (non-finite loss, checkpoint mismatch, ...).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fovsr
