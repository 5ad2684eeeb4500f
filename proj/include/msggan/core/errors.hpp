#pragma once

#include <stdexcept>
#include <string>

namespace msggan {

// Error taxonomy. The CLI maps each class to a distinct exit code and a
// machine-readable JSON payload on stderr.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnvironmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace msggan
