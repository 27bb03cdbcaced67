#pragma once

#include <stdexcept>
#include <string>

namespace v2b {

// Bad user input: malformed config, inconsistent episode data, out-of-range
// parameters.  The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A schedule violates the physical constraints (charger bounds, SoC box,
// building import limit).  Exit code 3.
struct FeasibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf escaped a numeric routine (training divergence, solver failure).
// Exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace v2b
