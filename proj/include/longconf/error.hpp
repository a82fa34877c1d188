#pragma once

#include <stdexcept>
#include <string>

namespace longconf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad argument or malformed input data.
struct InvalidInput : Error {
    using Error::Error;
};

/// Numerical fit failed: separation, rank deficiency, non-convergence.
struct FitError : Error {
    using Error::Error;
};

/// A sensitivity-table cell was requested that has no probability mass.
struct UnavailableCell : Error {
    using Error::Error;
};

}  // namespace longconf
