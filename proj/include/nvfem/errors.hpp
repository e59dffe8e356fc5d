#pragma once

#include <stdexcept>
#include <string>

namespace nvfem {

struct invalid_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invariant_violation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dimension_mismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a direct factorization hits a zero pivot. For Newton callers
/// this means the linearized coefficient lost ellipticity.
struct singular_matrix : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct initialization_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nvfem
