#pragma once

#include <stdexcept>
#include <string>

namespace mgpf {

// Bad input: schema violations, invalid parameters, unmet preconditions.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical breakdown: factorization failure, instability, degenerate fits.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mgpf
