#pragma once

#include <string_view>

namespace mgpf {

// Planar site coordinates. Geographic data must be projected by the caller.
struct Location {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Location&, const Location&) = default;
};

// Covariates carried by every low-cost reading. Observation models refer to
// them by name: "rh", "temp", "weekend".
struct Covariates {
    double rh = 0.0;
    double temp = 0.0;
    double weekend = 0.0;
};

// Throws ValidationError for unknown names.
[[nodiscard]] double covariate_value(const Covariates& z, std::string_view name);
[[nodiscard]] bool is_known_covariate(std::string_view name) noexcept;

}  // namespace mgpf
