#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fracdiff {

// Machine-readable failure categories. Every module reports through these so
// the CLI can map them onto exit codes and error JSON.
enum class Errc {
    // configuration / argument errors
    invalid_argument,
    grid_mismatch,
    config_error,
    // numerical failures
    non_finite,
    eigensolver_failure,
    zero_eigenvalue,
    divergent_series,
    contour_failure,
    truncation_error,
    linear_solve_failure,
    timestep_too_coarse,
    term_limit,
    residual_underflow,
    ill_conditioned,
    quadrature_tail,
    fit_failure,
    ambiguous_exponent,
    residual_floor_not_reached,
    method_disagreement,
    ambiguous_match,
    // hypothesis violations (assumptions the theory needs)
    signal_below_floor,
    vanishing_l_value,
    vanishing_source_value,
    kappa_not_in_ratio_set,
    rank_condition,
    inadmissible_field,
    unsupported_operator,
};

std::string_view errc_name(Errc code) noexcept;

enum class ErrorClass { config, numerical, hypothesis };

ErrorClass errc_class(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

inline void require(bool condition, Errc code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace fracdiff
