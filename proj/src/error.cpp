#include "fracdiff/error.hpp"

namespace fracdiff {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::grid_mismatch: return "grid_mismatch";
        case Errc::config_error: return "config_error";
        case Errc::non_finite: return "non_finite";
        case Errc::eigensolver_failure: return "eigensolver_failure";
        case Errc::zero_eigenvalue: return "zero_eigenvalue";
        case Errc::divergent_series: return "divergent_series";
        case Errc::contour_failure: return "contour_failure";
        case Errc::truncation_error: return "truncation_error";
        case Errc::linear_solve_failure: return "linear_solve_failure";
        case Errc::timestep_too_coarse: return "timestep_too_coarse";
        case Errc::term_limit: return "term_limit";
        case Errc::residual_underflow: return "residual_underflow";
        case Errc::ill_conditioned: return "ill_conditioned";
        case Errc::quadrature_tail: return "quadrature_tail";
        case Errc::fit_failure: return "fit_failure";
        case Errc::ambiguous_exponent: return "ambiguous_exponent";
        case Errc::residual_floor_not_reached: return "residual_floor_not_reached";
        case Errc::method_disagreement: return "method_disagreement";
        case Errc::ambiguous_match: return "ambiguous_match";
        case Errc::signal_below_floor: return "signal_below_floor";
        case Errc::vanishing_l_value: return "vanishing_l_value";
        case Errc::vanishing_source_value: return "vanishing_source_value";
        case Errc::kappa_not_in_ratio_set: return "kappa_not_in_ratio_set";
        case Errc::rank_condition: return "rank_condition";
        case Errc::inadmissible_field: return "inadmissible_field";
        case Errc::unsupported_operator: return "unsupported_operator";
    }
    return "unknown";
}

ErrorClass errc_class(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument:
        case Errc::grid_mismatch:
        case Errc::config_error:
            return ErrorClass::config;
        case Errc::signal_below_floor:
        case Errc::vanishing_l_value:
        case Errc::vanishing_source_value:
        case Errc::kappa_not_in_ratio_set:
        case Errc::rank_condition:
        case Errc::inadmissible_field:
        case Errc::unsupported_operator:
            return ErrorClass::hypothesis;
        default:
            return ErrorClass::numerical;
    }
}

void fail(Errc code, const std::string& message) {
    throw Error(code, std::string(errc_name(code)) + ": " + message);
}

}  // namespace fracdiff
