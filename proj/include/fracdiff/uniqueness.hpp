#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fracdiff/forward.hpp"
#include "fracdiff/spectral.hpp"

namespace fracdiff {

// Condition ids: term_count, order, coefficient_ratio (index j, 1-based),
// kappa_not_in_sigma (index 0), matched_value, matched_l_value,
// unmatched_first, unmatched_second (mode index n).
struct Violation {
    std::size_t index = 0;
    std::string condition;
    double magnitude = 0.0;  // relative to the field scale (or absolute for orders)
};

struct CoincidenceVerdict {
    bool holds = false;
    double kappa = 1.0;
    KappaMatching matching;
    std::vector<Violation> violations;
};

inline constexpr double kProjectionTolAnalytic = 1e-8;
inline constexpr double kProjectionTolDiscretized = 1e-5;

double default_projection_tolerance(const SpectralOperator& op);

// Exact-coincidence conditions for u (initial a, model_u) and v (initial b,
// model_v) at x0, in the simple-eigenvalue form P_n h(x0) = h_n phi_n(x0).
// tol <= 0 picks the operator default.
CoincidenceVerdict check_coincidence_initial(const FieldCoefficients& a, const FieldCoefficients& b, double x0,
                                             const MultiTermModel& model_u, const MultiTermModel& model_v,
                                             double tol = 0.0);

// Source version: kappa = f(x0)/g(x0), matched condition P_n f = kappa P_theta(n) g.
CoincidenceVerdict check_coincidence_source(const FieldCoefficients& f, const FieldCoefficients& g, double x0,
                                            const MultiTermModel& model_u, const MultiTermModel& model_v,
                                            double tol = 0.0);

// a_n = b_theta(n) phi_theta(n)(x0) / phi_n(x0) on M_kappa, zero elsewhere.
// Paired with coefficients q = kappa r this reproduces the trace of b.
FieldCoefficients construct_twin_initial(const FieldCoefficients& b, double kappa, double x0);

// f_n = kappa g_theta(n) phi_theta(n)(x0) / phi_n(x0) on M_kappa.
FieldCoefficients construct_twin_source(const FieldCoefficients& g, double kappa, double x0);

struct RecoveryResult {
    FieldCoefficients field;
    double residual = 0.0;   // relative rms of the fit (absolute when the trace is zero)
    double condition = 0.0;  // of the column-normalized basis
    std::size_t rank = 0;    // singular values kept
};

inline constexpr double kRecoverySvdCutoff = 1e-10;
inline constexpr double kRecoveryMaxCondition = 1e10;

// Least squares for w_n = a_n phi_n(x0), n <= n_modes, from the trace of a
// homogeneous problem with known model.
RecoveryResult recover_initial(const ObservationTrace& trace, const MultiTermModel& model, double x0,
                               std::size_t n_modes);

}  // namespace fracdiff
