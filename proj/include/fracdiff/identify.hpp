#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fracdiff/forward.hpp"

namespace fracdiff {

struct IdentificationConfig {
    std::size_t max_terms = 3;
    // (t_lo, tau)
    std::pair<double, double> fit_window{1e-6, 1e-2};
    // stop once the relative rms misfit of the structured fit falls below this
    double residual_floor = 1e-8;
    double nu_threshold = 1.0;
    // Laplace-domain evaluation points; empty means 40 log-spaced in [1e2, 1e4]
    std::vector<double> p_grid;
    // accepted change of alpha_1 when the window shrinks (leading-order fit)
    double order_tolerance = 5e-3;
    // new-order vs correction-slot separation
    double classify_tolerance = 2e-2;

    void validate() const;
    [[nodiscard]] std::vector<double> p_points() const;
};

struct FitMode {
    bool source = false;
    double mu = 0.0;

    static FitMode homogeneous() { return {}; }
    static FitMode source_mode(double mu) { return {true, mu}; }
};

struct StageDiagnostics {
    std::size_t terms = 0;
    std::vector<double> orders;
    std::vector<double> ratios;
    double misfit = 0.0;  // relative rms
    std::pair<double, double> window;
};

struct IdentificationResult {
    std::size_t m_hat = 0;
    std::vector<double> orders_hat;
    std::vector<double> coeff_ratios;  // q_j / q_1, first entry 1
    // coefficient of the leading power: -(La)(x0)/(q1 Gamma(a1+1)), or
    // scale Gamma(mu+1) f(x0)/(q1 Gamma(mu+a1+1)) for a source
    double leading_composite = 0.0;
    std::string method;
    std::vector<StageDiagnostics> diagnostics;

    void validate() const;
};

struct LeadingOrder {
    double alpha = 0.0;
    double coef = 0.0;
};

// Log-log least squares of |u - baseline| over the window, repeated on the
// lower quarter of the window (in log t); the second estimate is returned and
// must lie within cfg.order_tolerance of the first.
LeadingOrder estimate_leading_order(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg);

// Structured fit: exponents and coefficient patterns come from the expansion
// skeleton of a trial model, the mode sums (L^k h)(x0)/q1^k enter linearly.
// Terms are added one at a time from the leading power of the residual.
IdentificationResult peel_orders(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg,
                                 FitMode mode = FitMode::homogeneous());

// Same structure fitted to G(p) = p u_hat(p) - baseline, u_hat from the exact
// transform of the piecewise-linear trace. Cross-checked against peel_orders.
IdentificationResult laplace_domain_fit(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg);

enum class Verdict { consistent, divergent };

struct CoincidenceResult {
    Verdict verdict = Verdict::consistent;
    // fitted s in |u - v| ~ C t^s (+inf when below the floor)
    double exponent = 0.0;
    double max_difference = 0.0;
};

inline constexpr double kDefaultCoincidenceFloor = 1e-9;

// floor is relative to max |u| on the window
CoincidenceResult coincidence_test(const ObservationTrace& trace_u, const ObservationTrace& trace_v, double nu,
                                   std::pair<double, double> window, double floor = kDefaultCoincidenceFloor);

struct SampledEquivalence {
    CoincidenceResult sampled;
    CoincidenceResult full;
    bool agree = false;
};

// Applies the test to the sampling subsequence only, then to the full
// window, and reports whether both verdicts agree.
SampledEquivalence sampled_equivalence_check(const ObservationTrace& trace_u, const ObservationTrace& trace_v,
                                             const std::vector<double>& sample_times, double nu_tilde,
                                             std::pair<double, double> window,
                                             double floor = kDefaultCoincidenceFloor);

}  // namespace fracdiff
