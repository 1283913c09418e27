#pragma once

#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "fracdiff/forward.hpp"

namespace fracdiff {

struct SeriesTerm {
    double exponent = 0.0;
    double coef = 0.0;
};

// u(x0, t) ~ sum_i coef_i t^{exponent_i}; exponents strictly increasing, the
// constant term (if any) stored as the exponent-0 entry.
struct ExpansionSeries {
    std::vector<SeriesTerm> terms;
    double remainder_order = std::numeric_limits<double>::infinity();
    double anchor_value = 0.0;

    void validate() const;
    [[nodiscard]] double evaluate(double t) const;
    // terms with exponent <= max_exponent; the remainder becomes the first
    // dropped exponent
    [[nodiscard]] ExpansionSeries truncated(double max_exponent) const;
};

// coef * p^{p_exponent}
struct PTerm {
    double p_exponent = 0.0;
    double coef = 0.0;
};

inline constexpr std::size_t kDefaultTermLimit = 20000;
// exponents closer than this are merged
inline constexpr double kExponentMergeTol = 1e-12;

// Structural term of the expansion before the mode sums are known: the
// t-exponent, the power k of L and the factor multiplying
// (L^k h)(x0) t^exponent / Gamma(exponent + 1). Homogeneous: z^{-k};
// source: p^{-mu-1} z^{-k-1}.
struct SkeletonTerm {
    double exponent = 0.0;
    int k = 0;
    double factor = 0.0;
};

// Unmerged terms with exponent <= cap, in generation order.
std::vector<SkeletonTerm> expansion_skeleton(std::span<const double> orders, std::span<const double> coeffs,
                                             bool source, double mu, double cap,
                                             std::size_t term_limit = kDefaultTermLimit);

// Formal large-p expansion of z/(p (lambda + z)) with z = sum_j q_j p^{alpha_j},
// keeping terms whose t-exponent (-1 - p_exponent) is <= order_cap.
std::vector<PTerm> large_p_expand(const MultiTermModel& model, double lambda, double order_cap,
                                  std::size_t term_limit = kDefaultTermLimit);

// Same for the source transfer 1/(lambda + z) multiplied by p^{-mu-1}.
std::vector<PTerm> large_p_expand_source(const MultiTermModel& model, double lambda, double mu, double order_cap,
                                         std::size_t term_limit = kDefaultTermLimit);

// default cap 3 alpha_1 (one order beyond the O(t^{2 alpha_1}) remainder)
double default_order_cap(const MultiTermModel& model);

ExpansionSeries short_time_series(const MultiTermModel& model, const FieldCoefficients& initial, double x0,
                                  double order_cap, std::size_t term_limit = kDefaultTermLimit);

// rho(t) = scale t^mu exactly
ExpansionSeries short_time_series_source(const MultiTermModel& model, const FieldCoefficients& source_spatial,
                                         double mu, double scale, double x0, double order_cap,
                                         std::size_t term_limit = kDefaultTermLimit);

// Least-squares slope of log|trace - series| against log t over the window.
// Returns +infinity when the residual is at rounding level (series exact).
double empirical_order(const ObservationTrace& trace, const ExpansionSeries& series, std::pair<double, double> window);

}  // namespace fracdiff
