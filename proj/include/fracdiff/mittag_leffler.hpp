#pragma once

namespace fracdiff {

// Gamma function from a 15-term Lanczos approximation (g = 607/128, Godfrey's
// coefficient set). Relative accuracy better than 1e-13 on (0, 50); negative
// non-integer arguments go through the reflection formula.
double gamma_fn(double x);

// 1/Gamma(x), entire: exactly zero at the non-positive integers.
double rgamma(double x);

struct MlParams {
    double alpha = 1.0;  // (0, 1]
    double beta = 1.0;   // > 0

    void validate() const;
};

// Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for real z.
//
// Primary support is z <= 0, where three regimes are used:
//   |z| < 1        truncated Taylor series
//   1 <= |z| <= 10 integral representation along the real half-line
//   |z| > 10       asymptotic series, falling back to the integral when the
//                  optimally truncated series cannot reach full precision
//                  (alpha close to 1)
// Positive z is evaluated by the (non-alternating) Taylor series.
double ml_eval(const MlParams& params, double z);

// Bound constant C with |E_{alpha,beta}(z)| <= C / (1 + |z|) for z <= 0 and
// beta in {1, 2*alpha + 1}. Calibrated by dense sampling of
// (1 + |z|) |E_{alpha,beta}(z)| over alpha in [0.02, 1], z in [-1e4, 0]
// (maximum observed 1.14601 at alpha = 0.394, beta = 2*alpha + 1, z = -2.26),
// rounded up.
inline constexpr double kMlBoundConstant = 1.15;

// Returns kMlBoundConstant / (1 + |z|). Same preconditions as ml_eval with z <= 0.
double ml_bound_check(const MlParams& params, double z);

}  // namespace fracdiff
