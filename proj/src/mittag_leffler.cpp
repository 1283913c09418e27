#include "fracdiff/mittag_leffler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fracdiff/error.hpp"

namespace fracdiff {
namespace {

constexpr double kPi = std::numbers::pi;

// Godfrey's coefficients for g = 607/128.
constexpr double kLanczosG = 607.0 / 128.0;
constexpr std::array<double, 15> kLanczos = {
    0.99999999999999709182,     57.156235665862923517,      -59.597960355475491248,
    14.136097974741747174,      -0.49191381609762019978,    0.33994649984811888699e-4,
    0.46523628927048575665e-4,  -0.98374475304879564677e-4, 0.15808870322491248884e-3,
    -0.21026444172410488319e-3, 0.21743961811521264320e-3,  -0.16431810653676389022e-3,
    0.84418223983852743293e-4,  -0.26190838401581408670e-4, 0.36899182659531622704e-5,
};

// sin(pi x) with the argument reduced first so integers give exact zeros.
double sin_pi(double x) {
    const double n = std::round(x);
    const double r = x - n;
    const double s = std::sin(kPi * r);
    return (static_cast<long long>(n) % 2 == 0) ? s : -s;
}

double lanczos_gamma(double x) {
    // x >= 0.5
    const double xm = x - 1.0;
    double series = kLanczos[0];
    for (std::size_t k = 1; k < kLanczos.size(); ++k) series += kLanczos[k] / (xm + static_cast<double>(k));
    const double t = xm + kLanczosG + 0.5;
    const double half_power = std::pow(t, 0.5 * (xm + 0.5));
    return std::sqrt(2.0 * kPi) * half_power * (half_power * std::exp(-t)) * series;
}

bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::floor(x); }

double taylor_series(double alpha, double beta, double z) {
    double sum = 0.0;
    double zpow = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 20000; ++k) {
        const double term = zpow * rgamma(alpha * k + beta);
        sum += term;
        const double mag = std::abs(term);
        if (k > 4 && mag <= 1e-17 * std::abs(sum) && mag < prev) break;
        prev = mag;
        zpow *= z;
        if (zpow == 0.0) break;
    }
    return sum;
}

// Optimally truncated asymptotic series for z -> -infinity, 0 < alpha < 1.
// Convergence is judged on the envelope |z|^{-k} Gamma(1 - beta + alpha k) / pi
// of the terms, since 1/Gamma(beta - alpha k) can vanish by accident.
// Sets ok = false when the envelope never drops below working precision.
double asymptotic_series(double alpha, double beta, double z, bool& ok) {
    double sum = 0.0;
    const double log_abs_z = std::log(std::abs(z));
    double prev = std::numeric_limits<double>::infinity();
    ok = false;
    for (int k = 1; k < 400; ++k) {
        const double y = beta - alpha * k;
        const double envelope = y < 0.5 ? std::exp(std::lgamma(1.0 - y) - k * log_abs_z) / kPi
                                        : std::exp(-k * log_abs_z) * std::abs(rgamma(y));
        if (y < 0.5 && envelope > prev) return sum;
        sum += -std::pow(z, -k) * rgamma(y);
        if (y < 0.5) prev = envelope;
        if (y < 0.5 && envelope <= 1e-16 * std::abs(sum)) {
            ok = true;
            return sum;
        }
    }
    return sum;
}

// Real half-line integral representation for z = -x < 0, 0 < alpha < 1 and
// 0 < beta < 1 + alpha.
double halfline_integral(double alpha, double beta, double x) {
    const double z = -x;
    const double s1 = std::sin(kPi * (1.0 - beta));
    const double s2 = std::sin(kPi * (1.0 - beta + alpha));
    const double c = std::cos(kPi * alpha);
    const double expo = (1.0 - beta) / alpha;
    auto kernel = [&](double chi) {
        if (chi <= 0.0) return 0.0;
        const double decay = std::exp(-std::pow(chi, 1.0 / alpha));
        if (decay == 0.0) return 0.0;
        const double num = chi * s1 - z * s2;
        const double den = chi * chi - 2.0 * chi * z * c + z * z;
        return std::pow(chi, expo) * decay * num / den;
    };
    // exp(-chi^{1/alpha}) < 1e-30 beyond chi_max
    const double chi_max = std::pow(70.0, alpha);
    // the denominator is smallest at chi = -x cos(pi alpha) when alpha > 1/2
    const double peak = c < 0.0 ? -x * c : 0.0;

    using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
    // small alpha needs a tighter tolerance; it is cheap there
    const unsigned depth = alpha < 0.3 ? 15 : 12;
    const double tol = alpha < 0.3 ? 1e-14 : 1e-12;
    auto piece = [&](auto&& f, double lo, double hi) {
        if (hi <= lo) return 0.0;
        double err = 0.0;
        return Rule::integrate(f, lo, hi, depth, tol, &err);
    };
    // chi = w^q removes the chi^{expo} singularity at the origin
    const double q = 1.0 / (1.0 + expo);
    auto near_origin = [&](double w) {
        if (w <= 0.0) return 0.0;
        const double chi = std::pow(w, q);
        return kernel(chi) * q * std::pow(w, q - 1.0);
    };

    // Breakpoints: where chi^{1/alpha} passes 1/4, 1, 4, 16 (the decay of the
    // exponential factor), plus geometric refinement around the peak of
    // half-width x sin(pi alpha).
    std::vector<double> breaks;
    for (double level : {0.25, 1.0, 4.0, 16.0}) breaks.push_back(std::pow(level, alpha));
    if (peak > 0.0 && peak < chi_max) {
        const double width = x * std::sin(kPi * alpha);
        breaks.push_back(peak);
        for (double k = 1.0; k <= 256.0; k *= 4.0) {
            breaks.push_back(peak - k * width);
            breaks.push_back(peak + k * width);
        }
    }
    std::erase_if(breaks, [&](double b) { return !(b > 0.0 && b < chi_max); });
    breaks.push_back(chi_max);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    double total = piece(near_origin, 0.0, std::pow(breaks.front(), 1.0 / q));
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) total += piece(kernel, breaks[i], breaks[i + 1]);
    return total / (alpha * kPi);
}

double ml_alpha_lt_one(double alpha, double beta, double z) {
    const double x = -z;
    if (x > 10.0) {
        bool ok = false;
        const double value = asymptotic_series(alpha, beta, z, ok);
        if (ok) return value;
    }
    // reduce beta to (1 - alpha, 1]: E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z
    if (beta > 1.0) {
        const double lower = ml_alpha_lt_one(alpha, beta - alpha, z);
        return (lower - rgamma(beta - alpha)) / z;
    }
    return halfline_integral(alpha, beta, x);
}

double ml_alpha_one(double beta, double z) {
    if (beta == 1.0) return std::exp(z);
    if (beta == 2.0) return std::expm1(z) / z;
    if (beta < 1.0) return rgamma(beta) + z * ml_alpha_one(beta + 1.0, z);
    // E_{1,b}(z) = 1/Gamma(b-1) int_0^1 e^{zs} (1-s)^{b-2} ds for b > 1;
    // 1 - s = w^{1/(b-1)} removes the endpoint singularity
    const double q = 1.0 / (beta - 1.0);
    auto integrand = [&](double w) { return std::exp(z * (1.0 - std::pow(w, q))) * q; };
    double err = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, 1.0, 12, 1e-13, &err);
    return value * rgamma(beta - 1.0);
}

}  // namespace

double gamma_fn(double x) {
    require(std::isfinite(x), Errc::non_finite, "gamma argument is not finite");
    require(!is_nonpositive_integer(x), Errc::invalid_argument, "gamma pole at non-positive integer");
    if (x < 0.5) return kPi / (sin_pi(x) * lanczos_gamma(1.0 - x));
    return lanczos_gamma(x);
}

double rgamma(double x) {
    if (is_nonpositive_integer(x)) return 0.0;
    if (x < 0.5) return sin_pi(x) * lanczos_gamma(1.0 - x) / kPi;
    if (x > 171.0) return 0.0;
    return 1.0 / lanczos_gamma(x);
}

void MlParams::validate() const {
    require(std::isfinite(alpha) && std::isfinite(beta), Errc::non_finite,
            "Mittag-Leffler parameters must be finite");
    require(alpha > 0.0 && alpha <= 1.0, Errc::invalid_argument, "Mittag-Leffler alpha must lie in (0, 1]");
    require(beta > 0.0, Errc::invalid_argument, "Mittag-Leffler beta must be positive");
}

double ml_eval(const MlParams& params, double z) {
    params.validate();
    require(std::isfinite(z), Errc::non_finite, "Mittag-Leffler argument is not finite");
    if (z == 0.0) return rgamma(params.beta);
    if (z > 0.0 || std::abs(z) < 1.0) return taylor_series(params.alpha, params.beta, z);
    if (params.alpha == 1.0) return ml_alpha_one(params.beta, z);
    return ml_alpha_lt_one(params.alpha, params.beta, z);
}

double ml_bound_check(const MlParams& params, double z) {
    params.validate();
    require(std::isfinite(z), Errc::non_finite, "Mittag-Leffler argument is not finite");
    require(z <= 0.0, Errc::invalid_argument, "bound only holds on the negative real axis");
    return kMlBoundConstant / (1.0 + std::abs(z));
}

}  // namespace fracdiff
