#include "catch_amalgamated.hpp"

#include "fracdiff/asymptotics.hpp"
#include "fracdiff/error.hpp"
#include "fracdiff/mittag_leffler.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

using namespace fracdiff;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

OperatorPtr laplacian(std::size_t modes = 200) {
    return std::make_shared<const SpectralOperator>(dirichlet_laplacian(kPi, modes));
}

MultiTermModel model(std::vector<double> orders, std::vector<double> coeffs, OperatorPtr op) {
    return MultiTermModel{std::move(orders), std::move(coeffs), std::move(op)};
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

const PTerm* find_p(const std::vector<PTerm>& terms, double p_exponent) {
    for (const auto& t : terms)
        if (std::abs(t.p_exponent - p_exponent) < 1e-9) return &t;
    return nullptr;
}

const SeriesTerm* find_t(const ExpansionSeries& s, double exponent) {
    for (const auto& t : s.terms)
        if (std::abs(t.exponent - exponent) < 1e-9) return &t;
    return nullptr;
}

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("large_p_expand single term is geometric", "[asymptotics]") {
    const auto m = model({0.4}, {1.5}, laplacian(8));
    const double lambda = 2.0;
    const auto terms = large_p_expand(m, lambda, 1.2);
    REQUIRE(terms.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(terms[k].p_exponent == Approx(-1.0 - 0.4 * k).margin(1e-14));
        CHECK(terms[k].coef == Approx(std::pow(-lambda / 1.5, static_cast<double>(k))).epsilon(1e-14));
    }
}

TEST_CASE("large_p_expand two terms", "[asymptotics]") {
    const auto m = model({0.8, 0.4}, {1.0, 0.5}, laplacian(8));
    const double lambda = 3.0;
    const auto terms = large_p_expand(m, lambda, 1.6);
    const auto* t12 = find_p(terms, -1.0 - 1.2);
    REQUIRE(t12 != nullptr);
    CHECK(t12->coef == Approx(lambda * 0.5 / 1.0).epsilon(1e-14));
    const auto* t08 = find_p(terms, -1.8);
    REQUIRE(t08 != nullptr);
    CHECK(t08->coef == Approx(-lambda).epsilon(1e-14));
    // t^{1.6}: -lambda r^2 from z^{-1} and lambda^2 from z^{-2} merge
    const auto* t16 = find_p(terms, -2.6);
    REQUIRE(t16 != nullptr);
    CHECK(t16->coef == Approx(-lambda * 0.25 + lambda * lambda).epsilon(1e-14));
    for (std::size_t i = 1; i < terms.size(); ++i) CHECK(terms[i].p_exponent < terms[i - 1].p_exponent);
}

TEST_CASE("large_p_expand with zero eigenvalue keeps only 1/p", "[asymptotics]") {
    const auto m = model({0.8, 0.4}, {1.0, 0.5}, laplacian(8));
    const auto terms = large_p_expand(m, 0.0, 2.4);
    REQUIRE(terms.size() == 1);
    CHECK(terms[0].p_exponent == -1.0);
    CHECK(terms[0].coef == 1.0);
}

TEST_CASE("large_p_expand matches the transfer at large p", "[asymptotics]") {
    const auto m = model({0.9, 0.6, 0.3}, {1.0, 1.0, 1.0}, laplacian(8));
    const double lambda = 1.7;
    const auto terms = large_p_expand(m, lambda, 6.0);
    for (double p : {1e4, 1e6}) {
        const double z = symbol_z(m, p);
        const double exact = z / (p * (lambda + z));
        double sum = 0.0;
        for (const auto& t : terms) sum += t.coef * std::pow(p, t.p_exponent);
        // first neglected t-exponent is above 6.0
        CHECK(std::abs(sum - exact) <= 10.0 * std::pow(p, -7.0) + 1e-15 * std::abs(exact));
    }
}

TEST_CASE("large_p_expand errors", "[asymptotics]") {
    const auto m = model({0.9, 0.89, 0.88}, {1.0, 1.0, 1.0}, laplacian(8));
    CHECK(code_of([&] { (void)large_p_expand(m, 1.0, 40.0, 100); }) == Errc::term_limit);
    CHECK(code_of([&] { (void)large_p_expand(m, 1.0, 0.0); }) == Errc::invalid_argument);
    CHECK(code_of([&] { (void)large_p_expand(m, NAN, 1.0); }) == Errc::non_finite);
    CHECK(code_of([&] { (void)large_p_expand_source(m, 1.0, -1.5, 1.0); }) == Errc::invalid_argument);
}

TEST_CASE("short_time_series single term example", "[asymptotics]") {
    const auto op = laplacian();
    const auto m = model({0.5}, {1.0}, op);
    const SineTerm sx{1.0, 1.0};
    const auto a = sine_field(std::span(&sx, 1), op);
    const auto s = short_time_series(m, a, 1.0, default_order_cap(m));
    const double s1 = std::sin(1.0);
    REQUIRE(s.terms.size() == 4);
    CHECK(s.terms[0].exponent == 0.0);
    CHECK(s.terms[0].coef == Approx(s1).epsilon(1e-14));
    CHECK(s.anchor_value == Approx(s1).epsilon(1e-14));
    CHECK(s.terms[1].exponent == Approx(0.5));
    CHECK(s.terms[1].coef == Approx(-s1 / std::tgamma(1.5)).epsilon(1e-13));
    CHECK(s.terms[2].exponent == Approx(1.0));
    CHECK(s.terms[2].coef == Approx(s1 / std::tgamma(2.0)).epsilon(1e-13));
    CHECK(s.terms[3].coef == Approx(-s1 / std::tgamma(2.5)).epsilon(1e-13));
    CHECK(s.remainder_order == Approx(2.0));
    s.validate();
}

TEST_CASE("short_time_series of zero data", "[asymptotics]") {
    const auto op = laplacian();
    const auto m = model({0.8, 0.4}, {1.0, 0.5}, op);
    const auto s = short_time_series(m, zero_field(op), 0.7, 1.6);
    for (const auto& t : s.terms) CHECK(t.coef == 0.0);
    CHECK(s.anchor_value == 0.0);
    CHECK(s.evaluate(0.01) == 0.0);
    CHECK(s.remainder_order > 1.6);
    const auto src = short_time_series_source(m, zero_field(op), 0.0, 1.0, 0.7, 1.6);
    CHECK(src.terms.empty());
}

TEST_CASE("short_time_series leading coefficient identity", "[asymptotics]") {
    const auto op = laplacian();
    const std::vector<SineTerm> terms{{1.0, 1.0}, {0.5, 3.0}, {-0.2, 4.0}};
    const auto a = sine_field(terms, op);
    const double x0 = 1.1;
    const double la = apply_l_at_point(a, x0);
    for (const auto& m : {model({0.5}, {1.0}, op), model({0.8, 0.4}, {2.0, 0.5}, op),
                          model({0.9, 0.6, 0.3}, {0.7, 1.0, 1.0}, op)}) {
        const auto s = short_time_series(m, a, x0, default_order_cap(m));
        const auto* lead = find_t(s, m.orders[0]);
        REQUIRE(lead != nullptr);
        const double expect = -la / (m.coeffs[0] * std::tgamma(m.orders[0] + 1.0));
        CHECK(std::abs(lead->coef - expect) <= 1e-8 * std::abs(expect));
        CHECK(s.anchor_value == Approx(a.value_at(x0)).epsilon(1e-13));
    }
}

TEST_CASE("t^{2a1-a2} coefficient against the solver residual", "[asymptotics]") {
    const auto op = laplacian();
    const auto m = model({0.8, 0.4}, {1.0, 0.5}, op);
    const SineTerm sx{1.0, 1.0};
    const auto a = sine_field(std::span(&sx, 1), op);
    const double x0 = kPi / 2.0;
    const auto s = short_time_series(m, a, x0, 1.6);
    const auto* c12 = find_t(s, 1.2);
    REQUIRE(c12 != nullptr);
    const double la = apply_l_at_point(a, x0);
    CHECK(c12->coef == Approx(la * 0.5 / std::tgamma(2.2)).epsilon(1e-13));

    const auto times = logspace(1e-4, 1e-2, 40);
    const auto trace = solve_trace(m, a, zero_field(op), SourceTemporalProfile::none(), x0, times);
    const auto lower = s.truncated(0.8);
    // residual after removing the t^0 and t^{0.8} terms, fitted with the
    // next exponents 1.2, 1.6, 2.0
    Eigen::MatrixXd design(times.size(), 3);
    Eigen::VectorXd rhs(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        const double w = std::pow(t, -1.2);
        rhs(i) = (trace.values[i] - lower.evaluate(t)) * w;
        design(i, 0) = 1.0;
        design(i, 1) = std::pow(t, 0.4);
        design(i, 2) = std::pow(t, 0.8);
    }
    const Eigen::VectorXd fit = design.colPivHouseholderQr().solve(rhs);
    CHECK(std::abs(fit(0) - c12->coef) <= 0.02 * std::abs(c12->coef));
}

TEST_CASE("short_time_series_source leading term and mu shift", "[asymptotics]") {
    const auto op = laplacian();
    const auto m = model({0.5}, {1.0}, op);
    const SineTerm sx{1.0, 1.0};
    const auto f = sine_field(std::span(&sx, 1), op);
    const double x0 = kPi / 2.0;
    const auto s0 = short_time_series_source(m, f, 0.0, 1.0, x0, 2.0);
    REQUIRE(!s0.terms.empty());
    CHECK(s0.terms[0].exponent == Approx(0.5));
    CHECK(s0.terms[0].coef == Approx(1.0 / std::tgamma(1.5)).epsilon(1e-13));
    CHECK(s0.anchor_value == 0.0);

    // closed form t^a E_{a,a+1}(-t^a) for the single mode
    for (double t : {1e-4, 1e-3}) {
        const double exact = std::pow(t, 0.5) * ml_eval({0.5, 1.5}, -std::pow(t, 0.5));
        CHECK(std::abs(s0.evaluate(t) - exact) <= 10.0 * std::pow(t, s0.remainder_order));
    }

    const auto s1 = short_time_series_source(m, f, 1.0, 1.0, x0, 3.0);
    REQUIRE(s1.terms.size() == s0.terms.size());
    for (std::size_t i = 0; i < s0.terms.size(); ++i)
        CHECK(s1.terms[i].exponent == Approx(s0.terms[i].exponent + 1.0).margin(1e-14));
    CHECK(s1.remainder_order == Approx(s0.remainder_order + 1.0));

    // scale and Gamma(mu + 1) prefactor
    const auto s2 = short_time_series_source(m, f, 1.5, 3.0, x0, 2.5);
    CHECK(s2.terms[0].exponent == Approx(2.0));
    CHECK(s2.terms[0].coef == Approx(3.0 * std::tgamma(2.5) / std::tgamma(3.0)).epsilon(1e-13));
}

TEST_CASE("monomial inversion matches the contour", "[asymptotics]") {
    const auto op = laplacian(8);
    for (const auto& m : {model({0.5}, {1.0}, op), model({0.8, 0.4}, {1.0, 0.5}, op),
                          model({0.9, 0.6, 0.3}, {1.0, 1.0, 1.0}, op)}) {
        for (const auto& term : large_p_expand(m, 2.0, default_order_cap(m))) {
            const double s = -1.0 - term.p_exponent;
            const double exact = term.coef * std::pow(0.1, s) / std::tgamma(s + 1.0);
            const double numeric =
                invert_laplace([&](cplx p) { return term.coef * std::pow(p, term.p_exponent); }, 0.1);
            CHECK(std::abs(numeric - exact) <= 1e-8 * std::abs(exact));
        }
    }
}

TEST_CASE("series ordering and truncation", "[asymptotics]") {
    const auto op = laplacian();
    // 2 a1 - a2 == a1 + (a1 - a2) collides with 2 a2 + ... combos; merging
    // must leave strictly increasing exponents
    const auto m = model({0.6, 0.3}, {1.0, 2.0}, op);
    const SineTerm sx{1.0, 1.0};
    const auto a = sine_field(std::span(&sx, 1), op);
    const auto s = short_time_series(m, a, 1.0, 3.0);
    for (std::size_t i = 1; i < s.terms.size(); ++i) CHECK(s.terms[i].exponent > s.terms[i - 1].exponent);
    CHECK(s.remainder_order > s.terms.back().exponent);
    const auto cut = s.truncated(1.0);
    CHECK(cut.terms.back().exponent <= 1.0);
    CHECK(cut.remainder_order == Approx(1.2));
    cut.validate();

    ExpansionSeries bad;
    bad.terms = {{0.5, 1.0}, {0.5, 2.0}};
    CHECK(code_of([&] { bad.validate(); }) == Errc::invalid_argument);
}

TEST_CASE("empirical_order examples", "[asymptotics]") {
    const auto op = laplacian();
    const SineTerm sx{1.0, 1.0};
    const auto a = sine_field(std::span(&sx, 1), op);

    SECTION("single term truncated after t^alpha") {
        const auto m = model({0.5}, {1.0}, op);
        const auto times = logspace(1e-4, 1e-2, 60);
        const auto trace = solve_trace(m, a, zero_field(op), SourceTemporalProfile::none(), 1.0, times);
        const auto s = short_time_series(m, a, 1.0, 0.5);
        CHECK(empirical_order(trace, s, {1e-4, 1e-2}) == Approx(1.0).margin(0.1));
    }
    SECTION("exact series gives the sentinel") {
        const auto m = model({0.5}, {1.0}, op);
        const auto s = short_time_series(m, a, 1.0, 1.5);
        ObservationTrace trace;
        trace.x0 = 1.0;
        trace.times = logspace(1e-4, 1e-2, 20);
        for (double t : trace.times) trace.values.push_back(s.evaluate(t));
        CHECK(std::isinf(empirical_order(trace, s, {1e-4, 1e-2})));
    }
    SECTION("two terms truncated after t^{a1}") {
        const auto m = model({0.8, 0.4}, {1.0, 0.5}, op);
        const double x0 = kPi / 2.0;
        const auto times = logspace(1e-6, 1e-3, 60);
        const auto trace = solve_trace(m, a, zero_field(op), SourceTemporalProfile::none(), x0, times);
        const auto s = short_time_series(m, a, x0, 0.8);
        CHECK(s.remainder_order == Approx(1.2));
        CHECK(empirical_order(trace, s, {1e-6, 1e-3}) == Approx(std::min(2 * 0.8 - 0.4, 1.6)).margin(0.1));
    }
    SECTION("errors") {
        const auto m = model({0.5}, {1.0}, op);
        const auto s = short_time_series(m, a, 1.0, 0.5);
        ObservationTrace trace;
        trace.times = {1e-3, 2e-3};
        trace.values = {1.0, 1.0};
        CHECK(code_of([&] { (void)empirical_order(trace, s, {1e-4, 1e-2}); }) == Errc::invalid_argument);
        CHECK(code_of([&] { (void)empirical_order(trace, s, {1e-2, 1e-4}); }) == Errc::invalid_argument);
    }
}

TEST_CASE("expansion against the solver on the benchmark models", "[asymptotics]") {
    const auto op = laplacian();
    const SineTerm sx{1.0, 1.0};
    const auto a = sine_field(std::span(&sx, 1), op);
    const double x0 = 1.0;
    const auto times = logspace(1e-5, 1e-2, 60);
    for (const auto& m : {model({0.5}, {1.0}, op), model({0.8, 0.4}, {1.0, 0.5}, op),
                          model({0.9, 0.6, 0.3}, {1.0, 1.0, 1.0}, op)}) {
        const auto trace = solve_trace(m, a, zero_field(op), SourceTemporalProfile::none(), x0, times);
        const auto s = short_time_series(m, a, x0, m.orders[0]);
        const double r = s.remainder_order;
        // K fitted as the largest ratio over the window
        double k_fit = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i)
            k_fit = std::max(k_fit, std::abs(trace.values[i] - s.evaluate(times[i])) / std::pow(times[i], r));
        CHECK(k_fit < 10.0);
        CHECK(empirical_order(trace, s, {1e-5, 1e-2}) == Approx(r).margin(0.1));
    }
}
