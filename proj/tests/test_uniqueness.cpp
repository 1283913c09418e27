#include "catch_amalgamated.hpp"

#include "fracdiff/error.hpp"
#include "fracdiff/uniqueness.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

using namespace fracdiff;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

OperatorPtr laplacian(std::size_t modes = 200) {
    return std::make_shared<const SpectralOperator>(dirichlet_laplacian(kPi, modes));
}

FieldCoefficients sines(const OperatorPtr& op, std::vector<SineTerm> terms) { return sine_field(terms, op); }

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
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

bool has(const CoincidenceVerdict& v, const std::string& cond, std::size_t index) {
    return std::any_of(v.violations.begin(), v.violations.end(),
                       [&](const Violation& x) { return x.condition == cond && x.index == index; });
}

double max_trace_gap(const MultiTermModel& mu, const FieldCoefficients& a, const MultiTermModel& mv,
                     const FieldCoefficients& b, double x0, bool source = false) {
    const auto times = linspace(0.0, 1.0, 50);
    const auto zero = zero_field(a.op);
    const auto prof = source ? SourceTemporalProfile::power_law(0.0) : SourceTemporalProfile::none();
    const auto u = source ? solve_trace(mu, zero, a, prof, x0, times) : solve_trace(mu, a, zero, prof, x0, times);
    const auto v = source ? solve_trace(mv, zero, b, prof, x0, times) : solve_trace(mv, b, zero, prof, x0, times);
    double gap = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) gap = std::max(gap, std::abs(u.values[i] - v.values[i]));
    return gap;
}

double l2_distance(const FieldCoefficients& a, const FieldCoefficients& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) s += (a.coeffs[i] - b.coeffs[i]) * (a.coeffs[i] - b.coeffs[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("check_coincidence_initial on the twin example", "[uniqueness]") {
    const auto op = laplacian();
    const auto a = sines(op, {{1.0 / (2.0 * std::cos(1.0)), 2.0}});
    const auto b = sines(op, {{1.0, 1.0}});
    const MultiTermModel mu{{0.5}, {4.0}, op};
    const MultiTermModel mv{{0.5}, {1.0}, op};
    const auto v = check_coincidence_initial(a, b, 1.0, mu, mv);
    CHECK(v.holds);
    CHECK(v.kappa == Approx(4.0).epsilon(1e-12));
    CHECK(v.matching.in_sigma);
    CHECK(v.matching.theta(2) == 1u);
    CHECK(v.violations.empty());

    SECTION("wrong coefficient ratio") {
        const MultiTermModel bad{{0.5}, {3.0}, op};
        const auto w = check_coincidence_initial(a, b, 1.0, bad, mv);
        CHECK_FALSE(w.holds);
        CHECK(has(w, "coefficient_ratio", 1));
    }
    SECTION("different orders") {
        const MultiTermModel bad{{0.6}, {4.0}, op};
        const auto w = check_coincidence_initial(a, b, 1.0, bad, mv);
        CHECK_FALSE(w.holds);
        CHECK(has(w, "order", 1));
    }
    SECTION("different term counts") {
        const MultiTermModel bad{{0.5, 0.2}, {4.0, 1.0}, op};
        CHECK(has(check_coincidence_initial(a, b, 1.0, bad, mv), "term_count", 0));
    }
}

TEST_CASE("check_coincidence_initial identity and violations", "[uniqueness]") {
    const auto op = laplacian();
    const MultiTermModel m{{0.7, 0.3}, {1.0, 2.0}, op};
    const auto b = sines(op, {{1.0, 1.0}, {0.2, 3.0}});
    const auto same = check_coincidence_initial(b, b, 1.0, m, m);
    CHECK(same.holds);
    CHECK(same.kappa == Approx(1.0));
    CHECK(same.matching.m_set.size() == op->mode_count());

    // c sin 3x with (La)(1) = 4 (Lb)(1): lambda_3 = 9 has no partner 9/4
    const auto b1 = sines(op, {{1.0, 1.0}});
    const double c = 4.0 * std::sin(1.0) / (9.0 * std::sin(3.0));
    const auto a3 = sines(op, {{c, 3.0}});
    const MultiTermModel mu{{0.5}, {4.0}, op};
    const MultiTermModel mv{{0.5}, {1.0}, op};
    const auto v = check_coincidence_initial(a3, b1, 1.0, mu, mv);
    CHECK(v.kappa == Approx(4.0).epsilon(1e-12));
    CHECK_FALSE(v.holds);
    CHECK(has(v, "unmatched_first", 3));
    CHECK(has(v, "matched_value", 2));

    // kappa = f(x0)-style check is the initial version with La / Lb
    const auto dead = sines(op, {{1.0, 2.0}});
    CHECK(code_of([&] { (void)check_coincidence_initial(dead, b1, kPi / 2, mu, mv); }) == Errc::vanishing_l_value);
    const auto other = std::make_shared<const SpectralOperator>(dirichlet_laplacian(2.0, 200));
    const MultiTermModel mo{{0.5}, {1.0}, other};
    CHECK(code_of([&] { (void)check_coincidence_initial(b1, b1, 1.0, mo, mv); }) == Errc::grid_mismatch);
}

TEST_CASE("check_coincidence_source", "[uniqueness]") {
    const auto op = laplacian();
    const MultiTermModel m{{0.6}, {1.0}, op};
    const auto g = sines(op, {{1.0, 1.0}, {0.5, 2.0}});
    CHECK(check_coincidence_source(g, g, 1.0, m, m).holds);

    // 1.3 is not a ratio of squares
    auto f = g;
    for (auto& c : f.coeffs) c *= 1.3;
    const MultiTermModel mu{{0.6}, {1.3}, op};
    const auto v = check_coincidence_source(f, g, 1.0, mu, m);
    CHECK(v.kappa == Approx(1.3));
    CHECK_FALSE(v.holds);
    CHECK_FALSE(v.matching.in_sigma);
    CHECK(has(v, "kappa_not_in_sigma", 0));

    const auto g1 = sines(op, {{1.0, 1.0}});
    const auto twin = construct_twin_source(g1, 4.0, 1.0);
    const MultiTermModel m4{{0.6}, {4.0}, op};
    CHECK(check_coincidence_source(twin, g1, 1.0, m4, m).holds);

    const auto dead = sines(op, {{1.0, 2.0}});
    CHECK(code_of([&] { (void)check_coincidence_source(dead, g1, kPi / 2, m, m); }) == Errc::vanishing_source_value);
}

TEST_CASE("construct_twin_initial", "[uniqueness]") {
    const auto op = laplacian();
    const auto b = sines(op, {{1.0, 1.0}});

    SECTION("twin example") {
        const auto a = construct_twin_initial(b, 4.0, 1.0);
        const auto expect = sines(op, {{1.0 / (2.0 * std::cos(1.0)), 2.0}});
        for (std::size_t n = 1; n <= op->mode_count(); ++n)
            CHECK(a.coeffs[n - 1] == Approx(expect.coeffs[n - 1]).margin(1e-14));
    }
    SECTION("kappa = 1 returns the field") {
        const auto b2 = sines(op, {{1.0, 1.0}, {0.3, 2.0}, {-0.1, 5.0}});
        const auto a = construct_twin_initial(b2, 1.0, 1.0);
        for (std::size_t n = 1; n <= op->mode_count(); ++n)
            CHECK(a.coeffs[n - 1] == Approx(b2.coeffs[n - 1]).margin(1e-14));
    }
    SECTION("two-mode field, verified by the forward solver") {
        const auto b2 = sines(op, {{1.0, 1.0}, {0.3, 2.0}});
        const auto a = construct_twin_initial(b2, 4.0, 1.0);
        for (std::size_t n = 1; n <= op->mode_count(); ++n)
            if (n != 2 && n != 4) CHECK(a.coeffs[n - 1] == 0.0);
        CHECK(a.coeffs[1] != 0.0);
        CHECK(a.coeffs[3] != 0.0);
        const MultiTermModel mu{{0.5}, {4.0}, op};
        const MultiTermModel mv{{0.5}, {1.0}, op};
        CHECK(max_trace_gap(mu, a, mv, b2, 1.0) <= 1e-7);
        CHECK(l2_distance(a, b2) > 0.1);
        CHECK(check_coincidence_initial(a, b2, 1.0, mu, mv).holds);
    }
    SECTION("errors") {
        CHECK(code_of([&] { (void)construct_twin_initial(b, 1.3, 1.0); }) == Errc::kappa_not_in_ratio_set);
        // phi_2(pi/2) = 0
        CHECK(code_of([&] { (void)construct_twin_initial(b, 4.0, kPi / 2); }) == Errc::rank_condition);
        // lambda_1 = 1 is not 9/4 of any eigenvalue
        CHECK(code_of([&] { (void)construct_twin_initial(b, 9.0 / 4.0, 1.0); }) == Errc::inadmissible_field);
        CHECK(code_of([&] { (void)construct_twin_initial(b, -4.0, 1.0); }) == Errc::invalid_argument);
    }
}

TEST_CASE("construct_twin_source", "[uniqueness]") {
    const auto op = laplacian();
    const auto g = sines(op, {{1.0, 1.0}});
    const auto same = construct_twin_source(g, 1.0, 1.0);
    for (std::size_t n = 1; n <= op->mode_count(); ++n) CHECK(same.coeffs[n - 1] == Approx(g.coeffs[n - 1]));

    const auto f = construct_twin_source(g, 4.0, 1.0);
    for (std::size_t n = 1; n <= op->mode_count(); ++n)
        if (n != 2) CHECK(f.coeffs[n - 1] == 0.0);
    CHECK(f.value_at(1.0) / g.value_at(1.0) == Approx(4.0).epsilon(1e-12));

    const MultiTermModel mu{{0.6, 0.3}, {4.0, 2.0}, op};
    const MultiTermModel mv{{0.6, 0.3}, {1.0, 0.5}, op};
    CHECK(max_trace_gap(mu, f, mv, g, 1.0, true) <= 1e-7);

    CHECK(code_of([&] { (void)construct_twin_source(g, 1.3, 1.0); }) == Errc::kappa_not_in_ratio_set);
}

TEST_CASE("checker and constructor agree on random admissible fields", "[uniqueness]") {
    const auto op = laplacian();
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double x0 = 1.0;
    for (double kappa : {1.0, 4.0, 9.0 / 4.0}) {
        const auto match = kappa_match(*op, kappa, default_kappa_tolerance(*op));
        for (int trial = 0; trial < 5; ++trial) {
            auto b = zero_field(op);
            for (std::size_t n = 1; n <= 12; ++n)
                if (match.in_m_prime_set(n)) b.coeffs[n - 1] = unit(rng) / std::pow(static_cast<double>(n), 4);
            // keep (Lb)(x0) away from zero
            const std::size_t lead = match.m_prime_set.front();
            b.coeffs[lead - 1] = 1.0;
            const auto a = construct_twin_initial(b, kappa, x0);
            const MultiTermModel mu{{0.5}, {kappa}, op};
            const MultiTermModel mv{{0.5}, {1.0}, op};
            const auto v = check_coincidence_initial(a, b, x0, mu, mv);
            CHECK(v.holds);
            CHECK(v.kappa == Approx(kappa).epsilon(1e-9));
        }
    }
}

TEST_CASE("recover_initial", "[uniqueness]") {
    const auto op = laplacian();
    const MultiTermModel m{{0.5}, {1.0}, op};
    const auto a = sines(op, {{1.0, 1.0}, {0.5, 3.0}});
    const auto times = logspace(1e-4, 2.0, 300);
    const auto zero = zero_field(op);
    const auto tr = solve_trace(m, a, zero, SourceTemporalProfile::none(), 1.0, times);

    const auto r = recover_initial(tr, m, 1.0, 5);
    for (std::size_t n = 1; n <= 5; ++n) CHECK(std::abs(r.field.coeffs[n - 1] - a.coeffs[n - 1]) <= 1e-3);
    CHECK(r.residual < 1e-8);
    CHECK(r.rank == 5);
    CHECK(r.condition < kRecoveryMaxCondition);

    ObservationTrace flat = tr;
    std::fill(flat.values.begin(), flat.values.end(), 0.0);
    const auto z = recover_initial(flat, m, 1.0, 5);
    for (double c : z.field.coeffs) CHECK(c == 0.0);

    CHECK(code_of([&] { (void)recover_initial(tr, m, kPi / 2, 2); }) == Errc::rank_condition);
    CHECK(code_of([&] { (void)recover_initial(tr, m, 1.0, 60); }) == Errc::ill_conditioned);
    CHECK(code_of([&] { (void)recover_initial(tr, m, 1.0, 0); }) == Errc::invalid_argument);

    SECTION("two-term model") {
        const MultiTermModel m2{{0.8, 0.4}, {1.0, 0.5}, op};
        const auto tr2 = solve_trace(m2, a, zero, SourceTemporalProfile::none(), 1.0, times);
        const auto r2 = recover_initial(tr2, m2, 1.0, 4);
        for (std::size_t n = 1; n <= 4; ++n) CHECK(std::abs(r2.field.coeffs[n - 1] - a.coeffs[n - 1]) <= 1e-3);
    }
}
