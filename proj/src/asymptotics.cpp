#include "fracdiff/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fracdiff/error.hpp"
#include "fracdiff/mittag_leffler.hpp"

namespace fracdiff {
namespace {

std::vector<SkeletonTerm> skeleton(const MultiTermModel& model, int z_offset, double base, double cap,
                                   std::size_t term_limit) {
    model.validate();
    return expansion_skeleton(model.orders, model.coeffs, z_offset == 1, base, cap, term_limit);
}

// Sums coefficients of exponents closer than kExponentMergeTol.
std::vector<SeriesTerm> merge_terms(std::vector<SeriesTerm> terms) {
    std::stable_sort(terms.begin(), terms.end(),
                     [](const SeriesTerm& a, const SeriesTerm& b) { return a.exponent < b.exponent; });
    std::vector<SeriesTerm> out;
    for (const auto& t : terms) {
        if (!out.empty() && std::abs(t.exponent - out.back().exponent) <= kExponentMergeTol) {
            out.back().coef += t.coef;
            continue;
        }
        out.push_back(t);
    }
    return out;
}

std::vector<PTerm> to_p_terms(const std::vector<SkeletonTerm>& sk, double lambda) {
    std::vector<SeriesTerm> merged;
    for (const auto& term : sk) {
        const double coef = term.factor * std::pow(lambda, term.k);
        merged.push_back({term.exponent, coef});
    }
    std::vector<PTerm> out;
    for (const auto& t : merge_terms(merged)) {
        if (t.coef == 0.0) continue;
        out.push_back({-1.0 - t.exponent, t.coef});
    }
    return out;
}

// First structural exponent above cap (the remainder order).
double next_exponent(const MultiTermModel& model, int z_offset, double base, double cap, std::size_t term_limit) {
    const auto wider = skeleton(model, z_offset, base, cap + model.orders[0], term_limit);
    double next = std::numeric_limits<double>::infinity();
    for (const auto& t : wider)
        if (t.exponent > cap + kExponentMergeTol) next = std::min(next, t.exponent);
    return next;
}

ExpansionSeries build_series(const MultiTermModel& model, const FieldCoefficients& field, double x0, int z_offset,
                             double base, double prefactor, double cap, std::size_t term_limit) {
    require(field.op != nullptr, Errc::invalid_argument, "field has no operator");
    const auto sk = skeleton(model, z_offset, base, cap, term_limit);
    ExpansionSeries series;
    series.remainder_order = next_exponent(model, z_offset, base, cap, term_limit);
    if (field.is_zero()) return series;

    int k_max = 0;
    for (const auto& t : sk) k_max = std::max(k_max, t.k);
    // (L^k h)(x0), with the mode-sum convergence check
    std::vector<double> lk(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k) lk[static_cast<std::size_t>(k)] = apply_l_power_at_point(field, x0, k);

    std::vector<SeriesTerm> raw;
    for (const auto& t : sk)
        raw.push_back({t.exponent, prefactor * t.factor * lk[static_cast<std::size_t>(t.k)] * rgamma(t.exponent + 1.0)});
    for (const auto& t : merge_terms(raw)) {
        if (t.exponent == 0.0) {
            series.anchor_value = t.coef;
            if (t.coef == 0.0) continue;
        }
        series.terms.push_back(t);
    }
    series.validate();
    return series;
}

}  // namespace

// z^{-K} = q1^{-K} p^{-K a1} (1 + sum_j r_j p^{-d_j})^{-K}, r_j = q_j/q1,
// d_j = a1 - a_j, expanded by the generalized binomial and multinomial series.
std::vector<SkeletonTerm> expansion_skeleton(std::span<const double> orders, std::span<const double> coeffs,
                                             bool source, double mu, double cap, std::size_t term_limit) {
    require(!orders.empty() && orders.size() == coeffs.size(), Errc::invalid_argument,
            "orders and coefficients must be non-empty and of equal length");
    for (std::size_t j = 0; j < orders.size(); ++j) {
        require(orders[j] > 0.0 && orders[j] < 1.0 && (j == 0 || orders[j] < orders[j - 1]), Errc::invalid_argument,
                "orders must be strictly decreasing in (0, 1)");
        require(coeffs[j] > 0.0 && std::isfinite(coeffs[j]), Errc::invalid_argument, "coefficients must be positive");
    }
    require(std::isfinite(cap) && cap > 0.0, Errc::invalid_argument, "order cap must be positive");
    require(!source || (std::isfinite(mu) && mu > -1.0), Errc::invalid_argument, "mu must exceed -1");
    const int z_offset = source ? 1 : 0;
    const double base = source ? mu : 0.0;
    const double a1 = orders[0];
    const double q1 = coeffs[0];
    const std::size_t m = orders.size();
    std::vector<double> d(m), r(m);
    for (std::size_t j = 1; j < m; ++j) {
        d[j] = a1 - orders[j];
        r[j] = coeffs[j] / q1;
    }

    std::vector<SkeletonTerm> out;
    const double slack = kExponentMergeTol;
    for (int k = 0;; ++k) {
        const int big_k = k + z_offset;
        const double s0 = base + big_k * a1;
        if (s0 > cap + slack) break;
        const double sign_k = (k % 2 == 0) ? 1.0 : -1.0;
        const double head = sign_k * std::pow(q1, -big_k);
        if (big_k == 0) {
            out.push_back({s0, k, head});
            continue;
        }
        // enumerate n_2..n_m with s0 + sum n_j d_j <= cap
        auto recurse = [&](auto&& self, std::size_t j, double s, int total, double prod) -> void {
            if (j == m) {
                // (-1)^N (K + N - 1)! / ((K - 1)! prod n_j!)
                double c = (total % 2 == 0) ? 1.0 : -1.0;
                for (int i = 0; i < total; ++i) c *= static_cast<double>(big_k + i);
                out.push_back({s, k, head * c * prod});
                require(out.size() <= term_limit, Errc::term_limit,
                        "expansion exceeds " + std::to_string(term_limit) + " terms; lower the order cap");
                return;
            }
            double term_prod = prod;
            double fact = 1.0;
            for (int nj = 0;; ++nj) {
                const double sj = s + nj * d[j];
                if (sj > cap + slack) break;
                if (nj > 0) {
                    fact *= nj;
                    term_prod *= r[j];
                }
                self(self, j + 1, sj, total + nj, term_prod / fact);
            }
        };
        recurse(recurse, 1, s0, 0, 1.0);
    }
    return out;
}

void ExpansionSeries::validate() const {
    for (std::size_t i = 0; i < terms.size(); ++i) {
        require(std::isfinite(terms[i].exponent) && std::isfinite(terms[i].coef), Errc::non_finite,
                "series term is not finite");
        require(terms[i].exponent >= 0.0, Errc::invalid_argument, "series exponents must be non-negative");
        if (i > 0)
            require(terms[i].exponent > terms[i - 1].exponent, Errc::invalid_argument,
                    "series exponents must be strictly increasing");
    }
    require(!(remainder_order != remainder_order), Errc::non_finite, "remainder order is NaN");
    if (!terms.empty())
        require(remainder_order > terms.back().exponent, Errc::invalid_argument,
                "remainder order must exceed the retained exponents");
}

double ExpansionSeries::evaluate(double t) const {
    double sum = 0.0;
    for (const auto& term : terms) sum += term.exponent == 0.0 ? term.coef : term.coef * std::pow(t, term.exponent);
    return sum;
}

ExpansionSeries ExpansionSeries::truncated(double max_exponent) const {
    ExpansionSeries out;
    out.anchor_value = anchor_value;
    out.remainder_order = remainder_order;
    for (const auto& term : terms) {
        if (term.exponent <= max_exponent) {
            out.terms.push_back(term);
        } else {
            out.remainder_order = term.exponent;
            break;
        }
    }
    return out;
}

std::vector<PTerm> large_p_expand(const MultiTermModel& model, double lambda, double order_cap,
                                  std::size_t term_limit) {
    require(std::isfinite(lambda), Errc::non_finite, "eigenvalue is not finite");
    return to_p_terms(skeleton(model, 0, 0.0, order_cap, term_limit), lambda);
}

std::vector<PTerm> large_p_expand_source(const MultiTermModel& model, double lambda, double mu, double order_cap,
                                         std::size_t term_limit) {
    require(std::isfinite(lambda), Errc::non_finite, "eigenvalue is not finite");
    require(std::isfinite(mu) && mu > -1.0, Errc::invalid_argument, "mu must exceed -1");
    return to_p_terms(skeleton(model, 1, mu, order_cap, term_limit), lambda);
}

double default_order_cap(const MultiTermModel& model) {
    model.validate();
    return 3.0 * model.orders[0];
}

ExpansionSeries short_time_series(const MultiTermModel& model, const FieldCoefficients& initial, double x0,
                                  double order_cap, std::size_t term_limit) {
    return build_series(model, initial, x0, 0, 0.0, 1.0, order_cap, term_limit);
}

ExpansionSeries short_time_series_source(const MultiTermModel& model, const FieldCoefficients& source_spatial,
                                         double mu, double scale, double x0, double order_cap,
                                         std::size_t term_limit) {
    require(std::isfinite(mu) && mu > -1.0, Errc::invalid_argument, "mu must exceed -1");
    require(std::isfinite(scale), Errc::non_finite, "source scale is not finite");
    return build_series(model, source_spatial, x0, 1, mu, scale * gamma_fn(mu + 1.0), order_cap, term_limit);
}

double empirical_order(const ObservationTrace& trace, const ExpansionSeries& series,
                       std::pair<double, double> window) {
    trace.validate();
    const auto [lo, hi] = window;
    require(lo > 0.0 && hi > lo, Errc::invalid_argument, "window must satisfy 0 < t_lo < t_hi");
    std::vector<double> lt, lr;
    std::vector<double> ts, rs;
    double scale = 0.0, rmax = 0.0;
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
        const double t = trace.times[i];
        if (t < lo || t > hi) continue;
        const double r = trace.values[i] - series.evaluate(t);
        ts.push_back(t);
        rs.push_back(r);
        scale = std::max(scale, std::abs(trace.values[i]));
        rmax = std::max(rmax, std::abs(r));
    }
    require(ts.size() >= 3, Errc::invalid_argument, "fewer than 3 trace samples inside the window");
    const double inf = std::numeric_limits<double>::infinity();
    if (rmax <= 1e-11 * scale) return inf;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (std::abs(rs[i]) <= 1e-13 * scale) continue;
        lt.push_back(std::log(ts[i]));
        lr.push_back(std::log(std::abs(rs[i])));
    }
    if (lt.size() < 3) return inf;
    const double n = static_cast<double>(lt.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
        mx += lt[i];
        my += lr[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
        sxx += (lt[i] - mx) * (lt[i] - mx);
        sxy += (lt[i] - mx) * (lr[i] - my);
    }
    require(sxx > 0.0, Errc::invalid_argument, "window samples share one time");
    return sxy / sxx;
}

}  // namespace fracdiff
