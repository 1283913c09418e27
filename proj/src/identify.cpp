#include "fracdiff/identify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "fracdiff/asymptotics.hpp"
#include "fracdiff/error.hpp"
#include "fracdiff/mittag_leffler.hpp"

namespace fracdiff {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Samples {
    std::vector<double> t;
    std::vector<double> y;
};

Samples window_samples(const ObservationTrace& trace, double baseline, std::pair<double, double> window) {
    Samples s;
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
        const double t = trace.times[i];
        if (t < window.first || t > window.second || t <= 0.0) continue;
        s.t.push_back(t);
        s.y.push_back(trace.values[i] - baseline);
    }
    return s;
}

struct LogLog {
    double slope = 0.0;
    double log_amp = 0.0;
    double sign = 1.0;
};

// log|y| = log_amp + slope log x over points with nonzero y
LogLog loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0.0, sy = 0.0, n = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] == 0.0) continue;
        sx += std::log(x[i]);
        sy += std::log(std::abs(y[i]));
        pos += y[i] > 0.0 ? 1.0 : -1.0;
        n += 1.0;
    }
    require(n >= 3.0, Errc::fit_failure, "fewer than 3 usable samples for a log-log fit");
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] == 0.0) continue;
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(std::abs(y[i])) - my);
    }
    require(sxx > 0.0, Errc::fit_failure, "log-log fit needs distinct abscissae");
    LogLog out;
    out.slope = sxy / sxx;
    out.log_amp = my - out.slope * mx;
    out.sign = pos >= 0.0 ? 1.0 : -1.0;
    return out;
}

// the part of (x, y) whose log x lies in the lowest `fraction` of the range
std::pair<std::vector<double>, std::vector<double>> lower_part(const std::vector<double>& x,
                                                               const std::vector<double>& y, double fraction) {
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double cut = std::exp(std::log(*lo_it) + fraction * (std::log(*hi_it) - std::log(*lo_it)));
    std::pair<std::vector<double>, std::vector<double>> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > cut * (1.0 + 1e-12)) continue;
        out.first.push_back(x[i]);
        out.second.push_back(y[i]);
    }
    return out;
}

// Structured fit problem. x is t (time domain) or 1/p (Laplace domain), so
// every term is c x^s with s > 0 and small x is the asymptotic end.
struct Problem {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> w;
    FitMode mode;
    bool laplace = false;
    double span = 4.0;  // exponents kept up to leading + span

    [[nodiscard]] double base() const { return mode.source ? mode.mu : 0.0; }
    [[nodiscard]] int k_min() const { return mode.source ? 0 : 1; }
    // x^s / Gamma(s+1) in time, x^s for G(p)
    [[nodiscard]] double basis_scale(double s) const { return laplace ? 1.0 : rgamma(s + 1.0); }
};

// Multi-index (k, n_2..n_m) of one expansion term. The index set is fixed
// during a minimization so the objective stays smooth when exponents cross
// the cap.
struct Pattern {
    int k = 0;
    std::vector<int> n;
    double count = 1.0;  // (-1)^N (K+N-1)!/((K-1)! prod n_j!)
};

constexpr std::size_t kFitTermLimit = 1500;

std::vector<Pattern> make_patterns(const std::vector<double>& orders, bool source, double span) {
    const std::size_t m = orders.size();
    const double a1 = orders[0];
    std::vector<Pattern> out;
    std::vector<int> n(m, 0);
    for (int big_k = 1; (big_k - 1) * a1 <= span + 1e-12; ++big_k) {
        auto recurse = [&](auto&& self, std::size_t j, double rel, int total, double inv_fact) -> void {
            if (j == m) {
                double c = (total % 2 == 0) ? 1.0 : -1.0;
                for (int i = 0; i < total; ++i) c *= static_cast<double>(big_k + i);
                out.push_back({source ? big_k - 1 : big_k, n, c * inv_fact});
                require(out.size() <= kFitTermLimit, Errc::term_limit, "trial model needs too many expansion terms");
                return;
            }
            double fact = 1.0;
            for (int nj = 0; rel + nj * (a1 - orders[j]) <= span + 1e-12; ++nj) {
                if (nj > 0) fact *= nj;
                n[j] = nj;
                self(self, j + 1, rel + nj * (a1 - orders[j]), total + nj, inv_fact / fact);
            }
            n[j] = 0;
        };
        recurse(recurse, 1, (big_k - 1) * a1, 0, 1.0);
    }
    return out;
}

double pattern_exponent(const Pattern& pt, const std::vector<double>& orders, bool source, double base) {
    const int big_k = source ? pt.k + 1 : pt.k;
    double s = base + big_k * orders[0];
    for (std::size_t j = 1; j < orders.size(); ++j) s += pt.n[j] * (orders[0] - orders[j]);
    return s;
}

double pattern_factor(const Pattern& pt, const std::vector<double>& ratios) {
    double f = (pt.k % 2 == 0) ? pt.count : -pt.count;
    for (std::size_t j = 1; j < ratios.size(); ++j)
        if (pt.n[j] > 0) f *= std::pow(ratios[j], pt.n[j]);
    return f;
}

struct FitState {
    std::vector<double> orders;
    std::vector<double> ratios;  // q_j/q_1, first entry 1
    std::vector<double> g;       // linear mode sums, index k - k_min
    std::vector<Pattern> patterns;
    double misfit = kInf;
};

bool admissible(const std::vector<double>& orders, const std::vector<double>& ratios) {
    for (std::size_t j = 0; j < orders.size(); ++j) {
        if (!(orders[j] > 1e-3 && orders[j] < 1.0 - 1e-6)) return false;
        if (j > 0 && !(orders[j] < orders[j - 1] - 1e-4)) return false;
        if (!(ratios[j] > 0.0) || !std::isfinite(ratios[j])) return false;
    }
    return true;
}

// Linear least squares for g given the nonlinear parameters; fills residuals
// (weighted) and returns the state.
FitState solve_linear(const Problem& pb, const std::vector<double>& orders, const std::vector<double>& ratios,
                      const std::vector<Pattern>& patterns, Eigen::VectorXd* residual = nullptr) {
    FitState st;
    st.orders = orders;
    st.ratios = ratios;
    st.patterns = patterns;
    std::vector<double> expo(patterns.size()), fac(patterns.size());
    int k_max = pb.k_min();
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        expo[i] = pattern_exponent(patterns[i], orders, pb.mode.source, pb.base());
        fac[i] = pattern_factor(patterns[i], ratios) * pb.basis_scale(expo[i]);
        k_max = std::max(k_max, patterns[i].k);
    }
    const int cols = k_max - pb.k_min() + 1;
    const auto n = static_cast<Eigen::Index>(pb.x.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, cols);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double lx = std::log(pb.x[static_cast<std::size_t>(i)]);
        for (std::size_t t = 0; t < patterns.size(); ++t)
            a(i, patterns[t].k - pb.k_min()) += fac[t] * std::exp(expo[t] * lx);
        a.row(i) *= pb.w[static_cast<std::size_t>(i)];
        b(i) = pb.y[static_cast<std::size_t>(i)] * pb.w[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd scale = a.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (scale(c) == 0.0) scale(c) = 1.0;
        a.col(c) /= scale(c);
    }
    const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd res = b - a * sol;
    st.g.resize(static_cast<std::size_t>(cols));
    for (Eigen::Index c = 0; c < cols; ++c) st.g[static_cast<std::size_t>(c)] = sol(c) / scale(c);
    st.misfit = std::sqrt(res.squaredNorm() / static_cast<double>(n));
    if (residual) *residual = res;
    return st;
}

// parameters: orders, then log ratios 2..m
struct VarProFunctor {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const Problem* pb;
    std::size_t m;
    const std::vector<Pattern>* patterns;

    [[nodiscard]] int inputs() const { return static_cast<int>(2 * m - 1); }
    [[nodiscard]] int values() const { return static_cast<int>(pb->x.size()); }

    void unpack(const Eigen::VectorXd& p, std::vector<double>& orders, std::vector<double>& ratios) const {
        orders.assign(m, 0.0);
        ratios.assign(m, 1.0);
        for (std::size_t j = 0; j < m; ++j) orders[j] = p(static_cast<Eigen::Index>(j));
        for (std::size_t j = 1; j < m; ++j) ratios[j] = std::exp(p(static_cast<Eigen::Index>(m + j - 1)));
    }

    int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& fvec) const {
        std::vector<double> orders, ratios;
        unpack(p, orders, ratios);
        if (!admissible(orders, ratios)) {
            fvec = Eigen::VectorXd::Constant(values(), 1e3);
            return 0;
        }
        try {
            (void)solve_linear(*pb, orders, ratios, *patterns, &fvec);
        } catch (const Error&) {
            fvec = Eigen::VectorXd::Constant(values(), 1e3);
        }
        if (!fvec.allFinite()) fvec = Eigen::VectorXd::Constant(values(), 1e3);
        return 0;
    }
};

// Levenberg-Marquardt over the nonlinear parameters. Restarting resets the
// damping, which helps along the narrow valleys of weakly determined orders.
FitState structured_fit(const Problem& pb, std::vector<double> orders, std::vector<double> ratios,
                        int fev_per_param = 400, int restarts = 8) {
    const std::size_t m = orders.size();
    require(admissible(orders, ratios), Errc::fit_failure, "trial parameters outside the admissible set");
    auto patterns = make_patterns(orders, pb.mode.source, pb.span);
    double last = solve_linear(pb, orders, ratios, patterns).misfit;
    for (int pass = 0; pass < restarts; ++pass) {
        VarProFunctor fn{&pb, m, &patterns};
        Eigen::VectorXd p(fn.inputs());
        for (std::size_t j = 0; j < m; ++j) p(static_cast<Eigen::Index>(j)) = orders[j];
        for (std::size_t j = 1; j < m; ++j) p(static_cast<Eigen::Index>(m + j - 1)) = std::log(ratios[j]);
        // central differences with h ~ 1e-5 |x|; the default step leaves the
        // Jacobian too noisy to follow the weakly determined directions
        Eigen::NumericalDiff<VarProFunctor, Eigen::Central> nd(fn, 1e-10);
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<VarProFunctor, Eigen::Central>> lm(nd);
        lm.parameters.xtol = 1e-14;
        lm.parameters.ftol = 1e-16;
        lm.parameters.maxfev = fev_per_param * (fn.inputs() + 1);
        lm.minimize(p);
        fn.unpack(p, orders, ratios);
        require(admissible(orders, ratios), Errc::fit_failure, "structured fit left the admissible parameter set");
        auto next = make_patterns(orders, pb.mode.source, pb.span);
        const bool same_set = next.size() == patterns.size();
        patterns = std::move(next);
        const double now = solve_linear(pb, orders, ratios, patterns).misfit;
        if (same_set && now > 0.99 * last) break;
        last = now;
    }
    return solve_linear(pb, orders, ratios, patterns);
}

std::string describe(const std::vector<double>& v);

// The exponent carrying order j (base + 2 a1 - a_j) must not coincide with a
// correction term of the model built from the other orders; otherwise the
// data cannot tell a new order from a correction.
void check_slots(const Problem& pb, const FitState& st, double tol) {
    for (std::size_t j = 1; j < st.orders.size(); ++j) {
        const double slot = pb.base() + 2.0 * st.orders[0] - st.orders[j];
        std::vector<double> others;
        for (std::size_t i = 0; i < st.orders.size(); ++i)
            if (i != j) others.push_back(st.orders[i]);
        for (const auto& pt : make_patterns(others, pb.mode.source, slot - pb.base() - others[0] + tol)) {
            const double e = pattern_exponent(pt, others, pb.mode.source, pb.base());
            if (std::abs(e - slot) <= tol) {
                std::ostringstream os;
                os << "exponent " << slot << " of order " << st.orders[j] << " coincides with a correction term "
                   << e << " of the orders " << describe(others) << "; new order and correction are ambiguous";
                fail(Errc::ambiguous_exponent, os.str());
            }
        }
    }
}

std::string describe(const std::vector<double>& v) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << ")";
    return os.str();
}

IdentificationResult peel(Problem pb, const IdentificationConfig& cfg, std::pair<double, double> window,
                          const std::string& method) {
    require(pb.x.size() >= 10, Errc::invalid_argument, "fewer than 10 samples in the fit window");
    double ymax = 0.0;
    for (double v : pb.y) ymax = std::max(ymax, std::abs(v));
    require(ymax > 0.0, Errc::signal_below_floor, "data equals the baseline in the fit window");
    pb.w.resize(pb.y.size());
    for (std::size_t i = 0; i < pb.y.size(); ++i) {
        require(std::abs(pb.y[i]) > 1e-14 * ymax, Errc::signal_below_floor,
                "signal vanishes inside the fit window; the leading coefficient may be zero");
        pb.w[i] = 1.0 / std::abs(pb.y[i]);
    }
    const double x_hi = *std::max_element(pb.x.begin(), pb.x.end());
    // keep neglected powers below ~1e-9 relative at the far end of the window
    pb.span = std::clamp(9.0 / std::max(-std::log10(x_hi), 1.0), 1.0, 4.5);

    const double base = pb.base();
    const auto [lx, ly] = lower_part(pb.x, pb.y, 0.25);
    const double a1 = loglog_fit(lx, ly).slope - base;
    require(a1 > 0.0 && a1 < 1.0, Errc::fit_failure, "leading exponent outside (0, 1) after removing mu");

    IdentificationResult result;
    result.method = method;
    FitState st = structured_fit(pb, {a1}, {1.0});
    result.diagnostics.push_back({1, st.orders, st.ratios, st.misfit, window});

    while (st.misfit > cfg.residual_floor) {
        if (st.orders.size() >= cfg.max_terms) {
            std::ostringstream os;
            os << "residual floor " << cfg.residual_floor << " not reached with " << cfg.max_terms
               << " terms (misfit " << st.misfit << ")";
            fail(Errc::residual_floor_not_reached, os.str());
        }
        // scan the new order; for each slot pick the ratio with the others
        // held, then refine all parameters jointly
        const FitState prev = st;
        FitState best;
        std::vector<FitState> trials;
        const double a_last = prev.orders.back();
        for (double a_new = 0.02; a_new < a_last - 0.05; a_new += 0.03) {
            auto orders = prev.orders;
            auto ratios = prev.ratios;
            orders.push_back(a_new);
            ratios.push_back(1.0);
            std::vector<Pattern> patterns;
            try {
                patterns = make_patterns(orders, pb.mode.source, pb.span);
            } catch (const Error&) {
                continue;
            }
            double best_r = 1.0, best_misfit = kInf;
            for (double lr = -5.0; lr <= 5.0; lr += 0.5) {
                ratios.back() = std::exp(lr);
                try {
                    const double mf = solve_linear(pb, orders, ratios, patterns).misfit;
                    if (mf < best_misfit) {
                        best_misfit = mf;
                        best_r = ratios.back();
                    }
                } catch (const Error&) {
                }
            }
            ratios.back() = best_r;
            try {
                trials.push_back(structured_fit(pb, orders, ratios, 40, 1));
            } catch (const Error&) {
            }
        }
        std::sort(trials.begin(), trials.end(),
                  [](const FitState& a, const FitState& b) { return a.misfit < b.misfit; });
        for (std::size_t c = 0; c < std::min<std::size_t>(3, trials.size()); ++c) {
            try {
                FitState refined = structured_fit(pb, trials[c].orders, trials[c].ratios);
                if (refined.misfit < best.misfit) best = std::move(refined);
            } catch (const Error&) {
            }
        }
        require(best.misfit < kInf, Errc::fit_failure, "structured fit with an additional order failed");
        if (best.ratios.back() < 1e-6 || best.misfit >= prev.misfit) {
            std::ostringstream os;
            os << "an additional order does not explain the residual (misfit " << prev.misfit << " with orders "
               << describe(prev.orders) << ")";
            fail(Errc::residual_floor_not_reached, os.str());
        }
        st = std::move(best);
        check_slots(pb, st, cfg.classify_tolerance);
        result.diagnostics.push_back({st.orders.size(), st.orders, st.ratios, st.misfit, window});
    }

    result.m_hat = st.orders.size();
    result.orders_hat = st.orders;
    result.coeff_ratios = st.ratios;
    const double s1 = base + st.orders[0];
    const double f_lead = pb.mode.source ? 1.0 : -1.0;
    result.leading_composite = f_lead * st.g[0] * rgamma(s1 + 1.0);
    result.validate();
    return result;
}

void check_same_grid(const ObservationTrace& u, const ObservationTrace& v) {
    bool same = u.times.size() == v.times.size();
    for (std::size_t i = 0; same && i < u.times.size(); ++i)
        same = std::abs(u.times[i] - v.times[i]) <= 1e-12 * std::max(1.0, std::abs(u.times[i]));
    require(same, Errc::grid_mismatch, "traces are sampled on different time grids");
}

}  // namespace

void IdentificationConfig::validate() const {
    require(max_terms >= 1, Errc::config_error, "max_terms must be at least 1");
    require(fit_window.first > 0.0 && fit_window.second > fit_window.first, Errc::config_error,
            "fit window must satisfy 0 < t_lo < t_hi");
    require(residual_floor > 0.0, Errc::config_error, "residual_floor must be positive");
    require(std::isfinite(nu_threshold) && nu_threshold > 0.0, Errc::config_error, "nu_threshold must be positive");
    require(order_tolerance > 0.0 && classify_tolerance > 0.0, Errc::config_error, "tolerances must be positive");
    for (double p : p_grid) require(p > 0.0 && std::isfinite(p), Errc::config_error, "p_grid must be positive");
}

std::vector<double> IdentificationConfig::p_points() const {
    if (!p_grid.empty()) return p_grid;
    std::vector<double> out(40);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(10.0, 2.0 + 2.0 * static_cast<double>(i) / 39.0);
    return out;
}

void IdentificationResult::validate() const {
    require(m_hat == orders_hat.size() && m_hat == coeff_ratios.size() && m_hat >= 1, Errc::fit_failure,
            "inconsistent identification result sizes");
    require(coeff_ratios[0] == 1.0, Errc::fit_failure, "first coefficient ratio must be 1");
    for (std::size_t j = 0; j < m_hat; ++j) {
        require(orders_hat[j] > 0.0 && orders_hat[j] < 1.0, Errc::fit_failure, "fitted order outside (0, 1)");
        require(j == 0 || orders_hat[j] < orders_hat[j - 1], Errc::fit_failure, "fitted orders not decreasing");
        require(coeff_ratios[j] > 0.0, Errc::fit_failure, "fitted coefficient ratio not positive");
    }
}

LeadingOrder estimate_leading_order(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg) {
    trace.validate();
    cfg.validate();
    const auto s = window_samples(trace, baseline, cfg.fit_window);
    require(s.t.size() >= 10, Errc::invalid_argument, "fewer than 10 samples in the fit window");
    double scale = std::abs(baseline);
    double dmax = 0.0;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
        scale = std::max(scale, std::abs(s.y[i] + baseline));
        dmax = std::max(dmax, std::abs(s.y[i]));
    }
    require(dmax > cfg.residual_floor * std::max(scale, 1e-300), Errc::signal_below_floor,
            "trace does not leave the baseline inside the fit window");
    const LogLog wide = loglog_fit(s.t, s.y);
    const auto [lt, ly] = lower_part(s.t, s.y, 0.25);
    require(lt.size() >= 3, Errc::invalid_argument, "window too sparse for the refinement pass");
    const LogLog narrow = loglog_fit(lt, ly);
    if (std::abs(narrow.slope - wide.slope) >= cfg.order_tolerance) {
        std::ostringstream os;
        os << "leading exponent moves from " << wide.slope << " to " << narrow.slope
           << " when the window shrinks; the log-log residual is not a single power (window too wide)";
        fail(Errc::fit_failure, os.str());
    }
    return {narrow.slope, narrow.sign * std::exp(narrow.log_amp)};
}

IdentificationResult peel_orders(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg,
                                 FitMode mode) {
    trace.validate();
    cfg.validate();
    require(!mode.source || (std::isfinite(mode.mu) && mode.mu > -1.0), Errc::invalid_argument,
            "mu must exceed -1");
    const auto s = window_samples(trace, baseline, cfg.fit_window);
    Problem pb;
    pb.x = s.t;
    pb.y = s.y;
    pb.mode = mode;
    return peel(std::move(pb), cfg, cfg.fit_window, "time");
}

IdentificationResult laplace_domain_fit(const ObservationTrace& trace, double baseline, const IdentificationConfig& cfg) {
    trace.validate();
    cfg.validate();
    std::vector<double> times = trace.times;
    std::vector<double> values = trace.values;
    if (times.front() > 0.0) {
        times.insert(times.begin(), 0.0);
        values.insert(values.begin(), baseline);
    }
    require(times.size() >= 20, Errc::invalid_argument, "trace too short for the Laplace quadrature");
    const auto profile = SourceTemporalProfile::sampled(times, values);
    const auto ps = cfg.p_points();
    const double p_min = *std::min_element(ps.begin(), ps.end());
    const double p_max = *std::max_element(ps.begin(), ps.end());

    Problem pb;
    pb.laplace = true;
    double gmax = 0.0, umax = std::abs(baseline);
    for (double v : values) umax = std::max(umax, std::abs(v));
    for (double p : ps) {
        const double g = p * profile.laplace(cplx(p, 0.0)).real() - baseline;
        pb.x.push_back(1.0 / p);
        pb.y.push_back(g);
        gmax = std::max(gmax, std::abs(g));
    }
    require(gmax > 1e-12 * std::max(umax, 1e-300), Errc::signal_below_floor,
            "G(p) vanishes: the trace equals its baseline");

    auto g_at = [&](double p) {
        for (std::size_t i = 0; i < ps.size(); ++i)
            if (ps[i] == p) return std::abs(pb.y[i]);
        return 0.0;
    };
    // head: linear interpolation over [0, t1] against a t^alpha start
    const double head = p_max * std::abs(values[1] - baseline) * times[1] / 2.0;
    // tail: the trace is cut at T; bound by max|u| e^{-p T}
    const double tail = umax * std::exp(-p_min * times.back());
    if (head > 0.1 * g_at(p_max) || tail > 0.1 * g_at(p_min)) {
        std::ostringstream os;
        os << "Laplace quadrature error too large (head " << head << " at p=" << p_max << ", tail " << tail
           << " at p=" << p_min << "); refine the trace near 0 or extend it in time";
        fail(Errc::quadrature_tail, os.str());
    }
    auto result = peel(std::move(pb), cfg, {1.0 / p_max, 1.0 / p_min}, "laplace");

    const auto time_result = peel_orders(trace, baseline, cfg);
    bool agree = time_result.m_hat == result.m_hat;
    for (std::size_t j = 0; agree && j < result.m_hat; ++j)
        agree = std::abs(time_result.orders_hat[j] - result.orders_hat[j]) <= 2e-2;
    if (!agree) {
        std::ostringstream os;
        os << "Laplace-domain orders " << describe(result.orders_hat) << " disagree with time-domain orders "
           << describe(time_result.orders_hat);
        fail(Errc::method_disagreement, os.str());
    }
    return result;
}

CoincidenceResult coincidence_test(const ObservationTrace& trace_u, const ObservationTrace& trace_v, double nu,
                                   std::pair<double, double> window, double floor) {
    trace_u.validate();
    trace_v.validate();
    check_same_grid(trace_u, trace_v);
    require(window.first > 0.0 && window.second > window.first, Errc::invalid_argument,
            "window must satisfy 0 < t_lo < t_hi");
    require(std::isfinite(nu) && nu > 0.0, Errc::invalid_argument, "nu must be positive");
    std::vector<double> t, d;
    double scale = 0.0;
    CoincidenceResult out;
    for (std::size_t i = 0; i < trace_u.times.size(); ++i) {
        const double ti = trace_u.times[i];
        if (ti < window.first || ti > window.second) continue;
        t.push_back(ti);
        d.push_back(std::abs(trace_u.values[i] - trace_v.values[i]));
        scale = std::max({scale, std::abs(trace_u.values[i]), std::abs(trace_v.values[i])});
        out.max_difference = std::max(out.max_difference, d.back());
    }
    require(t.size() >= 3, Errc::invalid_argument, "fewer than 3 samples inside the window");
    const double cut = floor * scale;
    if (out.max_difference <= cut) {
        out.verdict = Verdict::consistent;
        out.exponent = kInf;
        return out;
    }
    std::vector<double> ft, fd;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (d[i] <= cut) continue;
        ft.push_back(t[i]);
        fd.push_back(d[i]);
    }
    if (ft.size() < 3) {
        out.verdict = Verdict::consistent;
        out.exponent = kInf;
        return out;
    }
    out.exponent = loglog_fit(ft, fd).slope;
    out.verdict = out.exponent >= nu - 0.05 ? Verdict::consistent : Verdict::divergent;
    return out;
}

SampledEquivalence sampled_equivalence_check(const ObservationTrace& trace_u, const ObservationTrace& trace_v,
                                             const std::vector<double>& sample_times, double nu_tilde,
                                             std::pair<double, double> window, double floor) {
    trace_u.validate();
    trace_v.validate();
    check_same_grid(trace_u, trace_v);
    require(sample_times.size() >= 5, Errc::invalid_argument, "sampling subsequence needs at least 5 times");
    ObservationTrace su, sv;
    su.x0 = trace_u.x0;
    sv.x0 = trace_v.x0;
    for (double tm : sample_times) {
        const auto it = std::find_if(trace_u.times.begin(), trace_u.times.end(),
                                     [&](double t) { return std::abs(t - tm) <= 1e-12 * std::max(tm, 1e-300); });
        require(it != trace_u.times.end(), Errc::invalid_argument, "sampling time is not a trace time");
        const auto i = static_cast<std::size_t>(it - trace_u.times.begin());
        su.times.push_back(tm);
        sv.times.push_back(tm);
        su.values.push_back(trace_u.values[i]);
        sv.values.push_back(trace_v.values[i]);
    }
    // ascending order for the fit
    std::vector<std::size_t> idx(su.times.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return su.times[a] < su.times[b]; });
    ObservationTrace au = su, av = sv;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        au.times[i] = av.times[i] = su.times[idx[i]];
        au.values[i] = su.values[idx[i]];
        av.values[i] = sv.values[idx[i]];
    }
    SampledEquivalence out;
    out.sampled = coincidence_test(au, av, nu_tilde, {au.times.front(), au.times.back()}, floor);
    out.full = coincidence_test(trace_u, trace_v, nu_tilde, window, floor);
    out.agree = out.sampled.verdict == out.full.verdict;
    return out;
}

}  // namespace fracdiff
