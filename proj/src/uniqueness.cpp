#include "fracdiff/uniqueness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "fracdiff/error.hpp"

namespace fracdiff {
namespace {

// phi_n(x0) counts as zero below this (eigenfunctions normalized in L2)
constexpr double kNodeTol = 1e-12;

bool same_operator(const SpectralOperator& a, const SpectralOperator& b) {
    return &a == &b || (a.length() == b.length() && a.eigenvalues() == b.eigenvalues());
}

void check_simple_spectrum(const SpectralOperator& op) {
    const auto& lam = op.eigenvalues();
    for (std::size_t i = 1; i < lam.size(); ++i)
        require(lam[i] - lam[i - 1] > 1e-12 * std::abs(lam[i]), Errc::unsupported_operator,
                "repeated eigenvalue at mode " + std::to_string(i + 1) + ": multiplicity > 1 is not supported");
}

void check_interior(const SpectralOperator& op, double x0) {
    require(std::isfinite(x0), Errc::non_finite, "monitoring point is not finite");
    require(x0 > op.x_lo() && x0 < op.x_hi(), Errc::invalid_argument,
            "monitoring point must lie strictly inside the domain");
}

const SpectralOperator& common_operator(const FieldCoefficients& a, const FieldCoefficients& b,
                                        const MultiTermModel& mu, const MultiTermModel& mv) {
    require(a.op && b.op && mu.op && mv.op, Errc::invalid_argument, "fields and models need an operator");
    mu.validate();
    mv.validate();
    const auto& op = *a.op;
    require(same_operator(op, *b.op) && same_operator(op, *mu.op) && same_operator(op, *mv.op),
            Errc::grid_mismatch, "both fields and both models must share one spectral operator");
    require(a.coeffs.size() == op.mode_count() && b.coeffs.size() == op.mode_count(), Errc::grid_mismatch,
            "coefficient count must equal the operator mode count");
    check_simple_spectrum(op);
    return op;
}

// sum |lambda_n^k c_n| times the sup of a normalized sine mode; (L^k h)(x0)
// below kVanishTol of this is roundoff
constexpr double kVanishTol = 1e-12;

double field_size(const FieldCoefficients& h, int k) {
    double s = 0.0;
    for (std::size_t n = 1; n <= h.coeffs.size(); ++n) s += std::abs(std::pow(h.op->eigenvalue(n), k) * h.coeffs[n - 1]);
    return s * std::sqrt(2.0 / h.op->length());
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// m = m', alpha_j = beta_j, q_j / r_j = kappa
void check_models(const MultiTermModel& mu, const MultiTermModel& mv, double kappa, double tol,
                  std::vector<Violation>& out) {
    if (mu.terms() != mv.terms()) {
        out.push_back({0, "term_count",
                       std::abs(static_cast<double>(mu.terms()) - static_cast<double>(mv.terms()))});
        return;
    }
    for (std::size_t j = 0; j < mu.terms(); ++j) {
        const double d = std::abs(mu.orders[j] - mv.orders[j]);
        if (d > tol) out.push_back({j + 1, "order", d});
        const double rel = std::abs(mu.coeffs[j] / mv.coeffs[j] - kappa) / kappa;
        if (rel > tol) out.push_back({j + 1, "coefficient_ratio", rel});
    }
}

// pa / pb are P_n h(x0); with_l adds the lambda_n-weighted condition.
// factor multiplies the second field on matched modes.
void check_projections(const SpectralOperator& op, const KappaMatching& match, const std::vector<double>& pa,
                       const std::vector<double>& pb, double factor, bool with_l, double tol,
                       std::vector<Violation>& out) {
    const auto& lam = op.eigenvalues();
    const std::size_t n_modes = op.mode_count();
    double scale = std::max(max_abs(pa), std::abs(factor) * max_abs(pb));
    double scale_l = 0.0;
    for (std::size_t i = 0; i < n_modes; ++i)
        scale_l = std::max({scale_l, std::abs(lam[i] * pa[i]), std::abs(match.kappa * lam[i] * pb[i])});
    if (scale == 0.0) scale = 1.0;
    if (scale_l == 0.0) scale_l = 1.0;

    std::vector<bool> in_m(n_modes + 1, false), in_mp(n_modes + 1, false);
    for (std::size_t i = 0; i < match.m_set.size(); ++i) {
        const std::size_t n = match.m_set[i];
        const std::size_t t = match.m_prime_set[i];
        in_m[n] = true;
        in_mp[t] = true;
        const double d = std::abs(pa[n - 1] - factor * pb[t - 1]) / scale;
        if (d > tol) out.push_back({n, "matched_value", d});
        if (with_l) {
            const double dl = std::abs(lam[n - 1] * pa[n - 1] - match.kappa * lam[t - 1] * pb[t - 1]) / scale_l;
            if (dl > tol) out.push_back({n, "matched_l_value", dl});
        }
    }
    for (std::size_t n = 1; n <= n_modes; ++n) {
        if (!in_m[n] && std::abs(pa[n - 1]) / scale > tol)
            out.push_back({n, "unmatched_first", std::abs(pa[n - 1]) / scale});
        if (!in_mp[n] && std::abs(pb[n - 1]) / scale > tol)
            out.push_back({n, "unmatched_second", std::abs(pb[n - 1]) / scale});
    }
}

CoincidenceVerdict finish(const SpectralOperator& op, double kappa, const FieldCoefficients& first,
                          const FieldCoefficients& second, double x0, const MultiTermModel& mu,
                          const MultiTermModel& mv, double tol, bool initial) {
    CoincidenceVerdict v;
    v.kappa = kappa;
    v.matching = kappa_match(op, kappa, default_kappa_tolerance(op));
    check_models(mu, mv, kappa, tol, v.violations);
    if (!v.matching.in_sigma) v.violations.push_back({0, "kappa_not_in_sigma", kappa});
    check_projections(op, v.matching, first.pointwise_projections(x0), second.pointwise_projections(x0),
                      initial ? 1.0 : kappa, initial, tol, v.violations);
    v.holds = v.violations.empty() && v.matching.in_sigma;
    return v;
}

FieldCoefficients twin(const FieldCoefficients& b, double kappa, double x0, double factor) {
    require(b.op != nullptr, Errc::invalid_argument, "field needs an operator");
    const auto& op = *b.op;
    check_interior(op, x0);
    check_simple_spectrum(op);
    require(std::isfinite(kappa) && kappa > 0.0, Errc::invalid_argument, "kappa must be positive");
    const auto match = kappa_match(op, kappa, default_kappa_tolerance(op));
    require(match.in_sigma, Errc::kappa_not_in_ratio_set,
            "kappa = " + std::to_string(kappa) + " is not a ratio of retained eigenvalues");

    const auto pb = b.pointwise_projections(x0);
    const double scale = max_abs(pb);
    require(scale > 0.0, Errc::invalid_argument, "field vanishes at every mode at x0");
    const double tol = default_projection_tolerance(op);
    for (std::size_t n = 1; n <= op.mode_count(); ++n)
        require(match.in_m_prime_set(n) || std::abs(pb[n - 1]) <= tol * scale, Errc::inadmissible_field,
                "mode " + std::to_string(n) + " of the field has no partner lambda = kappa * lambda_" +
                    std::to_string(n) + " among the retained modes");

    auto out = zero_field(b.op);
    for (std::size_t i = 0; i < match.m_set.size(); ++i) {
        const std::size_t n = match.m_set[i];
        const double target = factor * pb[match.m_prime_set[i] - 1];
        if (target == 0.0) continue;
        const double phi = op.phi(n, x0);
        require(std::abs(phi) > kNodeTol, Errc::rank_condition,
                "x0 is a node of mode " + std::to_string(n) + "; the twin is not determined there");
        out.coeffs[n - 1] = target / phi;
    }
    return out;
}

}  // namespace

double default_projection_tolerance(const SpectralOperator& op) {
    return op.source() == OperatorSource::analytic_dirichlet_laplacian ? kProjectionTolAnalytic
                                                                        : kProjectionTolDiscretized;
}

CoincidenceVerdict check_coincidence_initial(const FieldCoefficients& a, const FieldCoefficients& b, double x0,
                                             const MultiTermModel& model_u, const MultiTermModel& model_v,
                                             double tol) {
    const auto& op = common_operator(a, b, model_u, model_v);
    check_interior(op, x0);
    if (tol <= 0.0) tol = default_projection_tolerance(op);
    const double la = apply_l_at_point(a, x0);
    const double lb = apply_l_at_point(b, x0);
    require(std::abs(la) > kVanishTol * field_size(a, 1), Errc::vanishing_l_value, "(La)(x0) vanishes");
    require(std::abs(lb) > kVanishTol * field_size(b, 1), Errc::vanishing_l_value, "(Lb)(x0) vanishes");
    const double kappa = la / lb;
    require(kappa > 0.0, Errc::kappa_not_in_ratio_set,
            "(La)(x0) and (Lb)(x0) have opposite signs; kappa = " + std::to_string(kappa));
    return finish(op, kappa, a, b, x0, model_u, model_v, tol, true);
}

CoincidenceVerdict check_coincidence_source(const FieldCoefficients& f, const FieldCoefficients& g, double x0,
                                            const MultiTermModel& model_u, const MultiTermModel& model_v,
                                            double tol) {
    const auto& op = common_operator(f, g, model_u, model_v);
    check_interior(op, x0);
    if (tol <= 0.0) tol = default_projection_tolerance(op);
    const double fx = f.value_at(x0);
    const double gx = g.value_at(x0);
    require(std::abs(fx) > kVanishTol * field_size(f, 0), Errc::vanishing_source_value, "f(x0) vanishes");
    require(std::abs(gx) > kVanishTol * field_size(g, 0), Errc::vanishing_source_value, "g(x0) vanishes");
    const double kappa = fx / gx;
    require(kappa > 0.0, Errc::kappa_not_in_ratio_set,
            "f(x0) and g(x0) have opposite signs; kappa = " + std::to_string(kappa));
    return finish(op, kappa, f, g, x0, model_u, model_v, tol, false);
}

FieldCoefficients construct_twin_initial(const FieldCoefficients& b, double kappa, double x0) {
    return twin(b, kappa, x0, 1.0);
}

FieldCoefficients construct_twin_source(const FieldCoefficients& g, double kappa, double x0) {
    return twin(g, kappa, x0, kappa);
}

RecoveryResult recover_initial(const ObservationTrace& trace, const MultiTermModel& model, double x0,
                               std::size_t n_modes) {
    trace.validate();
    model.validate();
    const auto& op = *model.op;
    check_interior(op, x0);
    check_simple_spectrum(op);
    require(n_modes >= 1 && n_modes <= op.mode_count(), Errc::invalid_argument,
            "n_modes must lie in [1, " + std::to_string(op.mode_count()) + "]");
    require(trace.times.size() >= n_modes, Errc::invalid_argument, "fewer samples than unknowns");

    std::vector<double> phi(n_modes);
    for (std::size_t n = 1; n <= n_modes; ++n) {
        phi[n - 1] = op.phi(n, x0);
        require(std::abs(phi[n - 1]) > kNodeTol, Errc::rank_condition,
                "phi_" + std::to_string(n) + "(x0) = 0: mode " + std::to_string(n) + " is invisible at x0");
    }

    // column n: inverse transform of z / (p (lambda_n + z)), i.e. the trace of
    // the unit mode divided by phi_n(x0)
    const std::size_t rows = trace.times.size();
    Eigen::MatrixXd basis(rows, n_modes);
    const auto none = zero_field(model.op);
    for (std::size_t n = 1; n <= n_modes; ++n) {
        auto unit = zero_field(model.op);
        unit.coeffs[n - 1] = 1.0;
        const auto col = solve_trace(model, unit, none, SourceTemporalProfile::none(), x0, trace.times);
        for (std::size_t k = 0; k < rows; ++k) basis(k, n - 1) = col.values[k] / phi[n - 1];
    }
    const Eigen::Map<const Eigen::VectorXd> y(trace.values.data(), static_cast<Eigen::Index>(rows));

    Eigen::VectorXd norms = basis.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
        require(norms(j) > 0.0, Errc::ill_conditioned, "basis column " + std::to_string(j + 1) + " vanishes");
        basis.col(j) /= norms(j);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > kRecoverySvdCutoff * smax) ++rank;

    RecoveryResult res;
    res.condition = sv(sv.size() - 1) > 0.0 ? smax / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    res.rank = rank;
    require(res.condition <= kRecoveryMaxCondition, Errc::ill_conditioned,
            "recovery system has condition " + std::to_string(res.condition) + "; at most " +
                std::to_string(rank) + " modes are resolvable from this trace");

    svd.setThreshold(kRecoverySvdCutoff);
    Eigen::VectorXd w = svd.solve(y);
    const Eigen::VectorXd fit = basis * w;
    const double ynorm = y.norm();
    res.residual = ynorm > 0.0 ? (fit - y).norm() / ynorm : (fit - y).norm();

    res.field = zero_field(model.op);
    for (std::size_t n = 1; n <= n_modes; ++n) {
        const auto j = static_cast<Eigen::Index>(n - 1);
        res.field.coeffs[n - 1] = w(j) / norms(j) / phi[n - 1];
    }
    return res;
}

}  // namespace fracdiff
