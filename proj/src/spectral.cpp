#include "fracdiff/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "fracdiff/error.hpp"

namespace fracdiff {
namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> uniform_grid(std::size_t points, double length) {
    std::vector<double> grid(points);
    const double h = length / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) grid[i] = h * static_cast<double>(i);
    grid.back() = length;
    return grid;
}

std::vector<double> trapezoid_weights(std::size_t points, double length) {
    const double h = length / static_cast<double>(points - 1);
    std::vector<double> w(points, h);
    w.front() = 0.5 * h;
    w.back() = 0.5 * h;
    return w;
}

void check_interior(const SpectralOperator& op, double x0) {
    require(std::isfinite(x0), Errc::non_finite, "monitoring point is not finite");
    require(x0 > op.x_lo() && x0 < op.x_hi(), Errc::invalid_argument,
            "monitoring point must lie strictly inside the domain");
}

}  // namespace

double SpectralOperator::phi(std::size_t n, double x) const {
    require(n >= 1 && n <= mode_count(), Errc::invalid_argument, "mode index out of range");
    if (x <= 0.0 || x >= length_) return 0.0;
    if (source_ == OperatorSource::analytic_dirichlet_laplacian) {
        return std::sqrt(2.0 / length_) * std::sin(static_cast<double>(n) * kPi * x / length_);
    }
    const std::size_t points = grid_.size();
    const double h = length_ / static_cast<double>(points - 1);
    const double pos = x / h;
    const auto i = std::min(static_cast<std::size_t>(pos), points - 2);
    const double frac = pos - static_cast<double>(i);
    const double* row = samples_.data() + (n - 1) * points;
    return (1.0 - frac) * row[i] + frac * row[i + 1];
}

std::vector<double> SpectralOperator::phi_on_grid(std::size_t n) const {
    require(n >= 1 && n <= mode_count(), Errc::invalid_argument, "mode index out of range");
    if (source_ == OperatorSource::discretized) {
        const std::size_t points = grid_.size();
        return {samples_.begin() + static_cast<std::ptrdiff_t>((n - 1) * points),
                samples_.begin() + static_cast<std::ptrdiff_t>(n * points)};
    }
    std::vector<double> out(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) out[i] = phi(n, grid_[i]);
    return out;
}

SpectralOperator dirichlet_laplacian(double length, std::size_t n_modes) {
    require(std::isfinite(length) && length > 0.0, Errc::invalid_argument, "domain length must be positive");
    require(n_modes >= 1, Errc::invalid_argument, "at least one mode is required");
    SpectralOperator op;
    op.source_ = OperatorSource::analytic_dirichlet_laplacian;
    op.length_ = length;
    op.lambda_.resize(n_modes);
    for (std::size_t n = 1; n <= n_modes; ++n) {
        const double k = static_cast<double>(n) * kPi / length;
        op.lambda_[n - 1] = k * k;
    }
    op.grid_ = uniform_grid(2 * n_modes + 1, length);
    op.weights_ = trapezoid_weights(2 * n_modes + 1, length);
    return op;
}

SpectralOperator discretize_symmetric(std::span<const double> diffusion, std::span<const double> potential,
                                      std::size_t grid_points, double length) {
    require(std::isfinite(length) && length > 0.0, Errc::invalid_argument, "domain length must be positive");
    require(grid_points >= 3, Errc::invalid_argument, "need at least 3 grid points");
    require(diffusion.size() == grid_points && potential.size() == grid_points, Errc::grid_mismatch,
            "coefficient samples must have one value per grid point");
    for (double a : diffusion) {
        require(std::isfinite(a), Errc::non_finite, "diffusion sample is not finite");
        require(a > 0.0, Errc::invalid_argument, "diffusion coefficient must be strictly positive");
    }
    for (double c : potential) require(std::isfinite(c), Errc::non_finite, "potential sample is not finite");

    const std::size_t interior = grid_points - 2;
    const double h = length / static_cast<double>(grid_points - 1);
    const double inv_h2 = 1.0 / (h * h);

    Eigen::VectorXd diag(static_cast<Eigen::Index>(interior));
    Eigen::VectorXd sub(static_cast<Eigen::Index>(std::max<std::size_t>(interior, 1) - 1));
    for (std::size_t i = 1; i <= interior; ++i) {
        const double a_left = 0.5 * (diffusion[i - 1] + diffusion[i]);
        const double a_right = 0.5 * (diffusion[i] + diffusion[i + 1]);
        diag[static_cast<Eigen::Index>(i - 1)] = (a_left + a_right) * inv_h2 + potential[i];
        if (i < interior) sub[static_cast<Eigen::Index>(i - 1)] = -a_right * inv_h2;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    require(solver.info() == Eigen::Success, Errc::eigensolver_failure, "tridiagonal eigensolver did not converge");

    SpectralOperator op;
    op.source_ = OperatorSource::discretized;
    op.length_ = length;
    op.grid_ = uniform_grid(grid_points, length);
    op.weights_ = trapezoid_weights(grid_points, length);
    op.diag_.assign(diag.data(), diag.data() + diag.size());
    op.offdiag_.assign(sub.data(), sub.data() + sub.size());

    const Eigen::VectorXd& values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    op.lambda_.resize(interior);
    for (std::size_t n = 0; n < interior; ++n) {
        const double lam = values[static_cast<Eigen::Index>(n)];
        require(std::abs(lam) > 1e-12 * scale, Errc::zero_eigenvalue,
                "operator has a zero eigenvalue (0 must not be in the spectrum)");
        if (n > 0)
            require(lam > op.lambda_[n - 1], Errc::eigensolver_failure, "eigenvalues are not strictly increasing");
        op.lambda_[n] = lam;
    }

    const double norm = 1.0 / std::sqrt(h);
    op.samples_.assign(interior * grid_points, 0.0);
    for (std::size_t n = 0; n < interior; ++n) {
        const auto vec = solver.eigenvectors().col(static_cast<Eigen::Index>(n));
        // orient like sin(n pi x / length): positive slope at the left end
        const double sign = vec[0] < 0.0 ? -1.0 : 1.0;
        double* row = op.samples_.data() + n * grid_points;
        for (std::size_t i = 0; i < interior; ++i) row[i + 1] = sign * norm * vec[static_cast<Eigen::Index>(i)];
    }
    return op;
}

bool FieldCoefficients::is_zero() const {
    return std::all_of(coeffs.begin(), coeffs.end(), [](double c) { return c == 0.0; });
}

double FieldCoefficients::value_at(double x) const {
    double sum = 0.0;
    for (std::size_t n = 1; n <= coeffs.size(); ++n) {
        if (coeffs[n - 1] != 0.0) sum += coeffs[n - 1] * op->phi(n, x);
    }
    return sum;
}

std::vector<double> FieldCoefficients::pointwise_projections(double x0) const {
    std::vector<double> out(coeffs.size());
    for (std::size_t n = 1; n <= coeffs.size(); ++n)
        out[n - 1] = coeffs[n - 1] == 0.0 ? 0.0 : coeffs[n - 1] * op->phi(n, x0);
    return out;
}

FieldCoefficients zero_field(OperatorPtr op) {
    require(op != nullptr, Errc::invalid_argument, "field needs an operator");
    FieldCoefficients f;
    f.coeffs.assign(op->mode_count(), 0.0);
    f.op = std::move(op);
    return f;
}

FieldCoefficients field_from_coeffs(std::vector<double> coeffs, OperatorPtr op) {
    require(op != nullptr, Errc::invalid_argument, "field needs an operator");
    require(coeffs.size() == op->mode_count(), Errc::grid_mismatch,
            "coefficient count must equal the operator mode count");
    for (double c : coeffs) require(std::isfinite(c), Errc::non_finite, "field coefficient is not finite");
    return FieldCoefficients{std::move(coeffs), std::move(op)};
}

FieldCoefficients project(std::span<const double> field_samples, OperatorPtr op) {
    require(op != nullptr, Errc::invalid_argument, "field needs an operator");
    const auto& grid = op->grid();
    require(field_samples.size() == grid.size(), Errc::grid_mismatch,
            "field samples must lie on the operator quadrature grid (" + std::to_string(grid.size()) +
                " points, got " + std::to_string(field_samples.size()) + ")");
    for (double v : field_samples) require(std::isfinite(v), Errc::non_finite, "field sample is not finite");
    const auto& w = op->weights();
    std::vector<double> coeffs(op->mode_count());
    for (std::size_t n = 1; n <= op->mode_count(); ++n) {
        const auto phi = op->phi_on_grid(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) sum += w[i] * field_samples[i] * phi[i];
        coeffs[n - 1] = sum;
    }
    return FieldCoefficients{std::move(coeffs), std::move(op)};
}

FieldCoefficients project_function(const std::function<double(double)>& field, OperatorPtr op) {
    require(op != nullptr, Errc::invalid_argument, "field needs an operator");
    std::vector<double> samples(op->grid().size());
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = field(op->grid()[i]);
    return project(samples, std::move(op));
}

FieldCoefficients sine_field(std::span<const SineTerm> terms, OperatorPtr op) {
    require(op != nullptr, Errc::invalid_argument, "field needs an operator");
    FieldCoefficients total = zero_field(op);
    for (const auto& term : terms) {
        require(std::isfinite(term.amplitude) && std::isfinite(term.wavenumber), Errc::non_finite,
                "sine term is not finite");
        const double mode = term.wavenumber * op->length() / kPi;
        const double nearest = std::round(mode);
        const bool exact = op->source() == OperatorSource::analytic_dirichlet_laplacian &&
                           std::abs(mode - nearest) <= 1e-12 * std::max(1.0, std::abs(mode)) && nearest >= 1.0 &&
                           nearest <= static_cast<double>(op->mode_count());
        if (exact) {
            total.coeffs[static_cast<std::size_t>(nearest) - 1] += term.amplitude * std::sqrt(op->length() / 2.0);
            continue;
        }
        const auto part = project_function(
            [&](double x) { return term.amplitude * std::sin(term.wavenumber * x); }, op);
        for (std::size_t n = 0; n < total.coeffs.size(); ++n) total.coeffs[n] += part.coeffs[n];
    }
    return total;
}

double apply_l_power_at_point(const FieldCoefficients& field, double x0, int power) {
    require(field.op != nullptr, Errc::invalid_argument, "field needs an operator");
    require(power >= 0, Errc::invalid_argument, "operator power must be non-negative");
    check_interior(*field.op, x0);
    const std::size_t count = field.coeffs.size();
    const std::size_t half = count / 2;
    double partial_half = 0.0;
    double sum = 0.0;
    double magnitude = 0.0;
    std::size_t upper_nonzero = 0;
    for (std::size_t n = 1; n <= count; ++n) {
        const double c = field.coeffs[n - 1];
        if (c != 0.0) {
            if (n > half) ++upper_nonzero;
            const double term = std::pow(field.op->eigenvalue(n), power) * c * field.op->phi(n, x0);
            sum += term;
            magnitude += std::abs(term);
        }
        if (n == half) partial_half = sum;
    }
    require(std::isfinite(sum), Errc::non_finite, "mode sum is not finite");
    // a field with only a few modes in the upper half is a finite sine sum
    // (nothing truncated), so the partial-sum test does not apply
    const bool finite_expansion = 4 * upper_nonzero < count - half;
    if (half > 0 && !finite_expansion) {
        const double change = std::abs(sum - partial_half);
        const bool negligible = change <= 1e-13 * magnitude;
        require(negligible || change <= 1e-4 * std::abs(sum), Errc::divergent_series,
                "mode sum of L^" + std::to_string(power) +
                    " h(x0) has not converged over the retained modes (relative change " +
                    std::to_string(sum != 0.0 ? change / std::abs(sum) : change) + ")");
    }
    return sum;
}

double apply_l_at_point(const FieldCoefficients& field, double x0) { return apply_l_power_at_point(field, x0, 1); }

std::optional<std::size_t> KappaMatching::theta(std::size_t n) const {
    const auto it = std::lower_bound(m_set.begin(), m_set.end(), n);
    if (it == m_set.end() || *it != n) return std::nullopt;
    return m_prime_set[static_cast<std::size_t>(it - m_set.begin())];
}

std::optional<std::size_t> KappaMatching::theta_inverse(std::size_t n_prime) const {
    // m_prime_set is increasing as well: theta preserves order
    const auto it = std::lower_bound(m_prime_set.begin(), m_prime_set.end(), n_prime);
    if (it == m_prime_set.end() || *it != n_prime) return std::nullopt;
    return m_set[static_cast<std::size_t>(it - m_prime_set.begin())];
}

double default_kappa_tolerance(const SpectralOperator& op) {
    return op.source() == OperatorSource::analytic_dirichlet_laplacian ? kKappaTolAnalytic : kKappaTolDiscretized;
}

KappaMatching kappa_match(const SpectralOperator& op, double kappa, double tol) {
    require(std::isfinite(kappa) && kappa > 0.0, Errc::invalid_argument, "kappa must be positive");
    require(std::isfinite(tol) && tol >= 0.0, Errc::invalid_argument, "tolerance must be non-negative");
    KappaMatching match;
    match.kappa = kappa;
    const auto& lambda = op.eigenvalues();
    for (std::size_t n = 1; n <= lambda.size(); ++n) {
        const double target = lambda[n - 1];
        const double window = tol * std::abs(target);
        // candidates n' with |lambda_n - kappa lambda_n'| <= window
        const double lo = (target - window) / kappa;
        const double hi = (target + window) / kappa;
        auto first = std::lower_bound(lambda.begin(), lambda.end(), lo);
        std::optional<std::size_t> found;
        for (auto it = first; it != lambda.end() && *it <= hi; ++it) {
            const auto n_prime = static_cast<std::size_t>(it - lambda.begin()) + 1;
            if (std::abs(target - kappa * *it) > window) continue;
            require(!found.has_value(), Errc::ambiguous_match,
                    "mode " + std::to_string(n) + " matches several eigenvalues; tolerance too loose");
            found = n_prime;
        }
        if (found) {
            match.m_set.push_back(n);
            match.m_prime_set.push_back(*found);
        }
    }
    match.in_sigma = !match.m_set.empty();
    return match;
}

}  // namespace fracdiff
