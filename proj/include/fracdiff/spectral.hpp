#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace fracdiff {

enum class OperatorSource { analytic_dirichlet_laplacian, discretized };

// Eigen-decomposition of a symmetric elliptic operator on an interval with
// homogeneous Dirichlet boundary conditions. Immutable after construction.
//
// Modes are numbered 1..mode_count() in the public interface (mode n has
// eigenvalue eigenvalues()[n - 1]); eigenvalues are strictly increasing and
// nonzero.
class SpectralOperator {
public:
    [[nodiscard]] const std::vector<double>& eigenvalues() const noexcept { return lambda_; }
    [[nodiscard]] double eigenvalue(std::size_t n) const { return lambda_.at(n - 1); }
    [[nodiscard]] std::size_t mode_count() const noexcept { return lambda_.size(); }
    [[nodiscard]] double x_lo() const noexcept { return 0.0; }
    [[nodiscard]] double x_hi() const noexcept { return length_; }
    [[nodiscard]] double length() const noexcept { return length_; }
    [[nodiscard]] OperatorSource source() const noexcept { return source_; }

    // Orthonormal eigenfunction phi_n(x), n >= 1. Discretized operators
    // interpolate linearly between grid nodes.
    [[nodiscard]] double phi(std::size_t n, double x) const;

    // Quadrature grid (including both boundary nodes) and trapezoidal weights.
    [[nodiscard]] const std::vector<double>& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    // phi_n sampled on grid()
    [[nodiscard]] std::vector<double> phi_on_grid(std::size_t n) const;

    // Discretized operators only: the tridiagonal matrix (interior nodes).
    [[nodiscard]] const std::vector<double>& tridiag_diagonal() const noexcept { return diag_; }
    [[nodiscard]] const std::vector<double>& tridiag_offdiagonal() const noexcept { return offdiag_; }

    friend SpectralOperator dirichlet_laplacian(double length, std::size_t n_modes);
    friend SpectralOperator discretize_symmetric(std::span<const double> diffusion,
                                                 std::span<const double> potential,
                                                 std::size_t grid_points, double length);

private:
    SpectralOperator() = default;

    OperatorSource source_ = OperatorSource::analytic_dirichlet_laplacian;
    double length_ = 0.0;
    std::vector<double> lambda_;
    std::vector<double> grid_;
    std::vector<double> weights_;
    // discretized: phi_n at grid nodes, mode-major, boundary zeros included
    std::vector<double> samples_;
    std::vector<double> diag_;
    std::vector<double> offdiag_;
};

using OperatorPtr = std::shared_ptr<const SpectralOperator>;

// -d^2/dx^2 on (0, length): lambda_n = (n pi / length)^2,
// phi_n(x) = sqrt(2 / length) sin(n pi x / length). The quadrature grid has
// 2 n_modes + 1 uniform nodes, on which the trapezoidal rule integrates
// products of retained modes exactly.
SpectralOperator dirichlet_laplacian(double length, std::size_t n_modes);

// Second-order finite differences for -(a u')' + c u with Dirichlet ends.
// `diffusion` and `potential` are sampled on the grid_points uniform nodes of
// [0, length] (boundary nodes included).
SpectralOperator discretize_symmetric(std::span<const double> diffusion, std::span<const double> potential,
                                      std::size_t grid_points, double length);

// Spectral coefficients c_n = (h, phi_n) of a spatial field h.
struct FieldCoefficients {
    std::vector<double> coeffs;
    OperatorPtr op;

    [[nodiscard]] bool is_zero() const;
    // h(x) reconstructed from the retained modes
    [[nodiscard]] double value_at(double x) const;
    // c_n phi_n(x0), the pointwise projection P_n h(x0) for simple eigenvalues
    [[nodiscard]] std::vector<double> pointwise_projections(double x0) const;
};

FieldCoefficients zero_field(OperatorPtr op);

// Coefficients from explicit values (length must equal mode_count).
FieldCoefficients field_from_coeffs(std::vector<double> coeffs, OperatorPtr op);

// Quadrature projection of samples given on op->grid().
FieldCoefficients project(std::span<const double> field_samples, OperatorPtr op);

// Projection of a callable (sampled on the operator grid).
FieldCoefficients project_function(const std::function<double(double)>& field, OperatorPtr op);

// A single term amplitude * sin(wavenumber * x) of the field mini-language.
struct SineTerm {
    double amplitude = 0.0;
    double wavenumber = 1.0;
};

// Sum of sine terms. Exact coefficients when a term is an analytic
// eigenfunction, quadrature otherwise.
FieldCoefficients sine_field(std::span<const SineTerm> terms, OperatorPtr op);

// (L h)(x0) = sum_n lambda_n c_n phi_n(x0). Fails when the partial sums over
// the first half and all retained modes differ by more than 1e-4 relative.
// Fields with nonzero coefficients on fewer than a quarter of the upper-half
// modes count as finite sine sums and skip that test.
double apply_l_at_point(const FieldCoefficients& field, double x0);

// (L^k h)(x0) with the same divergence check.
double apply_l_power_at_point(const FieldCoefficients& field, double x0, int power);

// Eigenvalue-ratio matching lambda_n = kappa * lambda_theta(n).
struct KappaMatching {
    double kappa = 1.0;
    std::vector<std::size_t> m_set;        // n with lambda_n in kappa * sigma(L)
    std::vector<std::size_t> m_prime_set;  // theta(n), same order as m_set
    bool in_sigma = false;

    [[nodiscard]] std::optional<std::size_t> theta(std::size_t n) const;
    [[nodiscard]] std::optional<std::size_t> theta_inverse(std::size_t n_prime) const;
    [[nodiscard]] bool in_m_set(std::size_t n) const { return theta(n).has_value(); }
    [[nodiscard]] bool in_m_prime_set(std::size_t n_prime) const { return theta_inverse(n_prime).has_value(); }
};

inline constexpr double kKappaTolAnalytic = 1e-9;
inline constexpr double kKappaTolDiscretized = 1e-6;

double default_kappa_tolerance(const SpectralOperator& op);

KappaMatching kappa_match(const SpectralOperator& op, double kappa, double tol);

}  // namespace fracdiff
