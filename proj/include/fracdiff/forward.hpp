#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracdiff/spectral.hpp"

namespace fracdiff {

using cplx = std::complex<double>;

// sum_j q_j d_t^{alpha_j} u + L u = rho(t) f with Dirichlet ends.
struct MultiTermModel {
    std::vector<double> orders;  // strictly decreasing, in (0, 1)
    std::vector<double> coeffs;  // q_j > 0
    OperatorPtr op;

    [[nodiscard]] std::size_t terms() const noexcept { return orders.size(); }
    void validate() const;
};

enum class ProfileKind { none, power_law, sampled };

// Temporal factor rho(t) of the source term.
struct SourceTemporalProfile {
    ProfileKind kind = ProfileKind::none;
    double mu = 0.0;     // power law: rho(t) = scale * t^mu, mu > -1
    double scale = 1.0;
    std::vector<double> sample_times;   // sampled: piecewise linear, zero outside
    std::vector<double> sample_values;

    static SourceTemporalProfile none();
    static SourceTemporalProfile power_law(double mu, double scale = 1.0);
    static SourceTemporalProfile sampled(std::vector<double> times, std::vector<double> values);

    void validate() const;
    [[nodiscard]] double value(double t) const;
    // Laplace transform; for sampled profiles the exact transform of the
    // piecewise linear interpolant with zero extension.
    [[nodiscard]] cplx laplace(cplx p) const;
};

enum class TraceProvenance { laplace, ml_closed_form, l1_scheme, synthetic };

std::string provenance_name(TraceProvenance p);

struct ObservationTrace {
    double x0 = 0.0;
    std::vector<double> times;
    std::vector<double> values;
    TraceProvenance meta = TraceProvenance::synthetic;
    // largest per-sample truncation estimate (solve_trace only)
    double truncation_estimate = 0.0;

    void validate() const;
};

enum class TransferKind { homogeneous, source };

struct ModalTransfer {
    const MultiTermModel* model = nullptr;
    std::size_t mode = 1;  // 1-based
    TransferKind kind = TransferKind::homogeneous;
};

double symbol_z(const MultiTermModel& model, double p);
cplx symbol_z(const MultiTermModel& model, cplx p);

// Laplace transform of the n-th modal amplitude. rho_hat must be supplied
// exactly when kind == source.
double modal_laplace_hat(const ModalTransfer& transfer, double coeff, double p,
                         std::optional<double> rho_hat = std::nullopt);

// Bromwich integral along the optimized cotangent (Talbot-type) contour
// s(theta) = N/t (-0.6122 + 0.5017 theta cot(0.6407 theta) + 0.2645 i theta)
// with the midpoint rule in theta. F must satisfy F(conj p) = conj F(p);
// only the upper half of the contour is evaluated.
inline constexpr int kDefaultContourNodes = 48;

double invert_laplace(const std::function<cplx(cplx)>& transform, double t, int contour_nodes = kDefaultContourNodes);

struct SolveOptions {
    int contour_nodes = kDefaultContourNodes;
    // use the Talbot path even when the Mittag-Leffler closed form applies
    bool force_contour = false;
    // error when the truncation estimate exceeds this fraction of max |u|
    double truncation_tolerance = 1e-6;
};

// u(x0, t_k) from the modal Laplace-domain representation. Initial data and
// source may both be nonzero (superposition).
ObservationTrace solve_trace(const MultiTermModel& model, const FieldCoefficients& initial,
                             const FieldCoefficients& source_spatial, const SourceTemporalProfile& source_temporal,
                             double x0, std::span<const double> times, const SolveOptions& options = {});

struct L1Options {
    double dt = 1e-3;
    double t_end = 1.0;
    // rerun at 2 dt and flag the step as too coarse above 1e-2 relative change
    bool check_coarseness = true;
    double coarseness_tolerance = 1e-2;
};

// Implicit L1 time stepping. The model operator must be discretized; the
// samples live on its grid. Output at `times` (<= t_end) by linear
// interpolation between steps.
//
// solve_l1_scheme works on grid values (one tridiagonal solve per step);
// solve_l1_modal runs the identical scheme in the discrete eigenbasis, where
// each step is diagonal and modes with negligible data are skipped.
ObservationTrace solve_l1_scheme(const MultiTermModel& model, std::span<const double> initial_samples,
                                 std::span<const double> source_samples,
                                 const SourceTemporalProfile& source_temporal, double x0,
                                 std::span<const double> times, const L1Options& options);

ObservationTrace solve_l1_modal(const MultiTermModel& model, std::span<const double> initial_samples,
                                std::span<const double> source_samples, const SourceTemporalProfile& source_temporal,
                                double x0, std::span<const double> times, const L1Options& options);

// Combined L1 weights W_k = sum_j q_j dt^{-alpha_j} b_k^{(alpha_j)}, k < count.
std::vector<double> l1_weights(const MultiTermModel& model, double dt, std::size_t count);

// Worker count from FRACDIFF_THREADS (default 1).
unsigned worker_threads();

}  // namespace fracdiff
