#include "fracdiff/forward.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

#include "fracdiff/error.hpp"
#include "fracdiff/mittag_leffler.hpp"
#include "parallel.hpp"

namespace fracdiff {
namespace {

constexpr double kPi = std::numbers::pi;

void check_times(std::span<const double> times) {
    for (std::size_t i = 0; i < times.size(); ++i) {
        require(std::isfinite(times[i]), Errc::non_finite, "sample time is not finite");
        require(times[i] >= 0.0, Errc::invalid_argument, "sample times must be non-negative");
        if (i > 0) require(times[i] > times[i - 1], Errc::invalid_argument, "sample times must be strictly increasing");
    }
}

void check_interior(const SpectralOperator& op, double x0) {
    require(std::isfinite(x0), Errc::non_finite, "monitoring point is not finite");
    require(x0 > op.x_lo() && x0 < op.x_hi(), Errc::invalid_argument,
            "monitoring point must lie strictly inside the domain");
}

void check_field(const FieldCoefficients& field, const MultiTermModel& model, const char* what) {
    require(field.op != nullptr, Errc::invalid_argument, std::string(what) + " has no operator");
    require(field.coeffs.size() == model.op->mode_count(), Errc::grid_mismatch,
            std::string(what) + " coefficient count differs from the model operator");
    require(field.op == model.op || field.op->eigenvalues() == model.op->eigenvalues(), Errc::grid_mismatch,
            std::string(what) + " was projected on a different operator");
}

// Same sparsity rule as the mode-sum convergence test: only fields that fill
// the upper half of the retained modes carry a truncation tail.
bool is_dense(const std::vector<double>& coeffs) {
    const std::size_t half = coeffs.size() / 2;
    std::size_t upper = 0;
    for (std::size_t n = half; n < coeffs.size(); ++n)
        if (coeffs[n] != 0.0) ++upper;
    return 4 * upper >= coeffs.size() - half && half > 0;
}

struct ModeTerm {
    double lambda;
    double weight;  // coefficient times phi_n(x0)
    bool upper;     // in the upper half of the retained modes
};

std::vector<ModeTerm> active_modes(const FieldCoefficients& field, double x0) {
    std::vector<ModeTerm> out;
    const std::size_t half = field.coeffs.size() / 2;
    for (std::size_t n = 1; n <= field.coeffs.size(); ++n) {
        const double c = field.coeffs[n - 1];
        if (c == 0.0) continue;
        out.push_back({field.op->eigenvalue(n), c * field.op->phi(n, x0), n > half});
    }
    return out;
}

// Contour nodes on the upper half: s_k, ds/dtheta, for t = 1 (scale by 1/t).
struct ContourNode {
    cplx s;
    cplx ds;
};

std::vector<ContourNode> contour_nodes(int nodes) {
    constexpr double kShift = -0.6122;
    constexpr double kCot = 0.5017;
    constexpr double kCotFreq = 0.6407;
    constexpr double kImag = 0.2645;
    const double n = static_cast<double>(nodes);
    const double h = 2.0 * kPi / n;
    std::vector<ContourNode> out;
    for (int k = 0; k < nodes / 2; ++k) {
        const double theta = (k + 0.5) * h;
        const double at = kCotFreq * theta;
        const double cot = std::cos(at) / std::sin(at);
        const double sn = std::sin(at);
        const cplx s = n * cplx(kShift + kCot * theta * cot, kImag * theta);
        const cplx ds = n * cplx(kCot * (cot - at / (sn * sn)), kImag);
        out.push_back({s, ds});
    }
    return out;
}

// Inverts several transforms sharing the same contour. eval(s, out) fills
// out[0..K). Returns false when the sum is not finite.
template <std::size_t K, class Eval>
bool talbot_multi(double t, int nodes, Eval&& eval, std::array<double, K>& result) {
    std::array<double, K> acc{};
    std::array<cplx, K> vals;
    for (const auto& node : contour_nodes(nodes)) {
        const cplx s = node.s / t;
        const cplx ds = node.ds / t;
        eval(s, vals);
        const cplx factor = std::exp(s * t) * ds;
        for (std::size_t i = 0; i < K; ++i) acc[i] += (factor * vals[i]).imag();
    }
    bool finite = true;
    for (std::size_t i = 0; i < K; ++i) {
        result[i] = 2.0 / nodes * acc[i];
        finite = finite && std::isfinite(result[i]);
    }
    return finite;
}

}  // namespace

unsigned worker_threads() {
    const char* env = std::getenv("FRACDIFF_THREADS");
    if (env == nullptr) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<unsigned>(std::min<long>(v, 256));
}

void MultiTermModel::validate() const {
    require(op != nullptr, Errc::invalid_argument, "model has no operator");
    require(!orders.empty(), Errc::invalid_argument, "model needs at least one fractional term");
    require(orders.size() == coeffs.size(), Errc::invalid_argument, "orders and coefficients differ in length");
    for (std::size_t j = 0; j < orders.size(); ++j) {
        require(std::isfinite(orders[j]) && std::isfinite(coeffs[j]), Errc::non_finite, "model parameter is not finite");
        require(orders[j] > 0.0 && orders[j] < 1.0, Errc::invalid_argument, "orders must lie in (0, 1)");
        require(coeffs[j] > 0.0, Errc::invalid_argument, "coefficients must be positive");
        if (j > 0) require(orders[j] < orders[j - 1], Errc::invalid_argument, "orders must be strictly decreasing");
    }
}

SourceTemporalProfile SourceTemporalProfile::none() { return {}; }

SourceTemporalProfile SourceTemporalProfile::power_law(double mu, double scale) {
    SourceTemporalProfile p;
    p.kind = ProfileKind::power_law;
    p.mu = mu;
    p.scale = scale;
    p.validate();
    return p;
}

SourceTemporalProfile SourceTemporalProfile::sampled(std::vector<double> times, std::vector<double> values) {
    SourceTemporalProfile p;
    p.kind = ProfileKind::sampled;
    p.sample_times = std::move(times);
    p.sample_values = std::move(values);
    p.validate();
    return p;
}

void SourceTemporalProfile::validate() const {
    switch (kind) {
        case ProfileKind::none: return;
        case ProfileKind::power_law:
            require(std::isfinite(mu) && std::isfinite(scale), Errc::non_finite, "source profile is not finite");
            require(mu > -1.0, Errc::invalid_argument, "power-law exponent mu must exceed -1");
            return;
        case ProfileKind::sampled:
            require(sample_times.size() >= 2 && sample_times.size() == sample_values.size(), Errc::invalid_argument,
                    "sampled profile needs at least two (time, value) pairs");
            check_times(sample_times);
            for (double v : sample_values) require(std::isfinite(v), Errc::non_finite, "profile sample is not finite");
            return;
    }
}

double SourceTemporalProfile::value(double t) const {
    switch (kind) {
        case ProfileKind::none: return 0.0;
        case ProfileKind::power_law: return t > 0.0 ? scale * std::pow(t, mu) : (mu == 0.0 ? scale : 0.0);
        case ProfileKind::sampled: {
            if (t < sample_times.front() || t > sample_times.back()) return 0.0;
            const auto it = std::upper_bound(sample_times.begin(), sample_times.end(), t);
            if (it == sample_times.end()) return sample_values.back();
            const auto i = static_cast<std::size_t>(it - sample_times.begin()) - 1;
            const double w = (t - sample_times[i]) / (sample_times[i + 1] - sample_times[i]);
            return (1.0 - w) * sample_values[i] + w * sample_values[i + 1];
        }
    }
    return 0.0;
}

cplx SourceTemporalProfile::laplace(cplx p) const {
    switch (kind) {
        case ProfileKind::none: return 0.0;
        case ProfileKind::power_law: return scale * gamma_fn(mu + 1.0) * std::pow(p, -mu - 1.0);
        case ProfileKind::sampled: {
            // exact transform of each linear piece; series for small |p h|
            cplx total = 0.0;
            for (std::size_t i = 0; i + 1 < sample_times.size(); ++i) {
                const double t0 = sample_times[i];
                const double h = sample_times[i + 1] - t0;
                const double slope = (sample_values[i + 1] - sample_values[i]) / h;
                const cplx x = p * h;
                cplx phi1, phi2;
                if (std::abs(x) < 1e-3) {
                    phi1 = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
                    phi2 = 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0;
                } else {
                    const cplx e = std::exp(-x);
                    phi1 = (1.0 - e) / x;
                    phi2 = (1.0 - e * (1.0 + x)) / (x * x);
                }
                total += std::exp(-p * t0) * (sample_values[i] * h * phi1 + slope * h * h * phi2);
            }
            return total;
        }
    }
    return 0.0;
}

std::string provenance_name(TraceProvenance p) {
    switch (p) {
        case TraceProvenance::laplace: return "laplace";
        case TraceProvenance::ml_closed_form: return "ml-closed-form";
        case TraceProvenance::l1_scheme: return "l1-scheme";
        case TraceProvenance::synthetic: return "synthetic";
    }
    return "unknown";
}

void ObservationTrace::validate() const {
    require(std::isfinite(x0), Errc::non_finite, "trace monitoring point is not finite");
    require(times.size() == values.size(), Errc::invalid_argument, "trace times and values differ in length");
    check_times(times);
    for (double v : values) require(std::isfinite(v), Errc::non_finite, "trace value is not finite");
}

double symbol_z(const MultiTermModel& model, double p) {
    model.validate();
    require(std::isfinite(p) && p > 0.0, Errc::invalid_argument, "symbol needs p > 0");
    double z = 0.0;
    for (std::size_t j = 0; j < model.terms(); ++j) z += model.coeffs[j] * std::pow(p, model.orders[j]);
    return z;
}

cplx symbol_z(const MultiTermModel& model, cplx p) {
    cplx z = 0.0;
    for (std::size_t j = 0; j < model.terms(); ++j) z += model.coeffs[j] * std::pow(p, model.orders[j]);
    return z;
}

double modal_laplace_hat(const ModalTransfer& transfer, double coeff, double p, std::optional<double> rho_hat) {
    require(transfer.model != nullptr, Errc::invalid_argument, "transfer has no model");
    const auto& model = *transfer.model;
    const double z = symbol_z(model, p);
    const double lambda = model.op->eigenvalue(transfer.mode);
    require(transfer.kind == TransferKind::source || !rho_hat.has_value(), Errc::invalid_argument,
            "rho_hat is only used by source transfers");
    require(transfer.kind == TransferKind::homogeneous || rho_hat.has_value(), Errc::invalid_argument,
            "source transfer needs rho_hat");
    const double den = lambda + z;
    require(std::abs(den) > 1e-300, Errc::non_finite, "transfer denominator lambda_n + z(p) vanishes");
    if (transfer.kind == TransferKind::homogeneous) return coeff * z / (p * den);
    return *rho_hat * coeff / den;
}

double invert_laplace(const std::function<cplx(cplx)>& transform, double t, int contour_nodes) {
    require(std::isfinite(t) && t > 0.0, Errc::invalid_argument, "inversion time must be positive");
    require(contour_nodes >= 16 && contour_nodes % 2 == 0, Errc::invalid_argument,
            "contour needs an even node count of at least 16");
    std::array<double, 1> out{};
    const bool ok = talbot_multi<1>(t, contour_nodes, [&](cplx s, std::array<cplx, 1>& v) { v[0] = transform(s); },
                                    out);
    require(ok, Errc::contour_failure, "contour quadrature is not finite at t = " + std::to_string(t));
    return out[0];
}

ObservationTrace solve_trace(const MultiTermModel& model, const FieldCoefficients& initial,
                             const FieldCoefficients& source_spatial, const SourceTemporalProfile& source_temporal,
                             double x0, std::span<const double> times, const SolveOptions& options) {
    model.validate();
    check_field(initial, model, "initial value");
    check_field(source_spatial, model, "source profile");
    source_temporal.validate();
    check_interior(*model.op, x0);
    check_times(times);
    require(options.contour_nodes >= 16 && options.contour_nodes % 2 == 0, Errc::invalid_argument,
            "contour needs an even node count of at least 16");

    const auto hom = active_modes(initial, x0);
    const bool source_on = source_temporal.kind != ProfileKind::none && !source_spatial.is_zero();
    const auto src = source_on ? active_modes(source_spatial, x0) : std::vector<ModeTerm>{};
    const bool track_upper = is_dense(initial.coeffs) || (source_on && is_dense(source_spatial.coeffs));

    double a_x0 = 0.0, a_upper = 0.0;
    for (const auto& m : hom) {
        a_x0 += m.weight;
        if (m.upper) a_upper += m.weight;
    }

    ObservationTrace trace;
    trace.x0 = x0;
    trace.times.assign(times.begin(), times.end());
    trace.values.assign(times.size(), 0.0);
    std::vector<double> upper(times.size(), 0.0);

    const bool closed_form = model.terms() == 1 && !source_on && !options.force_contour;
    trace.meta = closed_form ? TraceProvenance::ml_closed_form : TraceProvenance::laplace;

    if (closed_form) {
        const MlParams params{model.orders[0], 1.0};
        const double q = model.coeffs[0];
        parallel_for(times.size(), [&](std::size_t i) {
            const double t = times[i];
            if (t == 0.0) {
                trace.values[i] = a_x0;
                upper[i] = a_upper;
                return;
            }
            const double ta = std::pow(t, params.alpha);
            double sum = 0.0, up = 0.0;
            for (const auto& m : hom) {
                const double v = m.weight * ml_eval(params, -m.lambda * ta / q);
                sum += v;
                if (m.upper) up += v;
            }
            trace.values[i] = sum;
            upper[i] = up;
        });
    } else {
        parallel_for(times.size(), [&](std::size_t i) {
            const double t = times[i];
            if (t == 0.0) {
                trace.values[i] = a_x0;
                upper[i] = a_upper;
                return;
            }
            // Slowly relaxing modes (lambda t^alpha_1 / q_1 <= 1) are inverted as
            // the deviation -a_n lambda_n / (p (lambda_n + z)) with a_n added back
            // exactly; the others directly as a_n z / (p (lambda_n + z)). Either
            // way the contour error is relative to the smaller quantity.
            const double split = model.coeffs[0] / std::pow(t, model.orders[0]);
            double base = 0.0, base_upper = 0.0;
            for (const auto& m : hom) {
                if (m.lambda > split) continue;
                base += m.weight;
                if (m.upper) base_upper += m.weight;
            }
            auto eval = [&](cplx s, std::array<cplx, 2>& v) {
                const cplx z = symbol_z(model, s);
                cplx all = 0.0, up = 0.0;
                for (const auto& m : hom) {
                    const cplx term = m.lambda > split ? m.weight * z / (s * (m.lambda + z))
                                                       : -m.weight * m.lambda / (s * (m.lambda + z));
                    all += term;
                    if (m.upper) up += term;
                }
                if (!src.empty()) {
                    const cplx rho = source_temporal.laplace(s);
                    for (const auto& m : src) {
                        const cplx term = rho * m.weight / (m.lambda + z);
                        all += term;
                        if (m.upper) up += term;
                    }
                }
                v[0] = all;
                v[1] = up;
            };
            std::array<double, 2> out{};
            int nodes = options.contour_nodes;
            bool ok = false;
            for (int attempt = 0; attempt < 3 && !ok; ++attempt, nodes *= 2) ok = talbot_multi<2>(t, nodes, eval, out);
            require(ok, Errc::contour_failure, "contour quadrature is not finite at t = " + std::to_string(t));
            trace.values[i] = base + out[0];
            upper[i] = base_upper + out[1];
        });
    }

    double peak = 0.0;
    for (double v : trace.values) peak = std::max(peak, std::abs(v));
    if (track_upper) {
        for (double u : upper) trace.truncation_estimate = std::max(trace.truncation_estimate, std::abs(u));
        require(trace.truncation_estimate <= options.truncation_tolerance * peak, Errc::truncation_error,
                "upper-half modes carry " + std::to_string(trace.truncation_estimate) +
                    " of the trace, above the truncation tolerance; retain more modes");
    }
    trace.validate();
    return trace;
}

std::vector<double> l1_weights(const MultiTermModel& model, double dt, std::size_t count) {
    model.validate();
    require(std::isfinite(dt) && dt > 0.0, Errc::invalid_argument, "time step must be positive");
    std::vector<double> w(count, 0.0);
    for (std::size_t j = 0; j < model.terms(); ++j) {
        const double a = model.orders[j];
        const double factor = model.coeffs[j] * std::pow(dt, -a) * rgamma(2.0 - a);
        double prev = 0.0;  // k^{1-a}
        for (std::size_t k = 0; k < count; ++k) {
            const double next = std::pow(static_cast<double>(k + 1), 1.0 - a);
            w[k] += factor * (next - prev);
            prev = next;
        }
    }
    return w;
}

namespace {

// sum_{k=1}^{n-1} w[k] d[n-k] with four partial sums
double history_dot(const double* w, const double* d, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 1;
    for (; k + 3 < n; k += 4) {
        s0 += w[k] * d[n - k];
        s1 += w[k + 1] * d[n - k - 1];
        s2 += w[k + 2] * d[n - k - 2];
        s3 += w[k + 3] * d[n - k - 3];
    }
    for (; k < n; ++k) s0 += w[k] * d[n - k];
    return (s0 + s1) + (s2 + s3);
}

struct L1Setup {
    std::size_t steps;
    double dt;
};

L1Setup l1_setup(double dt, double t_end) {
    require(std::isfinite(dt) && dt > 0.0, Errc::invalid_argument, "time step must be positive");
    require(std::isfinite(t_end) && t_end > 0.0, Errc::invalid_argument, "final time must be positive");
    const double raw = t_end / dt;
    const auto steps = static_cast<std::size_t>(std::llround(raw));
    require(steps >= 1, Errc::invalid_argument, "final time is shorter than one time step");
    return {steps, t_end / static_cast<double>(steps)};
}

// Values at `times` from the per-step series by linear interpolation.
std::vector<double> sample_series(const std::vector<double>& series, double dt, std::span<const double> times) {
    std::vector<double> out(times.size());
    const std::size_t last = series.size() - 1;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double pos = times[i] / dt;
        auto k = static_cast<std::size_t>(std::floor(pos));
        if (k >= last) {
            out[i] = series[last];
            continue;
        }
        const double w = pos - static_cast<double>(k);
        out[i] = w < 1e-9 ? series[k] : (1.0 - w) * series[k] + w * series[k + 1];
    }
    return out;
}

void check_l1_inputs(const MultiTermModel& model, std::span<const double> initial_samples,
                     std::span<const double> source_samples, const SourceTemporalProfile& source_temporal, double x0,
                     std::span<const double> times, const L1Options& options) {
    model.validate();
    require(model.op->source() == OperatorSource::discretized, Errc::grid_mismatch,
            "the L1 scheme needs a discretized operator");
    const std::size_t points = model.op->grid().size();
    require(initial_samples.size() == points && source_samples.size() == points, Errc::grid_mismatch,
            "initial and source samples must lie on the operator grid");
    for (double v : initial_samples) require(std::isfinite(v), Errc::non_finite, "initial sample is not finite");
    for (double v : source_samples) require(std::isfinite(v), Errc::non_finite, "source sample is not finite");
    source_temporal.validate();
    check_interior(*model.op, x0);
    check_times(times);
    require(times.empty() || times.back() <= options.t_end * (1.0 + 1e-12), Errc::invalid_argument,
            "output times beyond the final time");
}

// u(x0) by linear interpolation of grid values (boundary zeros included).
double grid_value_at(const SpectralOperator& op, const std::vector<double>& interior, double x0) {
    const std::size_t points = op.grid().size();
    const double h = op.length() / static_cast<double>(points - 1);
    const double pos = x0 / h;
    const auto i = std::min(static_cast<std::size_t>(pos), points - 2);
    const double frac = pos - static_cast<double>(i);
    auto node = [&](std::size_t j) { return (j == 0 || j == points - 1) ? 0.0 : interior[j - 1]; };
    return (1.0 - frac) * node(i) + frac * node(i + 1);
}

std::vector<double> l1_grid_series(const MultiTermModel& model, std::span<const double> initial_samples,
                                   std::span<const double> source_samples,
                                   const SourceTemporalProfile& source_temporal, double x0, double dt_req,
                                   double t_end, double& dt_used) {
    const auto setup = l1_setup(dt_req, t_end);
    dt_used = setup.dt;
    const auto& op = *model.op;
    const auto& diag = op.tridiag_diagonal();
    const auto& off = op.tridiag_offdiagonal();
    const std::size_t m = diag.size();
    const auto w = l1_weights(model, setup.dt, setup.steps + 1);

    // Thomas factorization of W_0 I + A (constant in time)
    std::vector<double> cprime(m, 0.0), denom(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double lower = i > 0 ? off[i - 1] : 0.0;
        const double d = w[0] + diag[i] - (i > 0 ? lower * cprime[i - 1] : 0.0);
        require(std::abs(d) > 1e-300 && std::isfinite(d), Errc::linear_solve_failure,
                "tridiagonal solve broke down (zero pivot)");
        denom[i] = d;
        if (i + 1 < m) cprime[i] = off[i] / d;
    }

    std::vector<double> u(initial_samples.begin() + 1, initial_samples.end() - 1);
    std::vector<double> f(source_samples.begin() + 1, source_samples.end() - 1);
    // delta history, step-major: delta[(n - 1) * m + i] = u_i^n - u_i^{n-1}
    std::vector<double> delta(setup.steps * m, 0.0);
    std::vector<double> rhs(m), hist(m);
    std::vector<double> series(setup.steps + 1);
    series[0] = grid_value_at(op, u, x0);

    for (std::size_t n = 1; n <= setup.steps; ++n) {
        std::fill(hist.begin(), hist.end(), 0.0);
        for (std::size_t k = 1; k < n; ++k) {
            const double wk = w[k];
            const double* d = delta.data() + (n - k - 1) * m;
            for (std::size_t i = 0; i < m; ++i) hist[i] += wk * d[i];
        }
        const double rho = source_temporal.value(static_cast<double>(n) * setup.dt);
        for (std::size_t i = 0; i < m; ++i) rhs[i] = w[0] * u[i] - hist[i] + rho * f[i];
        // forward sweep and back substitution
        for (std::size_t i = 0; i < m; ++i) {
            const double lower = i > 0 ? off[i - 1] : 0.0;
            rhs[i] = (rhs[i] - (i > 0 ? lower * rhs[i - 1] : 0.0)) / denom[i];
        }
        for (std::size_t i = m; i-- > 1;) rhs[i - 1] -= cprime[i - 1] * rhs[i];
        double* dn = delta.data() + (n - 1) * m;
        for (std::size_t i = 0; i < m; ++i) {
            require(std::isfinite(rhs[i]), Errc::linear_solve_failure, "L1 step produced a non-finite value");
            dn[i] = rhs[i] - u[i];
            u[i] = rhs[i];
        }
        series[n] = grid_value_at(op, u, x0);
    }
    return series;
}

std::vector<double> l1_modal_series(const MultiTermModel& model, std::span<const double> initial_samples,
                                    std::span<const double> source_samples,
                                    const SourceTemporalProfile& source_temporal, double x0, double dt_req,
                                    double t_end, double& dt_used) {
    const auto setup = l1_setup(dt_req, t_end);
    dt_used = setup.dt;
    const auto a = project(initial_samples, model.op);
    const auto f = project(source_samples, model.op);
    double amax = 0.0, fmax = 0.0;
    for (double c : a.coeffs) amax = std::max(amax, std::abs(c));
    for (double c : f.coeffs) fmax = std::max(fmax, std::abs(c));
    const bool source_on = source_temporal.kind != ProfileKind::none;
    // projections of a discrete eigenvector onto the others come out near
    // 1e-12 (eigensolver accuracy); those modes are noise
    constexpr double kModeCutoff = 1e-10;

    struct Mode {
        double lambda, a, f, phi;
    };
    std::vector<Mode> modes;
    for (std::size_t n = 1; n <= model.op->mode_count(); ++n) {
        const double an = std::abs(a.coeffs[n - 1]) > kModeCutoff * amax ? a.coeffs[n - 1] : 0.0;
        const double fn = source_on && std::abs(f.coeffs[n - 1]) > kModeCutoff * fmax ? f.coeffs[n - 1] : 0.0;
        if (an == 0.0 && fn == 0.0) continue;
        modes.push_back({model.op->eigenvalue(n), an, fn, model.op->phi(n, x0)});
    }

    const auto w = l1_weights(model, setup.dt, setup.steps + 1);
    std::vector<double> series(setup.steps + 1, 0.0);
    std::vector<double> delta(setup.steps + 1, 0.0);
    for (const auto& mode : modes) {
        double u = mode.a;
        series[0] += u * mode.phi;
        const double pivot = w[0] + mode.lambda;
        require(std::abs(pivot) > 1e-300, Errc::linear_solve_failure, "L1 modal step has a zero pivot");
        for (std::size_t n = 1; n <= setup.steps; ++n) {
            const double hist = history_dot(w.data(), delta.data(), n);
            const double rho = mode.f == 0.0 ? 0.0 : source_temporal.value(static_cast<double>(n) * setup.dt);
            const double next = (w[0] * u - hist + rho * mode.f) / pivot;
            delta[n] = next - u;
            u = next;
            series[n] += u * mode.phi;
        }
        require(std::isfinite(u), Errc::linear_solve_failure, "L1 modal recursion produced a non-finite value");
    }
    return series;
}

template <class Runner>
ObservationTrace run_l1(Runner&& runner, double x0, std::span<const double> times, const L1Options& options) {
    double dt_used = 0.0;
    const auto series = runner(options.dt, dt_used);
    ObservationTrace trace;
    trace.x0 = x0;
    trace.meta = TraceProvenance::l1_scheme;
    trace.times.assign(times.begin(), times.end());
    trace.values = sample_series(series, dt_used, times);
    if (options.check_coarseness && !times.empty()) {
        double coarse_dt = 0.0;
        const auto coarse_series = runner(2.0 * options.dt, coarse_dt);
        const auto coarse = sample_series(coarse_series, coarse_dt, times);
        double diff = 0.0, peak = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            diff = std::max(diff, std::abs(coarse[i] - trace.values[i]));
            peak = std::max(peak, std::abs(trace.values[i]));
        }
        require(diff <= options.coarseness_tolerance * peak, Errc::timestep_too_coarse,
                "doubling the time step changes the trace by " + std::to_string(peak > 0 ? diff / peak : diff) +
                    " relative; decrease dt");
    }
    trace.validate();
    return trace;
}

}  // namespace

ObservationTrace solve_l1_scheme(const MultiTermModel& model, std::span<const double> initial_samples,
                                 std::span<const double> source_samples,
                                 const SourceTemporalProfile& source_temporal, double x0,
                                 std::span<const double> times, const L1Options& options) {
    check_l1_inputs(model, initial_samples, source_samples, source_temporal, x0, times, options);
    return run_l1(
        [&](double dt, double& used) {
            return l1_grid_series(model, initial_samples, source_samples, source_temporal, x0, dt, options.t_end,
                                  used);
        },
        x0, times, options);
}

ObservationTrace solve_l1_modal(const MultiTermModel& model, std::span<const double> initial_samples,
                                std::span<const double> source_samples, const SourceTemporalProfile& source_temporal,
                                double x0, std::span<const double> times, const L1Options& options) {
    check_l1_inputs(model, initial_samples, source_samples, source_temporal, x0, times, options);
    return run_l1(
        [&](double dt, double& used) {
            return l1_modal_series(model, initial_samples, source_samples, source_temporal, x0, dt, options.t_end,
                                   used);
        },
        x0, times, options);
}

}  // namespace fracdiff
