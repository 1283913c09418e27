#include "cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"

#include "fracdiff/asymptotics.hpp"
#include "fracdiff/error.hpp"
#include "fracdiff/identify.hpp"
#include "fracdiff/uniqueness.hpp"

namespace fracdiff::cli {
namespace fs = std::filesystem;

namespace {

void config_require(bool cond, const std::string& msg) { require(cond, Errc::config_error, msg); }

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- config pieces ----

OperatorPtr make_operator(const json& cfg) {
    const json spec = cfg.value("operator", json::object());
    const std::string type = spec.value("type", "dirichlet_laplacian");
    const double length = spec.contains("length") ? parse_scalar(spec["length"]) : std::numbers::pi;
    if (type == "dirichlet_laplacian") {
        const auto modes = spec.value("modes", std::size_t{200});
        return std::make_shared<const SpectralOperator>(dirichlet_laplacian(length, modes));
    }
    config_require(type == "discretized", "operator.type must be dirichlet_laplacian or discretized");
    const auto points = spec.value("grid_points", std::size_t{201});
    auto sampled = [&](const char* key, double fallback) {
        if (!spec.contains(key)) return std::vector<double>(points, fallback);
        if (spec[key].is_array()) return spec[key].get<std::vector<double>>();
        return std::vector<double>(points, parse_scalar(spec[key]));
    };
    const auto diffusion = sampled("diffusion", 1.0);
    const auto potential = sampled("potential", 0.0);
    return std::make_shared<const SpectralOperator>(discretize_symmetric(diffusion, potential, points, length));
}

MultiTermModel make_model(const json& spec, const OperatorPtr& op) {
    config_require(spec.is_object() && spec.contains("orders") && spec.contains("coeffs"),
                   "model needs orders and coeffs");
    MultiTermModel m{spec["orders"].get<std::vector<double>>(), spec["coeffs"].get<std::vector<double>>(), op};
    m.validate();
    return m;
}

std::vector<std::pair<double, double>> read_two_columns(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), Errc::config_error, "cannot open " + path.string());
    std::vector<std::pair<double, double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        char* end = nullptr;
        const double a = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) continue;  // header
        const double b = std::strtod(line.c_str() + comma + 1, nullptr);
        rows.emplace_back(a, b);
    }
    return rows;
}

struct FieldInput {
    FieldCoefficients field;
    std::vector<double> grid_samples;  // on op->grid(), for the L1 path
};

FieldInput make_field(const json& spec, const OperatorPtr& op, const fs::path& base) {
    FieldInput out;
    const auto& grid = op->grid();
    if (spec.is_string() || spec.is_number()) {
        const auto terms = spec.is_number() ? parse_field_spec(format17(spec.get<double>()))
                                            : parse_field_spec(spec.get<std::string>());
        out.field = terms.empty() ? zero_field(op) : sine_field(terms, op);
        out.grid_samples.assign(grid.size(), 0.0);
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (const auto& t : terms) out.grid_samples[i] += t.amplitude * std::sin(t.wavenumber * grid[i]);
        return out;
    }
    config_require(spec.is_object(), "field must be a string, {\"coeffs\": [...]} or {\"samples\": path}");
    if (spec.contains("coeffs")) {
        auto c = spec["coeffs"].get<std::vector<double>>();
        config_require(c.size() <= op->mode_count(), "more coefficients than operator modes");
        c.resize(op->mode_count(), 0.0);
        out.field = field_from_coeffs(std::move(c), op);
    } else {
        config_require(spec.contains("samples"), "field object needs coeffs or samples");
        const auto rows = read_two_columns(base / spec["samples"].get<std::string>());
        std::vector<double> values;
        for (const auto& r : rows) values.push_back(r.second);
        out.field = project(values, op);
    }
    out.grid_samples.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out.grid_samples[i] = out.field.value_at(grid[i]);
    return out;
}

std::vector<double> make_times(const json& spec) {
    if (spec.is_array()) return spec.get<std::vector<double>>();
    config_require(spec.is_object(), "times must be an array or {\"log\"|\"linear\": [lo, hi, n]}");
    const bool log = spec.contains("log");
    const auto& r = log ? spec["log"] : spec.at("linear");
    config_require(r.is_array() && r.size() == 3, "time range must be [lo, hi, n]");
    const double lo = parse_scalar(r[0]), hi = parse_scalar(r[1]);
    const auto n = r[2].get<std::size_t>();
    config_require(n >= 2 && hi > lo && (!log || lo > 0.0), "invalid time range");
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n - 1);
        t[i] = log ? lo * std::pow(hi / lo, f) : lo + (hi - lo) * f;
    }
    t.back() = hi;
    return t;
}

SourceTemporalProfile make_profile(const json& spec, const fs::path& base) {
    if (spec.contains("samples")) {
        const auto rows = read_two_columns(base / spec["samples"].get<std::string>());
        std::vector<double> t, v;
        for (const auto& r : rows) {
            t.push_back(r.first);
            v.push_back(r.second);
        }
        return SourceTemporalProfile::sampled(std::move(t), std::move(v));
    }
    return SourceTemporalProfile::power_law(spec.value("mu", 0.0), spec.value("scale", 1.0));
}

double x0_of(const json& cfg) {
    config_require(cfg.contains("x0"), "x0 is required");
    return parse_scalar(cfg["x0"]);
}

std::pair<double, double> window_of(const json& spec) {
    config_require(spec.is_array() && spec.size() == 2, "window must be [lo, hi]");
    return {parse_scalar(spec[0]), parse_scalar(spec[1])};
}

IdentificationConfig make_id_config(const json& cfg) {
    IdentificationConfig c;
    c.max_terms = cfg.value("max_terms", c.max_terms);
    if (cfg.contains("fit_window")) c.fit_window = window_of(cfg["fit_window"]);
    c.residual_floor = cfg.value("residual_floor", c.residual_floor);
    c.nu_threshold = cfg.value("nu_threshold", c.nu_threshold);
    if (cfg.contains("p_grid")) c.p_grid = make_times(cfg["p_grid"]);
    c.order_tolerance = cfg.value("order_tolerance", c.order_tolerance);
    c.classify_tolerance = cfg.value("classify_tolerance", c.classify_tolerance);
    try {
        c.validate();
    } catch (const Error& e) {
        fail(Errc::config_error, e.what());
    }
    return c;
}

// ---- JSON views of results ----

json model_json(const MultiTermModel& m) { return {{"orders", m.orders}, {"coeffs", m.coeffs}}; }

json field_json(const FieldCoefficients& f) {
    json modes = json::array();
    for (std::size_t n = 1; n <= f.coeffs.size(); ++n)
        if (f.coeffs[n - 1] != 0.0) modes.push_back({{"mode", n}, {"coeff", f.coeffs[n - 1]}});
    return {{"modes", modes}, {"mode_count", f.coeffs.size()}};
}

json verdict_json(const CoincidenceVerdict& v) {
    json viol = json::array();
    for (const auto& x : v.violations)
        viol.push_back({{"index", x.index}, {"condition", x.condition}, {"magnitude", x.magnitude}});
    json pairs = json::array();
    for (std::size_t i = 0; i < v.matching.m_set.size(); ++i)
        pairs.push_back({v.matching.m_set[i], v.matching.m_prime_set[i]});
    return {{"holds", v.holds},
            {"kappa", v.kappa},
            {"in_sigma", v.matching.in_sigma},
            {"matching", pairs},
            {"violations", viol}};
}

json identification_json(const IdentificationResult& r) {
    json diag = json::array();
    for (const auto& d : r.diagnostics)
        diag.push_back({{"terms", d.terms},
                        {"orders", d.orders},
                        {"ratios", d.ratios},
                        {"misfit", d.misfit},
                        {"window", {d.window.first, d.window.second}}});
    return {{"m_hat", r.m_hat},
            {"orders_hat", r.orders_hat},
            {"coeff_ratios", r.coeff_ratios},
            {"leading_composite", r.leading_composite},
            {"method", r.method},
            {"diagnostics", diag}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- commands ----

struct Context {
    const json& cfg;
    const RunOptions& opt;

    void log(const std::string& msg) const {
        if (opt.verbose) std::cerr << "[fracdiff] " << msg << "\n";
    }
    fs::path out(const std::string& name) const { return opt.out_dir / name; }
};

ObservationTrace simulate_one(const Context& ctx, const MultiTermModel& model, const FieldInput& initial,
                              const FieldInput& source, const SourceTemporalProfile& profile, double x0,
                              const std::vector<double>& times) {
    const json solver = ctx.cfg.value("solver", json::object());
    const std::string method = solver.value("method", "laplace");
    if (method == "laplace") {
        SolveOptions so;
        so.contour_nodes = solver.value("contour_nodes", so.contour_nodes);
        return solve_trace(model, initial.field, source.field, profile, x0, times, so);
    }
    config_require(method == "l1", "solver.method must be laplace or l1");
    L1Options lo;
    lo.dt = solver.value("dt", lo.dt);
    lo.t_end = *std::max_element(times.begin(), times.end());
    lo.check_coarseness = solver.value("check_coarseness", true);
    return solve_l1_modal(model, initial.grid_samples, source.grid_samples, profile, x0, times, lo);
}

int cmd_simulate(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto op = make_operator(cfg);
    const auto model = make_model(cfg.at("model"), op);
    const double x0 = x0_of(cfg);
    const auto times = make_times(cfg.at("times"));
    const auto base = ctx.opt.config_dir;
    const auto initial = make_field(cfg.value("initial", json("0")), op, base);
    FieldInput source = make_field(json("0"), op, base);
    auto profile = SourceTemporalProfile::none();
    if (cfg.contains("source")) {
        source = make_field(cfg["source"].at("field"), op, base);
        profile = make_profile(cfg["source"], base);
    }
    ctx.log("simulating " + std::to_string(times.size()) + " samples");
    auto trace = simulate_one(ctx, model, initial, source, profile, x0, times);

    json meta = {{"command", "simulate"},
                 {"model", model_json(model)},
                 {"x0", x0},
                 {"samples", times.size()},
                 {"solver", ctx.cfg.value("solver", json::object()).value("method", "laplace")},
                 {"provenance", provenance_name(trace.meta)},
                 {"truncation_estimate", trace.truncation_estimate}};

    const double jitter = cfg.value("jitter", 0.0);
    config_require(jitter >= 0.0, "jitter must be non-negative");
    if (jitter > 0.0) {
        std::mt19937_64 rng(ctx.opt.seed);
        std::normal_distribution<double> gauss;
        for (auto& v : trace.values) v *= 1.0 + jitter * gauss(rng);
        meta["jitter"] = {{"relative", jitter}, {"seed", ctx.opt.seed}};
    }
    write_trace_csv(ctx.out("trace.csv"), trace);

    if (cfg.contains("compare")) {
        const auto& cmp = cfg["compare"];
        const auto model_v = make_model(cmp.at("model"), op);
        const auto initial_v = make_field(cmp.value("initial", json("0")), op, base);
        FieldInput source_v = make_field(json("0"), op, base);
        auto profile_v = SourceTemporalProfile::none();
        if (cmp.contains("source")) {
            source_v = make_field(cmp["source"].at("field"), op, base);
            profile_v = make_profile(cmp["source"], base);
        }
        const auto v = simulate_one(ctx, model_v, initial_v, source_v, profile_v, x0, times);
        write_trace_csv(ctx.out("trace_v.csv"), v);
        std::ostringstream diff;
        diff << "t,diff\n";
        double worst = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double d = trace.values[i] - v.values[i];
            worst = std::max(worst, std::abs(d));
            diff << format17(times[i]) << "," << format17(d) << "\n";
        }
        write_text_atomic(ctx.out("difference.csv"), diff.str());
        meta["compare_model"] = model_json(model_v);
        meta["max_difference"] = worst;
    }
    write_text_atomic(ctx.out("simulate.json"), dump(meta));
    return ok;
}

int cmd_expand(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto op = make_operator(cfg);
    const auto model = make_model(cfg.at("model"), op);
    const double x0 = x0_of(cfg);
    const double cap = cfg.contains("order_cap") ? parse_scalar(cfg["order_cap"]) : default_order_cap(model);
    const auto base = ctx.opt.config_dir;

    ExpansionSeries series;
    ObservationTrace trace;
    std::vector<double> times = make_times(cfg.value("times", json{{"log", {1e-4, 1e-2, 60}}}));
    const bool source = cfg.contains("source");
    double lambda_lead = 0.0;
    json p_terms = json::array();
    if (source) {
        const auto f = make_field(cfg["source"].at("field"), op, base);
        const double mu = cfg["source"].value("mu", 0.0);
        const double scale = cfg["source"].value("scale", 1.0);
        series = short_time_series_source(model, f.field, mu, scale, x0, cap);
        if (!f.field.is_zero())
            trace = solve_trace(model, zero_field(op), f.field, SourceTemporalProfile::power_law(mu, scale), x0,
                                times);
        for (std::size_t n = 1; n <= op->mode_count() && lambda_lead == 0.0; ++n)
            if (f.field.coeffs[n - 1] != 0.0) lambda_lead = op->eigenvalue(n);
        if (lambda_lead > 0.0)
            for (const auto& t : large_p_expand_source(model, lambda_lead, mu, cap))
                p_terms.push_back({{"p_exponent", t.p_exponent}, {"coef", t.coef}});
    } else {
        const auto a = make_field(cfg.value("initial", json("0")), op, base);
        series = short_time_series(model, a.field, x0, cap);
        if (!a.field.is_zero())
            trace = solve_trace(model, a.field, zero_field(op), SourceTemporalProfile::none(), x0, times);
        for (std::size_t n = 1; n <= op->mode_count() && lambda_lead == 0.0; ++n)
            if (a.field.coeffs[n - 1] != 0.0) lambda_lead = op->eigenvalue(n);
        if (lambda_lead > 0.0)
            for (const auto& t : large_p_expand(model, lambda_lead, cap))
                p_terms.push_back({{"p_exponent", t.p_exponent}, {"coef", t.coef}});
    }

    json terms = json::array();
    for (const auto& t : series.terms) terms.push_back({{"exponent", t.exponent}, {"coef", t.coef}});
    json report = json::array();
    if (!series.terms.empty()) {
        const auto window = cfg.contains("window") ? window_of(cfg["window"])
                                                   : std::pair{times.front(), times.back()};
        for (std::size_t level = 1; level <= series.terms.size(); ++level) {
            const auto cut = series.truncated(series.terms[level - 1].exponent);
            const double slope = empirical_order(trace, cut, window);
            const std::string name = "residual_" + std::to_string(level) + ".dat";
            std::ostringstream res;
            res << "# t |u - series|\n";
            for (std::size_t i = 0; i < trace.times.size(); ++i)
                res << format17(trace.times[i]) << " "
                    << format17(std::abs(trace.values[i] - cut.evaluate(trace.times[i]))) << "\n";
            write_text_atomic(ctx.out(name), res.str());
            report.push_back({{"terms", level},
                              {"max_exponent", cut.terms.back().exponent},
                              {"expected_order", cut.remainder_order},
                              {"empirical_order", std::isinf(slope) ? json("inf") : json(slope)},
                              {"residual_file", name}});
        }
    }
    json out = {{"command", "expand"},
                {"model", model_json(model)},
                {"x0", x0},
                {"order_cap", cap},
                {"terms", terms},
                {"anchor_value", series.anchor_value},
                {"remainder_order", std::isinf(series.remainder_order) ? json("inf") : json(series.remainder_order)},
                {"p_terms_lowest_mode", {{"lambda", lambda_lead}, {"terms", p_terms}}},
                {"report", report}};
    write_text_atomic(ctx.out("expansion.json"), dump(out));
    return ok;
}

int cmd_identify(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    config_require(cfg.contains("trace"), "identify needs a trace path");
    auto trace = read_trace_csv(ctx.opt.config_dir / cfg["trace"].get<std::string>());
    const std::string mode = cfg.value("mode", "homogeneous");
    config_require(mode == "homogeneous" || mode == "source", "mode must be homogeneous or source");
    const FitMode fm = mode == "source" ? FitMode::source_mode(cfg.value("mu", 0.0)) : FitMode::homogeneous();
    double baseline = 0.0;
    if (cfg.contains("baseline")) {
        baseline = parse_scalar(cfg["baseline"]);
    } else if (cfg.contains("initial")) {
        const auto op = make_operator(cfg);
        baseline = make_field(cfg["initial"], op, ctx.opt.config_dir).field.value_at(x0_of(cfg));
    }
    if (cfg.contains("x0")) trace.x0 = x0_of(cfg);
    const auto id = make_id_config(cfg.value("identification", json::object()));
    const std::string method = cfg.value("method", "peel");
    ctx.log("identifying with method " + method);
    IdentificationResult r;
    if (method == "peel") {
        r = peel_orders(trace, baseline, id, fm);
    } else {
        config_require(method == "laplace", "method must be peel or laplace");
        config_require(!fm.source, "the laplace method fits homogeneous traces only");
        r = laplace_domain_fit(trace, baseline, id);
    }
    json out = identification_json(r);
    out["command"] = "identify";
    out["baseline"] = baseline;
    write_text_atomic(ctx.out("identify.json"), dump(out));
    return ok;
}

int cmd_twin(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto op = make_operator(cfg);
    const auto model_v = make_model(cfg.at("model"), op);
    const double x0 = x0_of(cfg);
    config_require(cfg.contains("kappa"), "twin needs kappa");
    const double kappa = parse_scalar(cfg["kappa"]);
    const std::string kind = cfg.value("kind", "initial");
    config_require(kind == "initial" || kind == "source", "kind must be initial or source");
    const auto b = make_field(cfg.at("field"), op, ctx.opt.config_dir).field;
    const bool src = kind == "source";
    const auto a = src ? construct_twin_source(b, kappa, x0) : construct_twin_initial(b, kappa, x0);

    MultiTermModel model_u = model_v;
    for (auto& q : model_u.coeffs) q *= kappa;
    const auto times = make_times(cfg.value("times", json{{"linear", {0.0, 1.0, 50}}}));
    const auto zero = zero_field(op);
    const double mu = cfg.value("mu", 0.0);
    const auto prof = src ? SourceTemporalProfile::power_law(mu) : SourceTemporalProfile::none();
    const auto u = src ? solve_trace(model_u, zero, a, prof, x0, times) : solve_trace(model_u, a, zero, prof, x0, times);
    const auto v = src ? solve_trace(model_v, zero, b, prof, x0, times) : solve_trace(model_v, b, zero, prof, x0, times);
    std::ostringstream diff;
    diff << "t,diff\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        worst = std::max(worst, std::abs(u.values[i] - v.values[i]));
        diff << format17(times[i]) << "," << format17(u.values[i] - v.values[i]) << "\n";
    }
    double l2 = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) l2 += (a.coeffs[i] - b.coeffs[i]) * (a.coeffs[i] - b.coeffs[i]);
    const auto verdict = src ? check_coincidence_source(a, b, x0, model_u, model_v)
                             : check_coincidence_initial(a, b, x0, model_u, model_v);
    json out = {{"command", "twin"},
                {"kind", kind},
                {"kappa", kappa},
                {"x0", x0},
                {"field", field_json(a)},
                {"model_u", model_json(model_u)},
                {"model_v", model_json(model_v)},
                {"max_difference", worst},
                {"l2_distance", std::sqrt(l2)},
                {"verdict", verdict_json(verdict)}};
    write_text_atomic(ctx.out("difference.csv"), diff.str());
    write_text_atomic(ctx.out("twin.json"), dump(out));
    return ok;
}

int cmd_check(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto op = make_operator(cfg);
    const auto mu = make_model(cfg.at("model_u"), op);
    const auto mv = make_model(cfg.at("model_v"), op);
    const double x0 = x0_of(cfg);
    const std::string kind = cfg.value("kind", "initial");
    config_require(kind == "initial" || kind == "source", "kind must be initial or source");
    const auto first = make_field(cfg.at("first"), op, ctx.opt.config_dir).field;
    const auto second = make_field(cfg.at("second"), op, ctx.opt.config_dir).field;
    const double tol = cfg.value("tolerance", 0.0);
    const auto v = kind == "source" ? check_coincidence_source(first, second, x0, mu, mv, tol)
                                    : check_coincidence_initial(first, second, x0, mu, mv, tol);
    json out = verdict_json(v);
    out["command"] = "check";
    out["kind"] = kind;
    write_text_atomic(ctx.out("check.json"), dump(out));
    return ok;
}

int cmd_recover(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto op = make_operator(cfg);
    const auto model = make_model(cfg.at("model"), op);
    const double x0 = x0_of(cfg);
    config_require(cfg.contains("trace"), "recover needs a trace path");
    const auto trace = read_trace_csv(ctx.opt.config_dir / cfg["trace"].get<std::string>());
    const auto n_modes = cfg.value("n_modes", std::size_t{5});
    const auto r = recover_initial(trace, model, x0, n_modes);
    std::vector<double> coeffs(r.field.coeffs.begin(), r.field.coeffs.begin() + static_cast<long>(n_modes));
    json out = {{"command", "recover"},
                {"x0", x0},
                {"n_modes", n_modes},
                {"coeffs", coeffs},
                {"residual", r.residual},
                {"condition", r.condition},
                {"rank", r.rank}};
    write_text_atomic(ctx.out("recover.json"), dump(out));
    return ok;
}

int exit_code_for(Errc code) {
    switch (errc_class(code)) {
        case ErrorClass::config:
            return config_failure;
        case ErrorClass::hypothesis:
            return hypothesis_failure;
        default:
            return numerical_failure;
    }
}

int report_error(const RunOptions& opt, const std::string& code, const std::string& cls, const std::string& message,
                 int exit_code) {
    const json err = {{"error", code}, {"class", cls}, {"message", message}, {"exit_code", exit_code}};
    std::cerr << err.dump() << "\n";
    try {
        fs::create_directories(opt.out_dir);
        write_text_atomic(opt.out_dir / "error.json", dump(err));
    } catch (const std::exception&) {
        // stderr already has it
    }
    return exit_code;
}

std::string class_name(ErrorClass c) {
    switch (c) {
        case ErrorClass::config:
            return "config";
        case ErrorClass::hypothesis:
            return "hypothesis";
        default:
            return "numerical";
    }
}

}  // namespace

std::vector<SineTerm> parse_field_spec(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    config_require(!s.empty(), "empty field spec");
    std::vector<SineTerm> terms;
    std::size_t i = 0;
    auto bad = [&](const std::string& why) {
        fail(Errc::config_error, "field spec '" + text + "': " + why + " at position " + std::to_string(i));
    };
    auto number = [&](double& out) {
        const char* start = s.c_str() + i;
        char* end = nullptr;
        out = std::strtod(start, &end);
        if (end == start) return false;
        i += static_cast<std::size_t>(end - start);
        return true;
    };
    // a bare constant 0 is the zero field
    {
        double v = 0.0;
        std::size_t save = i;
        if (number(v) && i == s.size()) {
            if (v != 0.0) bad("a constant is not a sine sum");
            return terms;
        }
        i = save;
    }
    while (i < s.size()) {
        double sign = 1.0;
        if (s[i] == '+' || s[i] == '-') {
            sign = s[i] == '-' ? -1.0 : 1.0;
            ++i;
        } else if (!terms.empty()) {
            bad("expected + or -");
        }
        double amp = 1.0;
        if (s.compare(i, 4, "sin(") != 0) {
            if (!number(amp)) bad("expected a coefficient or sin(");
            if (i < s.size() && s[i] == '*') ++i;
        }
        if (s.compare(i, 4, "sin(") != 0) bad("expected sin(");
        i += 4;
        double k = 1.0;
        if (i < s.size() && s[i] != 'x') {
            if (!number(k)) bad("expected a wavenumber");
            if (i < s.size() && s[i] == '*') ++i;
        }
        if (s.compare(i, 2, "x)") != 0) bad("expected x)");
        i += 2;
        terms.push_back({sign * amp, k});
    }
    return terms;
}

double parse_scalar(const json& value) {
    if (value.is_number()) return value.get<double>();
    config_require(value.is_string(), "expected a number or a pi expression");
    std::string s;
    for (char c : value.get<std::string>())
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    const auto pos = s.find("pi");
    if (pos == std::string::npos) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        config_require(end != s.c_str() && *end == '\0', "cannot parse number '" + s + "'");
        return v;
    }
    double mult = 1.0, div = 1.0;
    if (pos > 0) {
        std::string head = s.substr(0, pos);
        if (!head.empty() && head.back() == '*') head.pop_back();
        char* end = nullptr;
        mult = std::strtod(head.c_str(), &end);
        config_require(end != head.c_str() && *end == '\0', "cannot parse '" + s + "'");
    }
    const std::string tail = s.substr(pos + 2);
    if (!tail.empty()) {
        config_require(tail[0] == '/', "cannot parse '" + s + "'");
        char* end = nullptr;
        div = std::strtod(tail.c_str() + 1, &end);
        config_require(end != tail.c_str() + 1 && *end == '\0' && div != 0.0, "cannot parse '" + s + "'");
    }
    return mult * std::numbers::pi / div;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), Errc::config_error, "cannot write " + tmp.string());
        out << text;
        out.flush();
        require(out.good(), Errc::config_error, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_trace_csv(const fs::path& path, const ObservationTrace& trace) {
    std::ostringstream out;
    out << "t,u\n";
    for (std::size_t i = 0; i < trace.times.size(); ++i)
        out << format17(trace.times[i]) << "," << format17(trace.values[i]) << "\n";
    write_text_atomic(path, out.str());
}

ObservationTrace read_trace_csv(const fs::path& path) {
    ObservationTrace tr;
    for (const auto& [t, u] : read_two_columns(path)) {
        tr.times.push_back(t);
        tr.values.push_back(u);
    }
    require(!tr.times.empty(), Errc::config_error, "trace file " + path.string() + " has no rows");
    tr.validate();
    return tr;
}

int run_command(const std::string& command, const json& config, const RunOptions& options) {
    const Context ctx{config, options};
    try {
        fs::create_directories(options.out_dir);
        if (command == "simulate") return cmd_simulate(ctx);
        if (command == "expand") return cmd_expand(ctx);
        if (command == "identify") return cmd_identify(ctx);
        if (command == "twin") return cmd_twin(ctx);
        if (command == "check") return cmd_check(ctx);
        if (command == "recover") return cmd_recover(ctx);
        return report_error(options, "config_error", "config", "unknown command " + command, config_failure);
    } catch (const Error& e) {
        return report_error(options, std::string(errc_name(e.code())), class_name(errc_class(e.code())), e.what(),
                            exit_code_for(e.code()));
    } catch (const json::exception& e) {
        return report_error(options, "config_error", "config", e.what(), config_failure);
    } catch (const fs::filesystem_error& e) {
        return report_error(options, "config_error", "config", e.what(), config_failure);
    }
}

int main_entry(int argc, char** argv) {
    CLI::App app{"multi-term time-fractional diffusion: simulation, expansion, identification, uniqueness"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool verbose = false;
    for (const char* name : {"simulate", "expand", "identify", "twin", "check", "recover"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "seed for jitter mode");
        sub->add_flag("--verbose", verbose, "progress on stderr");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_failure;
    }
    RunOptions opt;
    opt.out_dir = out_dir;
    opt.config_dir = fs::path(config_path).parent_path();
    opt.seed = seed;
    opt.verbose = verbose;
    json config;
    try {
        std::ifstream in(config_path);
        config = json::parse(in);
    } catch (const json::exception& e) {
        return report_error(opt, "config_error", "config", e.what(), config_failure);
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const int rc = run_command(command, config, opt);
    if (rc == ok) std::cout << command << ": wrote " << opt.out_dir.string() << "\n";
    return rc;
}

}  // namespace fracdiff::cli
