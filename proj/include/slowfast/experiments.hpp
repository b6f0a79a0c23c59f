#pragma once

// Experiment harness: slope fits, fixed-format CSV tables, JSON summaries and
// the registry of reproducible runs behind the `slowfast` command line tool.

#include "slowfast/fhn_homoclinic.hpp"
#include "slowfast/models.hpp"
#include "slowfast/quad.hpp"
#include "slowfast/sof.hpp"
#include "slowfast/transient.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>

namespace slowfast::experiments {

using Json = nlohmann::ordered_json;
inline constexpr const char* kSchema = "slowfast.summary/1";

// ---------------------------------------------------------------------------
// Slope fitting
// ---------------------------------------------------------------------------

struct SlopeFit {
    std::vector<std::pair<double, double>> points;  // (log10 x, log10 y)
    double slope = 0.0;
    double intercept = 0.0;
    double max_residual = 0.0;
};

/// Ordinary least squares on (log10 x, log10 y).
inline SlopeFit fit_slope(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 3) throw Error(ErrorKind::DegenerateFit, "need at least 3 points");
    SlopeFit fit;
    for (const auto& [x, y] : xy) {
        if (!(x > 0.0) || !(y > 0.0)) throw Error(ErrorKind::DegenerateFit, "log-log fit needs positive values");
        fit.points.emplace_back(std::log10(x), std::log10(y));
    }
    const double n = static_cast<double>(fit.points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [u, v] : fit.points) {
        mx += u;
        my += v;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [u, v] : fit.points) {
        sxx += (u - mx) * (u - mx);
        sxy += (u - mx) * (v - my);
    }
    if (!(sxx > 1e-24 * std::max(1.0, mx * mx))) throw Error(ErrorKind::DegenerateFit, "abscissae coincide");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (const auto& [u, v] : fit.points)
        fit.max_residual = std::max(fit.max_residual, std::abs(v - (fit.intercept + fit.slope * u)));
    return fit;
}

inline Json to_json(const SlopeFit& f) {
    Json pts = Json::array();
    for (const auto& [u, v] : f.points) pts.push_back({u, v});
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"max_residual", f.max_residual}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// 17 significant digits in scientific notation, so reruns are byte-identical.
inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

class Table {
public:
    using Cell = std::variant<double, std::string>;

    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<Cell> row) {
        if (row.size() != columns_.size()) throw Error(ErrorKind::InvalidArgument, "row width does not match header");
        rows_.push_back(std::move(row));
    }

    [[nodiscard]] std::size_t size() const { return rows_.size(); }

    void write(std::ostream& os) const {
        for (std::size_t j = 0; j < columns_.size(); ++j) os << (j ? "," : "") << columns_[j];
        os << '\n';
        for (const auto& row : rows_) {
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (j) os << ',';
                if (const auto* d = std::get_if<double>(&row[j]))
                    os << format_number(*d);
                else
                    os << std::get<std::string>(row[j]);
            }
            os << '\n';
        }
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

// ---------------------------------------------------------------------------
// Spec, output sink, parallel sweeps
// ---------------------------------------------------------------------------

struct ExperimentSpec {
    std::string experiment;
    models::Params params;        // model parameter overrides
    std::vector<double> sweep;    // values of the experiment's sweep variable
    std::optional<double> eps, r, dtau, h;
    bool trajectories = true;     // write per-trajectory CSVs
    unsigned seed = 0;
    int jobs = 1;

    void validate() const {
        for (double v : sweep)
            if (!(v > 0.0)) throw Error(ErrorKind::InvalidArgument, "sweep values must be positive");
        if (!std::is_sorted(sweep.begin(), sweep.end()))
            throw Error(ErrorKind::InvalidArgument, "sweep values must be sorted ascending");
        for (const auto& v : {eps, r, dtau, h})
            if (v && !(*v > 0.0)) throw Error(ErrorKind::InvalidArgument, "--eps/--r/--dtau/--h must be positive");
        if (jobs < 1) throw Error(ErrorKind::InvalidArgument, "--jobs must be at least 1");
    }
};

/// Collects the files and summary of one run. Files are written as soon as
/// they are produced, so a failing phase leaves the earlier outputs on disk.
class Sink {
public:
    explicit Sink(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    Json summary = Json::object();

    void table(const std::string& name, const Table& t) { write(name + ".csv", [&](std::ostream& os) { t.write(os); }); }

    template <typename Writer>
    void write(const std::string& file, Writer&& writer) {
        const std::lock_guard lock(mutex_);
        files_.push_back(file);
        if (dir_.empty()) return;
        std::ofstream os(dir_ / file, std::ios::binary);
        writer(os);
    }

    void timing(const std::string& phase, double seconds) {
        const std::lock_guard lock(mutex_);
        summary["timings"][phase + "_s"] = seconds;
    }

    [[nodiscard]] const std::vector<std::string>& files() const { return files_; }
    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
    std::mutex mutex_;
};

template <typename R>
struct PointResult {
    std::optional<R> value;
    std::exception_ptr error;
    std::string message;
};

/// fn(i) for i < n on up to `jobs` threads; failures are captured per point.
template <typename R, typename F>
std::vector<PointResult<R>> parallel_map(std::size_t n, int jobs, F fn) {
    std::vector<PointResult<R>> out(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                out[i].value = fn(i);
            } catch (const std::exception& e) {
                out[i].error = std::current_exception();
                out[i].message = e.what();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

template <typename R>
void rethrow_first(const std::vector<PointResult<R>>& results) {
    for (const auto& p : results)
        if (p.error) std::rethrow_exception(p.error);
}

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline Json to_json(const Vec<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline std::vector<double> values_or(const std::vector<double>& given, std::vector<double> fallback) {
    return given.empty() ? fallback : given;
}

// ---------------------------------------------------------------------------
// Order studies (float128)
// ---------------------------------------------------------------------------

struct OrderPoint {
    double eps = 0.0;
    double err_eta_plain = 0.0;
    double err_eta_split = 0.0;
    double err_phi = 0.0;
    int so_iterations = 0;
    int sof_iterations = 0;
};

/// Errors of eta^h and phi^{eps,h} at h = eps against a reference at
/// h = eps^1.5 with a tolerance near the float128 floor.
inline OrderPoint order_point(const std::string& model, const models::Params& params, double eps,
                              const std::vector<double>& x_at, double guess) {
    models::Params p = params;
    p["epsilon"] = eps;
    const SlowFastSystem<quad> sys =
        model == "toy" ? models::toy<quad>(p) : model == "lindemann" ? models::lindemann<quad>(p)
                                                                     : throw Error(ErrorKind::UnknownModel, model);
    Vec<quad> x(sys.n_s);
    for (int i = 0; i < sys.n_s; ++i) x[i] = quad(x_at[static_cast<std::size_t>(i)]);
    const Vec<quad> g = Vec<quad>::Constant(sys.n_f, quad(guess));
    const quad e(eps);

    SoConfig<quad> cfg;
    cfg.tol = quad(1e-30);
    const auto split = sample_manifold(sys, x, e, cfg, g);
    SoConfig<quad> plain_cfg = cfg;
    plain_cfg.use_eta0_derivative = false;
    const auto plain = so_point(sys, x, e, plain_cfg, g);
    SoConfig<quad> ref_cfg;
    ref_cfg.tol = quad(1e-25);
    using std::pow;
    const auto ref = sample_manifold(sys, x, quad(pow(eps, 1.5)), ref_cfg, g);

    OrderPoint out;
    out.eps = eps;
    out.err_eta_split = to_double(quad((split.point.eta - ref.point.eta).norm()));
    out.err_eta_plain = to_double(quad((plain.eta - ref.point.eta).norm()));
    out.err_phi = to_double(quad((split.fiber.phi - ref.fiber.phi).norm()));
    out.so_iterations = split.point.iterations;
    out.sof_iterations = split.fiber.iterations;
    return out;
}

inline const std::vector<double> kOrderEps{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};

inline std::vector<OrderPoint> order_sweep(const std::string& model, const ExperimentSpec& spec, Sink& sink) {
    const std::vector<double> eps = values_or(spec.sweep, kOrderEps);
    const std::vector<double> x_at = model == "toy" ? std::vector<double>{-0.5, -0.7} : std::vector<double>{1.0};
    const double guess = model == "toy" ? 0.5 : 1.0;
    const auto results = parallel_map<OrderPoint>(eps.size(), spec.jobs, [&](std::size_t i) {
        return order_point(model, spec.params, eps[i], x_at, guess);
    });
    Table t({"eps", "err_eta_plain", "err_eta_split", "err_phi", "so_iterations", "sof_iterations"});
    std::vector<OrderPoint> pts;
    for (const auto& r : results) {
        if (!r.value) continue;
        const auto& p = *r.value;
        t.add({p.eps, p.err_eta_plain, p.err_eta_split, p.err_phi, double(p.so_iterations), double(p.sof_iterations)});
        pts.push_back(p);
    }
    sink.table("errors", t);
    sink.summary["x"] = x_at;
    sink.summary["h_rule"] = "h = eps";
    sink.summary["reference"] = "float128 SO/SOF at h = eps^1.5, tol 1e-25";
    rethrow_first(results);
    return pts;
}

inline SlopeFit fit_column(const std::vector<OrderPoint>& pts, double OrderPoint::*field) {
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : pts) xy.emplace_back(p.eps, p.*field);
    return fit_slope(xy);
}

inline void run_toy_eta_order(const ExperimentSpec& spec, Sink& sink) {
    const auto pts = order_sweep("toy", spec, sink);
    sink.summary["slope_eta_plain"] = to_json(fit_column(pts, &OrderPoint::err_eta_plain));
    sink.summary["slope_eta_split"] = to_json(fit_column(pts, &OrderPoint::err_eta_split));
}

inline void run_toy_phi_order(const ExperimentSpec& spec, Sink& sink) {
    const auto pts = order_sweep("toy", spec, sink);
    sink.summary["slope_phi"] = to_json(fit_column(pts, &OrderPoint::err_phi));
}

inline void run_lindemann_order(const ExperimentSpec& spec, Sink& sink) {
    const auto pts = order_sweep("lindemann", spec, sink);
    sink.summary["slope_eta"] = to_json(fit_column(pts, &OrderPoint::err_eta_split));
    sink.summary["slope_phi"] = to_json(fit_column(pts, &OrderPoint::err_phi));
}

// ---------------------------------------------------------------------------
// Linear BVP
// ---------------------------------------------------------------------------

inline void run_linear_bvp(const ExperimentSpec& spec, Sink& sink) {
    models::Params p = spec.params;
    if (spec.eps) p["epsilon"] = *spec.eps;
    const auto sys = models::linear_bvp<double>(p);
    const double eps = sys.epsilon;
    const double dtau = spec.dtau.value_or(0.01);
    TransientConfig cfg;
    cfg.h = spec.h.value_or(1e-3);
    cfg.dt = dtau;

    const Vec<double> x(Vec<double>::Constant(1, 0.5));
    const auto ms = sample_manifold(sys, x, cfg.h, cfg.so, Vec<double>(Vec<double>::Zero(1)));
    sink.summary["eta"] = ms.point.eta[0];
    sink.summary["so_iterations"] = ms.point.iterations;
    sink.summary["phi"] = ms.fiber.phi(0, 0);
    sink.summary["sof_iterations"] = ms.fiber.iterations;

    // u(0) = 1 on the base x0 = 0 means a fast deviation of -1/eps.
    const Vec<double> x00(Vec<double>::Zero(1));
    const auto sol = so_smst(sys, x00, 1.0, dtau, LayerPin::split(Vec<double>::Constant(1, -1.0 / eps)), std::nullopt, cfg);
    Table t({"tau", "u", "u_exact", "error"});
    double worst = 0.0;
    for (const auto& pt : sol.stitched) {
        const double exact = pt.tau + std::exp(-pt.tau / eps);
        worst = std::max(worst, std::abs(pt.x[0] - exact));
        t.add({pt.tau, pt.x[0], exact, std::abs(pt.x[0] - exact)});
    }
    if (spec.trajectories) sink.table("trajectory", t);
    sink.summary["max_error"] = worst;
    sink.summary["t0"] = sol.t0;
    sink.timing("base", sol.timings.base_s);
}

// ---------------------------------------------------------------------------
// Toy model: modified RK4 and saddle validation
// ---------------------------------------------------------------------------

/// Reduced flow x' = X(x, eta(x)) integrated adaptively in long double with
/// eta from a converged SO solve at every evaluation; sampled at k * spacing.
inline std::vector<Vec<double>> toy_reduced_reference(const models::Params& params, const Vec<double>& x0, double T,
                                                      double spacing) {
    using LD = long double;
    const auto sys = models::toy<LD>(params);
    const LD eps = sys.epsilon;
    SoConfig<LD> cfg;
    cfg.tol = 1e-16L;
    // Below h = eps the SO contraction degrades away from x(0); at h = eps the
    // split-form eta error is ~1e-12, far below the RK4 errors measured here.
    const LD h = eps;
    Vec<LD> guess = Vec<LD>::Constant(2, 0.5L);
    const BasicRhsFn<LD> f = [&](LD, const Vec<LD>& x) {
        const auto mp = so_point(sys, x, h, cfg, guess);
        return Vec<LD>(reduced_field(sys, x, mp.eta));
    };
    OdeOptions ode{1e-13, 1e-15, 1e-3, 1'000'000, false};
    const long n = std::lround(T / spacing);
    std::vector<Vec<double>> out{x0};
    Vec<LD> x = cast_vec<LD>(x0);
    for (long k = 0; k < n; ++k) {
        const auto seg = integrate_adaptive<LD>(f, LD(k) * spacing, x, LD(k + 1) * spacing, ode);
        x = seg.back();
        out.push_back(to_double(x));
    }
    return out;
}

inline void run_toy_rk4(const ExperimentSpec& spec, Sink& sink) {
    models::Params p = spec.params;
    if (spec.eps) p["epsilon"] = *spec.eps;
    const auto sys = models::toy<double>(p);
    const double eps = sys.epsilon;
    const double T = 10.0;
    const double dtau = spec.dtau.value_or(0.5);
    const std::vector<double> sweep = values_or(spec.sweep, {0.05, 0.1, 0.2, 0.4});
    Vec<double> x0(2);
    x0 << -0.5, -0.7;

    // One reference sampled on the finest common grid.
    double spacing = dtau;
    for (double d : sweep) spacing = std::min(spacing, d);
    const Stopwatch ref_clock;
    const auto ref = toy_reduced_reference(p, x0, T, spacing);
    sink.timing("reference", ref_clock.seconds());
    auto ref_at = [&](double tau) { return ref[static_cast<std::size_t>(std::lround(tau / spacing))]; };
    auto on_grid = [&](double d) { return std::abs(d / spacing - std::round(d / spacing)) < 1e-9; };

    SoConfig<double> cfg;
    cfg.tol = 1e-12;
    auto run = [&](double d) {
        if (!on_grid(d)) throw Error(ErrorKind::InvalidArgument, "dtau values must be multiples of the smallest one");
        return integrate_reduced(sys, x0, T, d, choose_h(d, eps), cfg, Direction::Forward, {},
                                 Vec<double>(Vec<double>::Constant(2, 0.5)));
    };
    auto deviation = [&](const BaseTrajectory<double>& b) {
        double worst = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k)
            worst = std::max(worst, (b.x_values[k] - ref_at(b.tau_mesh[k])).cwiseAbs().maxCoeff());
        return worst;
    };

    const Stopwatch base_clock;
    const auto main_run = run(dtau);
    sink.timing("base", base_clock.seconds());
    const double dev = deviation(main_run);
    Table traj({"tau", "x0", "x1", "x0_ref", "x1_ref"});
    for (std::size_t k = 0; k < main_run.size(); ++k) {
        const Vec<double> r = ref_at(main_run.tau_mesh[k]);
        traj.add({main_run.tau_mesh[k], main_run.x_values[k][0], main_run.x_values[k][1], r[0], r[1]});
    }
    if (spec.trajectories) sink.table("trajectory", traj);
    sink.summary["dtau"] = dtau;
    sink.summary["h"] = choose_h(dtau, eps);
    sink.summary["max_deviation"] = dev;

    const auto results = parallel_map<double>(sweep.size(), spec.jobs, [&](std::size_t i) { return deviation(run(sweep[i])); });
    Table t({"dtau", "h", "max_deviation"});
    std::vector<std::pair<double, double>> xy;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (!results[i].value) continue;
        t.add({sweep[i], choose_h(sweep[i], eps), *results[i].value});
        xy.emplace_back(sweep[i], *results[i].value);
    }
    sink.table("dtau_sweep", t);
    rethrow_first(results);
    sink.summary["slope_dtau"] = to_json(fit_slope(xy));
}

inline void run_toy_saddle(const ExperimentSpec& spec, Sink& sink) {
    models::Params p = spec.params;
    if (spec.eps) p["epsilon"] = *spec.eps;
    const auto sys = models::toy<double>(p);
    const double eps = sys.epsilon;
    Vec<double> x(2);
    x << -0.5, -0.7;
    SoConfig<double> cfg;
    cfg.tol = 1e-13;
    const auto ms = sample_manifold(sys, x, spec.h.value_or(eps), cfg, Vec<double>(Vec<double>::Constant(2, 0.5)));
    const auto split = split_spectrum(fast_linearization(sys, x, ms.point.eta, ms.point.d_eta));
    const Vec<double> dir = tangent_basis(ms.fiber.phi, ms.point.d_eta) * split.basis_u.col(0);
    std::vector<int> exps;
    for (int k = -4; k >= -12; --k) exps.push_back(k);
    OdeOptions ode{1e-12, 1e-14, 1e-3, 2'000'000, false};
    const auto val = saddle_validation(sys, x, ms.point.eta, dir, 60.0, exps, ode);
    Table t({"d", "side_plus", "side_minus", "split"});
    for (const auto& pr : val.probes)
        t.add({pr.d, double(pr.side_plus), double(pr.side_minus), pr.split() ? "yes" : "no"});
    sink.table("probes", t);
    sink.summary["same_side_exponent"] = val.same_side_exponent;
    sink.summary["so_residual"] = ms.point.residual;
}

// ---------------------------------------------------------------------------
// Reciprocal inhibition
// ---------------------------------------------------------------------------

namespace ri {

inline Vec<double> q_start() {
    Vec<double> q(2);
    q << -0.51723351869, -0.73434299772;
    return q;
}

/// Selects the branch of Y = 0 the published base trajectory lies on.
inline Vec<double> eta_guess() {
    Vec<double> g(2);
    g << -0.27894449516, 1.71095643157;
    return g;
}

inline constexpr double kT = 0.5;

struct Setup {
    SlowFastSystem<double> sys;
    TransientConfig cfg;
    double dtau = 0.01;
};

inline Setup setup(const models::Params& params, double eps, const ExperimentSpec& spec) {
    models::Params p = params;
    p["epsilon"] = eps;
    Setup s{models::reciprocal_inhibition<double>(p), {}, spec.dtau.value_or(0.01)};
    s.cfg.h = spec.h.value_or(1e-4);
    s.cfg.dt = s.dtau;
    // Round-off in the h-grid differences keeps the double-precision SO
    // residual near 1e-10 at h = 1e-4.
    s.cfg.so.tol = 1e-9;
    return s;
}

struct Run {
    double eps = 0.0;
    double r = 0.0;
    TransientSolution sol;
    std::optional<SmstReference> ref;
    std::string ref_error;
    double ref_seconds = 0.0;
    double deviation = 0.0;
};

/// Entry pin v2(0) = eta2 + r, exit pin v1(T) = eta1 + r.
inline Run transient(const Setup& s, double r, bool with_reference) {
    Run out;
    out.eps = to_double(s.sys.epsilon);
    out.r = r;
    const auto base = integrate_reduced(s.sys, q_start(), kT, s.dtau, s.cfg.h, s.cfg.so, Direction::Forward, {}, eta_guess());
    const Vec<double> v2(Vec<double>::Constant(1, base.eta_values.front()[1] + r));
    const Vec<double> v1(Vec<double>::Constant(1, base.eta_values.back()[0] + r));
    out.sol = so_smst(s.sys, q_start(), kT, s.dtau, LayerPin::raw({1}, v2), LayerPin::raw({0}, v1), s.cfg, eta_guess());
    if (with_reference) {
        const Stopwatch clock;
        try {
            out.ref = smst_reference(s.sys, out.sol);
            out.deviation = max_deviation(out.sol, *out.ref);
        } catch (const Error& e) {
            out.ref_error = e.what();
        }
        out.ref_seconds = clock.seconds();
    }
    return out;
}

inline Json layer_json(const LayerSolution& l) {
    return {{"layer_time", l.layer_time},
            {"r", l.r},
            {"newton_iterations", l.mesh.iterations},
            {"pinned_bc_residual", l.pinned_bc_residual},
            {"free_bc_residual", l.free_bc_residual},
            {"lambda_free", std::max(l.split_free.lambda_s, l.split_free.lambda_u)},
            {"warnings", l.warnings}};
}

inline double max_bc_residual(const TransientSolution& sol) {
    double worst = 0.0;
    for (const auto* l : {&*sol.entry, &*sol.exit})
        worst = std::max({worst, l->pinned_bc_residual, l->free_bc_residual});
    return worst;
}

}  // namespace ri

inline void run_ri_base(const ExperimentSpec& spec, Sink& sink) {
    const auto s = ri::setup(spec.params, spec.eps.value_or(1e-3), spec);
    const Stopwatch clock;
    const auto base = integrate_reduced(s.sys, ri::q_start(), ri::kT, s.dtau, s.cfg.h, s.cfg.so, Direction::Forward, {},
                                        ri::eta_guess());
    sink.timing("base", clock.seconds());
    if (spec.trajectories) sink.write("base.csv", [&](std::ostream& os) { base.write_csv(os); });
    sink.summary["q_end"] = to_json(base.x_values.back());
    sink.summary["v_end"] = to_json(base.eta_values.back());
    sink.summary["v_start"] = to_json(base.eta_values.front());
    Vec<double> published(2);
    published << -0.39340933174, 0.00310289762;
    sink.summary["q_end_published"] = to_json(published);
    sink.summary["q_end_max_difference"] = (base.x_values.back() - published).cwiseAbs().maxCoeff();
}

inline void run_ri_transient(const ExperimentSpec& spec, Sink& sink) {
    const double eps = spec.eps.value_or(1e-3);
    const double r = spec.r.value_or(0.1);
    const auto s = ri::setup(spec.params, eps, spec);
    const auto run = ri::transient(s, r, true);
    if (spec.trajectories) sink.write("transient.csv", [&](std::ostream& os) { run.sol.write_csv(os); });
    sink.summary["eps"] = eps;
    sink.summary["r"] = r;
    sink.summary["t0"] = run.sol.t0;
    sink.summary["t1"] = run.sol.t1;
    sink.summary["entry"] = ri::layer_json(*run.sol.entry);
    sink.summary["exit"] = ri::layer_json(*run.sol.exit);
    sink.summary["z_start"] = to_json(run.sol.stitched.front().z());
    sink.summary["z_end"] = to_json(run.sol.stitched.back().z());
    sink.summary["error_bound_scale"] = transient_error_bound(1.0, eps, r);
    sink.timing("base", run.sol.timings.base_s);
    sink.timing("collocation", run.sol.timings.entry_s + run.sol.timings.exit_s);
    sink.timing("so_smst", run.sol.timings.total_s);
    sink.timing("reference", run.ref_seconds);
    if (!run.ref) {
        sink.summary["reference_error"] = run.ref_error;
        throw Error(ErrorKind::NewtonDivergence, "full-space reference failed: " + run.ref_error);
    }
    Table t({"tau", "deviation"});
    for (std::size_t k = 0; k < run.sol.stitched.size(); ++k)
        t.add({run.sol.stitched[k].tau, (run.sol.stitched[k].z() - run.ref->z[k]).norm()});
    if (spec.trajectories) sink.table("deviation", t);
    sink.summary["max_deviation"] = run.deviation;
    sink.summary["reference_newton_iterations"] = run.ref->mesh.iterations;
}

inline void run_ri_r_sweep(const ExperimentSpec& spec, Sink& sink) {
    const double eps = spec.eps.value_or(1e-3);
    const std::vector<double> rs = values_or(spec.sweep, {0.1, 0.5, 1.0});
    const auto s = ri::setup(spec.params, eps, spec);
    const auto results = parallel_map<ri::Run>(rs.size(), spec.jobs, [&](std::size_t i) {
        auto run = ri::transient(s, rs[i], true);
        if (!run.ref) throw Error(ErrorKind::NewtonDivergence, "full-space reference failed: " + run.ref_error);
        return run;
    });
    Table t({"r", "max_deviation", "t0", "t1", "error_bound_scale"});
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : results) {
        if (!p.value) continue;
        const auto& run = *p.value;
        t.add({run.r, run.deviation, run.sol.t0, run.sol.t1, transient_error_bound(1.0, eps, run.r)});
        xy.emplace_back(run.r, run.deviation);
    }
    sink.table("r_sweep", t);
    rethrow_first(results);
    sink.summary["eps"] = eps;
    sink.summary["slope_r"] = to_json(fit_slope(xy));
}

inline void run_ri_eps_sweep(const ExperimentSpec& spec, Sink& sink) {
    const double r = spec.r.value_or(0.1);
    const std::vector<double> epss = values_or(spec.sweep, {1e-9, 1e-7, 1e-5, 1e-3});
    // Sequential, so that the per-point timings are not distorted by sharing cores.
    const auto results = parallel_map<ri::Run>(epss.size(), 1, [&](std::size_t i) {
        return ri::transient(ri::setup(spec.params, epss[i], spec), r, true);
    });
    Table t({"eps", "base_s", "collocation_s", "total_s", "max_bc_residual", "reference", "reference_deviation"});
    Json observations = Json::array();
    for (std::size_t i = 0; i < epss.size(); ++i) {
        if (!results[i].value) continue;
        const auto& run = *results[i].value;
        const auto& tm = run.sol.timings;
        t.add({run.eps, tm.base_s, tm.entry_s + tm.exit_s, tm.total_s, ri::max_bc_residual(run.sol),
               run.ref ? "converged" : "failed", run.ref ? run.deviation : std::nan("")});
        if (!run.ref) observations.push_back({{"eps", run.eps}, {"reference_error", run.ref_error}});
    }
    sink.table("eps_sweep", t);
    sink.summary["r"] = r;
    sink.summary["reference_failures"] = observations;
    rethrow_first(results);
}

// ---------------------------------------------------------------------------
// FitzHugh-Nagumo homoclinic orbit
// ---------------------------------------------------------------------------

inline void write_ode(Sink& sink, const std::string& name, const OdeTrajectory& tr) {
    Table t({"t", "x", "y1", "y2"});
    for (std::size_t k = 0; k < tr.t.size(); ++k) t.add({tr.t[k], tr.y[k][0], tr.y[k][1], tr.y[k][2]});
    sink.table(name, t);
}

inline void run_fhn_homoclinic(const ExperimentSpec& spec, Sink& sink) {
    fhn::FhnConfig cfg;
    cfg.params = spec.params;
    cfg.params.erase("c");
    if (spec.eps) cfg.params["epsilon"] = *spec.eps;
    if (spec.h) cfg.h = *spec.h;
    if (spec.dtau) cfg.dtau = *spec.dtau;
    const auto res = fhn::assemble_homoclinic(cfg);

    char c_text[64];
    std::snprintf(c_text, sizeof c_text, "%.20Le", res.c_star);
    sink.summary["c_star"] = static_cast<double>(res.c_star);
    sink.summary["c_star_text"] = c_text;
    sink.summary["bisections"] = res.speed.bisections;
    sink.summary["x_b_r"] = res.x_b_r;
    sink.summary["x_b_l"] = res.x_b_l;
    sink.summary["match_residual"] = res.match_residual;
    sink.summary["match_iterations"] = res.gamma3.iterations;
    sink.summary["projection_discrepancy"] = res.projection_discrepancy;
    sink.summary["naive_discrepancy"] = res.naive_discrepancy;
    sink.summary["improvement_factor"] = res.naive_discrepancy / res.projection_discrepancy;
    sink.summary["departure_gap"] = res.departure_gap;
    sink.summary["entrance_gap"] = res.entrance_gap;
    sink.summary["gamma4_end_distance"] = res.gamma4_end_distance;
    Json folds = Json::array();
    for (std::size_t k = 0; k < res.fold_x.size(); ++k) folds.push_back({res.fold_x[k], res.fold_y1[k]});
    sink.summary["folds"] = folds;
    sink.summary["config"] = {{"c_bracket", {cfg.c_lo, cfg.c_hi}},
                              {"tol_c", cfg.tol_c},
                              {"offset", cfg.offset},
                              {"runaway_y1", cfg.runaway},
                              {"fall_y2", cfg.fall},
                              {"gamma1_stop", "first downward crossing of y2 = 0"},
                              {"shot_rtol", cfg.shot_ode.rtol},
                              {"ode_rtol", cfg.ode.rtol},
                              {"h", cfg.h},
                              {"dtau", cfg.dtau},
                              {"so_tol", cfg.so.tol},
                              {"m_left_start_x", cfg.ml_start},
                              {"m_left_stop_x", cfg.ml_x_max},
                              {"displacement", cfg.displacement},
                              {"section_y1", cfg.section},
                              {"match_tol", cfg.match_tol},
                              {"scan", {cfg.scan_lo, cfg.scan_hi}},
                              {"gamma4_tol", cfg.gamma4_tol}};
    if (!spec.trajectories) return;
    write_ode(sink, "gamma1", res.gamma1);
    sink.write("gamma2.csv", [&](std::ostream& os) { res.gamma2.gamma2.write_csv(os); });
    Table g3({"t", "x", "y1", "y2"});
    for (std::size_t k = 0; k < res.gamma3.t.size(); ++k)
        g3.add({res.gamma3.t[k], res.gamma3.z[k][0], res.gamma3.z[k][1], res.gamma3.z[k][2]});
    sink.table("gamma3", g3);
    sink.write("gamma4.csv", [&](std::ostream& os) { res.gamma4.write_csv(os); });
    sink.write("m_left.csv", [&](std::ostream& os) { res.m_left.write_csv(os); });
}

// ---------------------------------------------------------------------------
// Registry and runner
// ---------------------------------------------------------------------------

enum class Sweep { None, Eps, R, Dtau };

struct Experiment {
    std::string name;
    std::string model;
    std::string description;
    Sweep sweep = Sweep::None;
    std::function<void(const ExperimentSpec&, Sink&)> run;
};

inline const std::vector<Experiment>& registry() {
    static const std::vector<Experiment> all = {
        {"toy-eta-order", "toy", "eta^h error vs eps at h = eps, plain and split SO", Sweep::Eps, run_toy_eta_order},
        {"toy-phi-order", "toy", "phi^{eps,h} error vs eps at h = eps", Sweep::Eps, run_toy_phi_order},
        {"lindemann-order", "lindemann", "eta and phi errors vs eps at x = 1", Sweep::Eps, run_lindemann_order},
        {"linear-bvp", "linear-bvp", "exact SO/SOF values and the SO-SMST boundary layer", Sweep::None, run_linear_bvp},
        {"toy-rk4", "toy", "modified RK4 against a reduced-flow reference, plus dtau sweep", Sweep::Dtau, run_toy_rk4},
        {"toy-saddle", "toy", "full-system probes displaced along the unstable fiber", Sweep::None, run_toy_saddle},
        {"ri-base", "reciprocal-inhibition", "base trajectory on the slow manifold, T = 0.5", Sweep::None, run_ri_base},
        {"ri-transient", "reciprocal-inhibition", "SO-SMST transient and full-space reference", Sweep::None,
         run_ri_transient},
        {"ri-r-sweep", "reciprocal-inhibition", "transient error vs distance r", Sweep::R, run_ri_r_sweep},
        {"ri-eps-sweep", "reciprocal-inhibition", "SO-SMST for eps down to 1e-9, with timings", Sweep::Eps,
         run_ri_eps_sweep},
        {"fhn-homoclinic", "fitzhugh-nagumo", "wave speed and the four-segment homoclinic orbit", Sweep::None,
         run_fhn_homoclinic},
    };
    return all;
}

inline const Experiment& find_experiment(const std::string& name) {
    for (const auto& e : registry())
        if (e.name == name) return e;
    throw Error(ErrorKind::InvalidArgument, "no experiment named '" + name + "'");
}

struct RunReport {
    int exit_code = 0;
    Json summary;
};

/// Runs one experiment into `dir`/summary.json plus its CSV tables. Numerical
/// failures give exit code 2 and a summary with status "failed".
inline RunReport run(const ExperimentSpec& spec, const std::filesystem::path& dir) {
    const Experiment& exp = find_experiment(spec.experiment);
    spec.validate();
    Sink sink(dir);
    sink.summary["schema"] = kSchema;
    sink.summary["experiment"] = exp.name;
    sink.summary["model"] = exp.model;
    sink.summary["params"] = spec.params;
    sink.summary["seed"] = spec.seed;
    sink.summary["status"] = "running";
    sink.summary["timings"] = {{"base_s", 0.0}};
    RunReport report;
    const Stopwatch clock;
    try {
        exp.run(spec, sink);
        sink.summary["status"] = "ok";
    } catch (const Error& e) {
        sink.summary["status"] = "failed";
        sink.summary["error"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
        report.exit_code = 2;
    }
    sink.timing("total", clock.seconds());
    sink.summary["files"] = sink.files();
    if (!dir.empty()) {
        std::ofstream os(dir / "summary.json", std::ios::binary);
        os << sink.summary.dump(2) << '\n';
    }
    report.summary = sink.summary;
    return report;
}

/// Jacobian check of a catalog model at its probe state.
inline Json validate_model(const std::string& name, const models::Params& params = {}) {
    const auto& entry = models::find_model(name);
    const auto sys = entry.builder(params);
    const Vec<double> x = Eigen::Map<const Vec<double>>(entry.probe_x.data(), static_cast<Eigen::Index>(entry.probe_x.size()));
    const Vec<double> y = Eigen::Map<const Vec<double>>(entry.probe_y.data(), static_cast<Eigen::Index>(entry.probe_y.size()));
    const auto check = validate_jacobians(sys, x, y);
    return {{"schema", kSchema},
            {"model", name},
            {"n_s", sys.n_s},
            {"n_f", sys.n_f},
            {"epsilon", to_double(sys.epsilon)},
            {"max_rel_error", check.max_rel_error},
            {"worst_block", check.worst_block},
            {"ok", check.ok}};
}

}  // namespace slowfast::experiments
