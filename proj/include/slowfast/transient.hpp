#pragma once

// Transients near a saddle-type slow manifold. The slow coordinates follow a
// precomputed base trajectory x0(tau); only the fast variables are solved for,
// on the boundary layers [0, t0] and [T/eps - t1, T/eps] in fast time:
//
//     y' = Y(x, y),   x = x0 + M(x0) (y - eta(x0)),   M = phi (I_f + d_eta phi)^{-1}.
//
// In between, y = eta(x0). A full-space collocation solver in slow time
// serves as a reference.

#include "slowfast/collocation.hpp"
#include "slowfast/reduced_flow.hpp"
#include "slowfast/spectral.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>

namespace slowfast {

/// Boundary data for one layer: either coordinates in the stable (entry) or
/// unstable (exit) basis of the corrected deviation, or raw fast coordinates.
struct LayerPin {
    enum class Kind { Split, Raw };
    Kind kind = Kind::Split;
    Vec<double> values;
    std::vector<int> indices;  // fast-variable indices for Raw pins

    static LayerPin split(Vec<double> coords) { return {Kind::Split, std::move(coords), {}}; }
    static LayerPin raw(std::vector<int> idx, Vec<double> vals) { return {Kind::Raw, std::move(vals), std::move(idx)}; }
};

struct TransientConfig {
    double dt = 0.01;
    double tol = 1e-10;  // decay tolerance defining t0 and t1
    double h = 1e-4;     // SO grid spacing at the layer points
    double hyperbolicity_floor = 1e-6;
    SoConfig<double> so;
    NewtonOptions newton{1e-12, 40};
    bool naive_fibers = false;  // phi := 0, i.e. vertical fibers x = x0
};

/// Manifold data at one point of the slow base.
struct FiberSample {
    double tau = 0.0;
    Vec<double> x0;
    Vec<double> eta;
    Mat<double> d_eta;
    Mat<double> phi;
    Mat<double> M;  // phi (I + d_eta phi)^{-1}

    [[nodiscard]] Vec<double> x_of(const Vec<double>& y) const { return x0 + M * (y - eta); }
};

inline Mat<double> fast_linearization(const SlowFastSystem<double>& sys, const Vec<double>& x, const Vec<double>& eta,
                                      const Mat<double>& d_eta) {
    return -d_eta * sys.dX_dy(x, eta) + sys.dY_dy(x, eta);
}

inline FiberSample fiber_sample(const SlowFastSystem<double>& sys, double tau, const Vec<double>& x0, double h,
                                const SoConfig<double>& cfg, const Vec<double>& guess, bool naive = false) {
    const auto ms = sample_manifold(sys, x0, h, cfg, guess);
    FiberSample s;
    s.tau = tau;
    s.x0 = x0;
    s.eta = ms.point.eta;
    s.d_eta = ms.point.d_eta;
    s.phi = naive ? Mat<double>::Zero(sys.n_s, sys.n_f) : ms.fiber.phi;
    Eigen::PartialPivLU<Mat<double>> lu(ms.fiber.correction());
    if (detail::nearly_singular(lu)) throw Error(ErrorKind::SingularCorrection, "I_f + d_eta phi is singular");
    s.M = s.phi * lu.inverse();
    return s;
}

struct LayerSolution {
    HermiteMesh mesh;
    std::vector<FiberSample> samples;  // one per collocation point (2N + 1)
    SpectralSplit split_pinned;        // at the pinned end
    SpectralSplit split_free;          // at the decay end
    Mat<double> pin_matrix;            // linear functional of y - eta at the pinned end
    Vec<double> pin_target;
    double r = 0.0;           // deviation at the pinned end
    double layer_time = 0.0;  // t0 or t1, a multiple of the mesh spacing
    double pinned_bc_residual = 0.0;
    double free_bc_residual = 0.0;
    std::vector<std::string> warnings;

    [[nodiscard]] Vec<double> x_at_node(std::size_t i) const { return samples[2 * i].x_of(mesh.states[i]); }
};

namespace detail {

enum class LayerEnd { Entry, Exit };

inline LayerSolution solve_layer(const SlowFastSystem<double>& sys, const BaseTrajectory<double>& base,
                                 const LayerPin& pin, const TransientConfig& cfg, LayerEnd end) {
    const double eps = to_double(sys.epsilon);
    const int nf = sys.n_f;
    const double T = base.tau_mesh.back();
    const double T_fast = T / eps;
    const bool entry = end == LayerEnd::Entry;

    LayerSolution out;
    const std::size_t pin_node = entry ? 0 : base.size() - 1;
    const FiberSample pinned = fiber_sample(sys, base.tau_mesh[pin_node], base.x_values[pin_node], cfg.h, cfg.so,
                                            base.eta_values[pin_node], cfg.naive_fibers);
    out.split_pinned =
        split_spectrum(fast_linearization(sys, pinned.x0, pinned.eta, pinned.d_eta), cfg.hyperbolicity_floor);
    const SpectralSplit& sp = out.split_pinned;
    const Mat<double>& basis = entry ? sp.basis_s : sp.basis_u;
    const Mat<double>& coord = entry ? sp.coord_s : sp.coord_u;
    const double rate = entry ? sp.lambda_s : sp.lambda_u;
    const int n_pin = static_cast<int>(basis.cols());

    // Pinned-end condition  P (y - eta) = target  and the deviation guess.
    Vec<double> dev_guess;
    if (pin.kind == LayerPin::Kind::Split) {
        if (pin.values.size() != n_pin)
            throw Error(ErrorKind::InvalidArgument, "split pin needs one value per " +
                                                        std::string(entry ? "stable" : "unstable") + " direction");
        Eigen::PartialPivLU<Mat<double>> lu(Mat<double>::Identity(nf, nf) + pinned.d_eta * pinned.phi);
        out.pin_matrix = coord * lu.inverse();
        out.pin_target = pin.values;
        dev_guess = (Mat<double>::Identity(nf, nf) + pinned.d_eta * pinned.phi) * (basis * pin.values);
    } else {
        if (static_cast<int>(pin.indices.size()) != n_pin || pin.values.size() != n_pin)
            throw Error(ErrorKind::InvalidArgument, "raw pin count must match the number of pinned directions");
        out.pin_matrix = Mat<double>::Zero(n_pin, nf);
        out.pin_target.resize(n_pin);
        Mat<double> sub(n_pin, n_pin);
        Vec<double> rhs(n_pin);
        for (int k = 0; k < n_pin; ++k) {
            const int idx = pin.indices[static_cast<std::size_t>(k)];
            if (idx < 0 || idx >= nf) throw Error(ErrorKind::InvalidArgument, "raw pin index out of range");
            out.pin_matrix(k, idx) = 1.0;
            out.pin_target[k] = pin.values[k] - pinned.eta[idx];
            sub.row(k) = basis.row(idx);
            rhs[k] = out.pin_target[k];
        }
        // Deviation inside the decaying subspace that matches the pins.
        dev_guess = n_pin > 0 ? Vec<double>(basis * sub.fullPivLu().solve(rhs)) : Vec<double>::Zero(nf);
    }
    out.r = n_pin > 0 ? dev_guess.norm() : 0.0;

    // Layer length, rounded up to whole mesh steps and clamped to the base.
    double t_layer = 0.0;
    if (out.r > cfg.tol && rate > 0.0) t_layer = boundary_layer_time(rate, out.r, cfg.tol);
    if (cfg.tol >= eps * out.r * out.r && out.r > 0.0)
        out.warnings.push_back("layer tolerance is not small compared with eps r^2");
    int N = std::max(1, static_cast<int>(std::ceil(t_layer / cfg.dt - 1e-9)));
    double dt = cfg.dt;
    if (N * cfg.dt > T_fast) {
        N = std::max(1, static_cast<int>(std::ceil(T_fast / cfg.dt - 1e-9)));
        dt = T_fast / N;
    }
    out.layer_time = N * dt;
    const double t_start = entry ? 0.0 : T_fast - out.layer_time;

    // Manifold data at every collocation point.
    const int npts = 2 * N + 1;
    out.samples.resize(static_cast<std::size_t>(npts));
    Vec<double> guess = pinned.eta;
    for (int k = 0; k < npts; ++k) {
        const int kk = entry ? k : npts - 1 - k;  // walk away from the pinned end
        const double t = t_start + 0.5 * dt * kk;
        const double tau = (entry || kk != npts - 1) ? eps * t : T;
        if ((entry && kk == 0) || (!entry && kk == npts - 1)) {
            out.samples[static_cast<std::size_t>(kk)] = pinned;
        } else {
            out.samples[static_cast<std::size_t>(kk)] = fiber_sample(sys, tau, base.x_at(tau), cfg.h, cfg.so, guess, cfg.naive_fibers);
        }
        guess = out.samples[static_cast<std::size_t>(kk)].eta;
    }
    const FiberSample& free_end = out.samples[entry ? static_cast<std::size_t>(npts - 1) : 0];
    out.split_free =
        split_spectrum(fast_linearization(sys, free_end.x0, free_end.eta, free_end.d_eta), cfg.hyperbolicity_floor);
    // At the decay end the growing (entry) or decaying (exit) components vanish.
    const Mat<double> free_matrix = entry ? out.split_free.coord_u : out.split_free.coord_s;
    if (free_matrix.rows() + n_pin != nf)
        throw Error(ErrorKind::NonHyperbolic, "splitting dimensions change along the layer");

    CollocationProblem prob;
    prob.m = nf;
    prob.t.resize(static_cast<std::size_t>(N + 1));
    for (int i = 0; i <= N; ++i) prob.t[static_cast<std::size_t>(i)] = t_start + dt * i;
    const auto& S = out.samples;
    prob.f = [&sys, &S](int k, const Vec<double>& y) { return sys.Y(S[static_cast<std::size_t>(k)].x_of(y), y); };
    prob.jac = [&sys, &S](int k, const Vec<double>& y) {
        const FiberSample& s = S[static_cast<std::size_t>(k)];
        const Vec<double> x = s.x_of(y);
        return Mat<double>(sys.dY_dy(x, y) + sys.dY_dx(x, y) * s.M);
    };
    const Vec<double> eta_first = S.front().eta;
    const Vec<double> eta_last = S.back().eta;
    const Mat<double> P = out.pin_matrix;
    const Vec<double> target = out.pin_target;
    prob.bc = [=](const Vec<double>& ya, const Vec<double>& yb) {
        Vec<double> g(nf);
        if (entry) {
            g << P * (ya - eta_first) - target, free_matrix * (yb - eta_last);
        } else {
            g << free_matrix * (ya - eta_first), P * (yb - eta_last) - target;
        }
        return g;
    };
    prob.bc_jac_a = [=](const Vec<double>&, const Vec<double>&) {
        Mat<double> J = Mat<double>::Zero(nf, nf);
        if (entry) J.topRows(n_pin) = P;
        else J.topRows(free_matrix.rows()) = free_matrix;
        return J;
    };
    prob.bc_jac_b = [=](const Vec<double>&, const Vec<double>&) {
        Mat<double> J = Mat<double>::Zero(nf, nf);
        if (entry) J.bottomRows(free_matrix.rows()) = free_matrix;
        else J.bottomRows(n_pin) = P;
        return J;
    };

    // Initial guess: exponential decay of the pinned deviation.
    std::vector<Vec<double>> z0(static_cast<std::size_t>(N + 1));
    for (int i = 0; i <= N; ++i) {
        const double s = entry ? dt * i : dt * (N - i);
        z0[static_cast<std::size_t>(i)] = S[static_cast<std::size_t>(2 * i)].eta + std::exp(-rate * s) * dev_guess;
    }
    out.mesh = solve_collocation(prob, std::move(z0), cfg.newton);
    const Vec<double> g = prob.bc(out.mesh.states.front(), out.mesh.states.back());
    if (entry) {
        out.pinned_bc_residual = g.head(n_pin).lpNorm<Eigen::Infinity>();
        out.free_bc_residual = g.tail(nf - n_pin).lpNorm<Eigen::Infinity>();
    } else {
        out.free_bc_residual = g.head(nf - n_pin).lpNorm<Eigen::Infinity>();
        out.pinned_bc_residual = g.tail(n_pin).lpNorm<Eigen::Infinity>();
    }
    return out;
}

}  // namespace detail

/// Fast layer at tau = 0 leading onto the base trajectory.
inline LayerSolution solve_entry_bvp(const SlowFastSystem<double>& sys, const BaseTrajectory<double>& base,
                                     const LayerPin& pin, const TransientConfig& cfg = {}) {
    return detail::solve_layer(sys, base, pin, cfg, detail::LayerEnd::Entry);
}

/// Fast layer at tau = T leaving the base trajectory.
inline LayerSolution solve_exit_bvp(const SlowFastSystem<double>& sys, const BaseTrajectory<double>& base,
                                    const LayerPin& pin, const TransientConfig& cfg = {}) {
    return detail::solve_layer(sys, base, pin, cfg, detail::LayerEnd::Exit);
}

enum class Segment { Entry, Slow, Exit };

inline const char* to_string(Segment s) {
    switch (s) {
        case Segment::Entry: return "entry";
        case Segment::Slow: return "slow";
        case Segment::Exit: return "exit";
    }
    return "?";
}

struct TransientPoint {
    double t = 0.0;
    double tau = 0.0;
    Vec<double> x;
    Vec<double> y;
    Segment segment = Segment::Slow;

    [[nodiscard]] Vec<double> z() const {
        Vec<double> out(x.size() + y.size());
        out << x, y;
        return out;
    }
};

struct TransientTimings {
    double base_s = 0.0;
    double entry_s = 0.0;
    double exit_s = 0.0;
    double total_s = 0.0;
};

struct TransientSolution {
    BaseTrajectory<double> base;
    std::optional<LayerSolution> entry;
    std::optional<LayerSolution> exit;
    std::optional<LayerPin> entry_pin;
    std::optional<LayerPin> exit_pin;
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<TransientPoint> stitched;
    TransientTimings timings;

    /// t, tau, x..., y..., segment
    void write_csv(std::ostream& os) const {
        const Eigen::Index ns = stitched.front().x.size();
        const Eigen::Index nf = stitched.front().y.size();
        os << "t,tau";
        for (Eigen::Index i = 0; i < ns; ++i) os << ",x" << i;
        for (Eigen::Index i = 0; i < nf; ++i) os << ",y" << i;
        os << ",segment\n" << std::scientific << std::setprecision(16);
        for (const auto& p : stitched) {
            os << p.t << ',' << p.tau;
            for (Eigen::Index i = 0; i < ns; ++i) os << ',' << p.x[i];
            for (Eigen::Index i = 0; i < nf; ++i) os << ',' << p.y[i];
            os << ',' << to_string(p.segment) << '\n';
        }
    }
};

/// Joins the layers with the lifted base: y = eta(x0) strictly between the
/// layers, x recovered through the fiber map inside them.
inline TransientSolution assemble_transient(const SlowFastSystem<double>& sys, const BaseTrajectory<double>& base,
                                            std::optional<LayerSolution> entry, std::optional<LayerSolution> exit) {
    const double eps = to_double(sys.epsilon);
    const double T = base.tau_mesh.back();
    TransientSolution sol;
    sol.base = base;
    sol.t0 = entry ? entry->layer_time : 0.0;
    sol.t1 = exit ? exit->layer_time : 0.0;
    const double tau_lo = eps * sol.t0;
    const double tau_hi = T - eps * sol.t1;
    if (entry && exit && tau_lo > tau_hi)
        throw Error(ErrorKind::InvalidArgument, "entry and exit layers overlap; shorten the layers or extend T");
    // Margin that keeps the stitched mesh strictly increasing.
    const double gap = 1e-9 * std::max(1.0, T);

    if (entry) {
        for (std::size_t i = 0; i < entry->mesh.states.size(); ++i)
            sol.stitched.push_back({entry->mesh.t_nodes[i], eps * entry->mesh.t_nodes[i], entry->x_at_node(i),
                                    entry->mesh.states[i], Segment::Entry});
    }
    for (std::size_t j = 0; j < base.size(); ++j) {
        const double tau = base.tau_mesh[j];
        const bool after_entry = entry ? tau > tau_lo + gap : true;
        const bool before_exit = exit ? tau < tau_hi - gap : true;
        if (after_entry && before_exit)
            sol.stitched.push_back({tau / eps, tau, base.x_values[j], base.eta_values[j], Segment::Slow});
    }
    if (exit) {
        for (std::size_t i = 0; i < exit->mesh.states.size(); ++i) {
            const double t = exit->mesh.t_nodes[i];
            const double tau = i + 1 == exit->mesh.states.size() ? T : eps * t;
            sol.stitched.push_back({t, tau, exit->x_at_node(i), exit->mesh.states[i], Segment::Exit});
        }
    }
    sol.entry = std::move(entry);
    sol.exit = std::move(exit);
    return sol;
}

/// Base trajectory from x00 over [0, T] followed by whichever layers have pins.
inline TransientSolution so_smst(const SlowFastSystem<double>& sys, const Vec<double>& x00, double T, double dtau,
                                 const std::optional<LayerPin>& entry_pin, const std::optional<LayerPin>& exit_pin,
                                 const TransientConfig& cfg = {}, const Vec<double>& eta_guess = Vec<double>()) {
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
    const auto t_begin = clock::now();
    auto base = integrate_reduced(sys, x00, T, dtau, cfg.h, cfg.so, Direction::Forward, {}, eta_guess);
    const auto t_base = clock::now();
    std::optional<LayerSolution> entry, exit;
    if (entry_pin) entry = solve_entry_bvp(sys, base, *entry_pin, cfg);
    const auto t_entry = clock::now();
    if (exit_pin) exit = solve_exit_bvp(sys, base, *exit_pin, cfg);
    const auto t_exit = clock::now();
    auto sol = assemble_transient(sys, base, std::move(entry), std::move(exit));
    sol.entry_pin = entry_pin;
    sol.exit_pin = exit_pin;
    const auto t_end = clock::now();
    sol.timings = {seconds(t_begin, t_base), seconds(t_base, t_entry), seconds(t_entry, t_exit),
                   seconds(t_begin, t_end)};
    return sol;
}

// ---------------------------------------------------------------------------
// Full-space reference
// ---------------------------------------------------------------------------

struct SmstReference {
    std::vector<double> tau;
    std::vector<Vec<double>> z;
    HermiteMesh mesh;
};

/// Full-space collocation in slow time with V = U / eps on the stitched mesh
/// of `sol`, with the same boundary data: x(0), the entry pin at tau = 0 and
/// the exit pin at tau = T. The stitched solution is the initial guess.
inline SmstReference smst_reference(const SlowFastSystem<double>& sys, const TransientSolution& sol,
                                    const NewtonOptions& newton = {1e-10, 40}) {
    const int ns = sys.n_s;
    const int nf = sys.n_f;
    const int m = ns + nf;
    const double eps = to_double(sys.epsilon);
    CollocationProblem prob;
    prob.m = m;
    std::vector<Vec<double>> z0;
    for (const auto& p : sol.stitched) {
        prob.t.push_back(p.tau);
        z0.push_back(p.z());
    }
    prob.f = [&sys, eps](int, const Vec<double>& z) { return Vec<double>(sys.full_field(z) / eps); };
    prob.jac = [&sys, eps](int, const Vec<double>& z) { return Mat<double>(sys.full_jacobian(z) / eps); };

    const Vec<double> x_start = sol.stitched.front().x;
    Mat<double> Pa = Mat<double>::Zero(0, nf), Pb = Mat<double>::Zero(0, nf);
    Vec<double> ca(0), cb(0), eta_a(nf), eta_b(nf);
    eta_a.setZero();
    eta_b.setZero();
    if (sol.entry) {
        Pa = sol.entry->pin_matrix;
        ca = sol.entry->pin_target;
        eta_a = sol.entry->samples.front().eta;
    }
    if (sol.exit) {
        Pb = sol.exit->pin_matrix;
        cb = sol.exit->pin_target;
        eta_b = sol.exit->samples.back().eta;
    }
    if (ns + Pa.rows() + Pb.rows() != m)
        throw Error(ErrorKind::InvalidArgument, "boundary data do not determine the full-space problem");
    prob.bc = [=](const Vec<double>& za, const Vec<double>& zb) {
        Vec<double> g(m);
        g << za.head(ns) - x_start, Pa * (za.tail(nf) - eta_a) - ca, Pb * (zb.tail(nf) - eta_b) - cb;
        return g;
    };
    prob.bc_jac_a = [=](const Vec<double>&, const Vec<double>&) {
        Mat<double> J = Mat<double>::Zero(m, m);
        J.topLeftCorner(ns, ns).setIdentity();
        J.block(ns, ns, Pa.rows(), nf) = Pa;
        return J;
    };
    prob.bc_jac_b = [=](const Vec<double>&, const Vec<double>&) {
        Mat<double> J = Mat<double>::Zero(m, m);
        J.block(ns + Pa.rows(), ns, Pb.rows(), nf) = Pb;
        return J;
    };
    SmstReference ref;
    ref.mesh = solve_collocation(prob, std::move(z0), newton);
    ref.tau = prob.t;
    ref.z = ref.mesh.states;
    return ref;
}

/// max_k |z_ref(tau_k) - z_sol(tau_k)| over the shared mesh.
inline double max_deviation(const TransientSolution& sol, const SmstReference& ref) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.stitched.size(); ++k)
        worst = std::max(worst, (sol.stitched[k].z() - ref.z[k]).norm());
    return worst;
}

/// Scaling part lambda^{-1} eps r^2 of the transient error estimate.
inline double transient_error_bound(double lambda, double epsilon, double r) {
    if (!(lambda > 0.0) || !(epsilon > 0.0) || r < 0.0)
        throw Error(ErrorKind::InvalidArgument, "transient_error_bound needs lambda, epsilon > 0 and r >= 0");
    return epsilon * r * r / lambda;
}

}  // namespace slowfast
