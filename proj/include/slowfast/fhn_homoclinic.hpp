#pragma once

// Homoclinic orbit of the FitzHugh-Nagumo travelling-wave system, assembled
// from four segments:
//   gamma1  fast jump from the strong unstable direction of (0,0,0) to M^r,
//   gamma2  slow segment along M^r (SO-SMST entry layer + reduced flow),
//   gamma3  fast jump from M^r to M^l, matched at the section y1 = 1/2,
//   gamma4  slow segment along M^l back to (0,0,0).

#include "slowfast/models.hpp"
#include "slowfast/transient.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <sstream>

namespace slowfast::fhn {

// The wave-speed shots run in long double: the bisection on c must resolve
// the separatrix far below double precision because the mismatch in c is
// amplified by ~1e12 before the shot reaches M^r.
using Real = long double;
using SystemBuilder = std::function<SlowFastSystem<Real>(Real c)>;

struct FhnConfig {
    models::Params params;  // overrides for the FHN model except c
    // wave speed
    double c_lo = 1.0;
    double c_hi = 1.5;
    double tol_c = 1e-18;
    double offset = 1e-8;     // along the strong unstable eigenvector
    double runaway = 1.5;     // y1 level that marks a shot above W^s(M^r)
    double fall = -0.01;      // y2 level that marks a shot below it; y2 ~ -eps on M^r
    double shot_time = 500.0;
    OdeOptions shot_ode{1e-17, 1e-19, 1e-3, 5'000'000, false};
    OdeOptions ode{1e-12, 1e-14, 1e-3, 2'000'000, true};
    // manifolds
    double h = 1e-4;
    double dtau = 0.01;
    // SO and SOF contract slowly near the fold of M^r at x ~ 0.126
    SoConfig<double> so{1e-11, 400};
    TransientConfig transient;
    double ml_start = 1e-6;  // x on M^l where the backward sweep starts
    double ml_x_max = 0.2;   // the backward sweep stops beyond this x
    // matching
    double displacement = 1e-6;
    double start_fd_step = 1e-5;  // central difference of the start point in x_b
    double section = 0.5;
    double match_time = 1000.0;
    double match_tol = 1e-9;
    int match_iter = 30;
    double scan_lo = 0.09;
    double scan_hi = 0.116;
    int scan_points = 14;
    // final segment
    double gamma4_tol = 1e-6;
    double gamma4_max_tau = 20.0;
};

inline SystemBuilder default_builder(const models::Params& overrides) {
    return [overrides](Real c) { return models::fitzhugh_nagumo_at_speed<Real>(overrides, c); };
}

inline SlowFastSystem<double> system_at(const models::Params& overrides, double c) {
    models::Params p = overrides;
    p["c"] = c;
    return models::fitzhugh_nagumo<double>(p);
}

// ---------------------------------------------------------------------------
// 1. Wave speed
// ---------------------------------------------------------------------------

enum class ShotSide { Above, Below, Undecided };

inline const char* to_string(ShotSide s) {
    switch (s) {
        case ShotSide::Above: return "above";
        case ShotSide::Below: return "below";
        case ShotSide::Undecided: return "undecided";
    }
    return "?";
}

struct Shot {
    ShotSide side = ShotSide::Undecided;
    BasicOdeTrajectory<Real> trajectory;
};

/// Strong unstable eigenvector of the full linearization at z, oriented so
/// that its y1 component is positive.
template <typename S>
Vec<S> strong_unstable_direction(const SlowFastSystem<S>& sys, const Vec<S>& z) {
    Eigen::EigenSolver<Mat<S>> es(sys.full_jacobian(z));
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
    if (!(es.eigenvalues()[best].real() > S(0)))
        throw Error(ErrorKind::NonHyperbolic, "equilibrium has no unstable direction");
    Vec<S> v = es.eigenvectors().col(best).real().normalized();
    if (v[1] < S(0)) v = -v;
    return v;
}

/// Shot along the strong unstable direction of (0,0,0). Passing y1 = runaway
/// means the shot went over W^s(M^r); y2 falling through `fall` means it
/// dropped back below. With `terminate_at_turn` the shot instead stops at
/// its first downward crossing of y2 = 0, which is where gamma1 ends.
inline Shot shoot(const SlowFastSystem<Real>& sys, const FhnConfig& cfg, bool terminate_at_turn = false) {
    const Vec<Real> z0 = Vec<Real>::Zero(3);
    const Vec<Real> start = z0 + Real(cfg.offset) * strong_unstable_direction(sys, z0);
    const BasicRhsFn<Real> f = [&sys](Real, const Vec<Real>& z) { return sys.full_field(z); };
    const Real runaway = cfg.runaway;
    const Real fall = terminate_at_turn ? Real(0) : Real(cfg.fall);
    const std::vector<BasicOdeEvent<Real>> ev{{[runaway](Real, const Vec<Real>& z) { return z[1] - runaway; }, 1},
                                              {[fall](Real, const Vec<Real>& z) { return z[2] - fall; }, -1}};
    OdeOptions opts = cfg.shot_ode;
    opts.store = terminate_at_turn;
    Shot s;
    s.trajectory = integrate_adaptive<Real>(f, Real(0), start, Real(cfg.shot_time), opts, ev);
    s.side = s.trajectory.event_index == 0   ? ShotSide::Above
             : s.trajectory.event_index == 1 ? ShotSide::Below
                                             : ShotSide::Undecided;
    return s;
}

struct WaveSpeed {
    Real c_star = 0;
    Real c_lo = 0;
    Real c_hi = 0;
    int bisections = 0;
    OdeTrajectory gamma1;  // shot at c_star up to its first turn y2 = 0
};

inline OdeTrajectory to_double(const BasicOdeTrajectory<Real>& tr) {
    OdeTrajectory out;
    out.event_index = tr.event_index;
    out.steps = tr.steps;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        out.t.push_back(static_cast<double>(tr.t[k]));
        out.y.push_back(tr.y[k].cast<double>());
    }
    return out;
}

inline WaveSpeed find_wave_speed(const SystemBuilder& builder, Real c_lo, Real c_hi, Real tol_c,
                                 const FhnConfig& cfg = {}) {
    if (c_lo > c_hi) std::swap(c_lo, c_hi);
    Shot lo = shoot(builder(c_lo), cfg);
    if (c_lo == c_hi) {
        if (lo.side != ShotSide::Undecided)
            throw Error(ErrorKind::NoBracket, std::string("degenerate bracket classifies as ") + to_string(lo.side));
        return {c_lo, c_lo, c_hi, 0, to_double(shoot(builder(c_lo), cfg, true).trajectory)};
    }
    Shot hi = shoot(builder(c_hi), cfg);
    if (lo.side == hi.side || lo.side == ShotSide::Undecided || hi.side == ShotSide::Undecided) {
        std::ostringstream msg;
        msg << "c = " << static_cast<double>(c_lo) << " is " << to_string(lo.side)
            << " and c = " << static_cast<double>(c_hi) << " is " << to_string(hi.side);
        throw Error(ErrorKind::NoBracket, msg.str());
    }
    const ShotSide side_lo = lo.side;
    WaveSpeed out;
    while (c_hi - c_lo > tol_c) {
        const Real mid = (c_lo + c_hi) / 2;
        if (mid <= c_lo || mid >= c_hi) break;
        const Shot m = shoot(builder(mid), cfg);
        ++out.bisections;
        if (m.side == ShotSide::Undecided)
            throw Error(ErrorKind::NonConvergence, "shot neither ran away nor fell back; increase shot_time");
        (m.side == side_lo ? c_lo : c_hi) = mid;
    }
    out.c_lo = c_lo;
    out.c_hi = c_hi;
    out.c_star = side_lo == ShotSide::Below ? c_lo : c_hi;
    out.gamma1 = to_double(shoot(builder(out.c_star), cfg, true).trajectory);
    return out;
}

// ---------------------------------------------------------------------------
// Manifold helpers
// ---------------------------------------------------------------------------

/// Root of f_a(y1) = x - p nearest to y1_guess, lifted to (y1, 0).
inline Vec<double> branch_guess(const SlowFastSystem<double>& sys, double x, double y1_guess) {
    Vec<double> g(2);
    g << y1_guess, 0.0;
    return critical_manifold(sys, Vec<double>(Vec<double>::Constant(1, x)), g, 1e-13);
}

/// Reduced flow from x0 until x reaches x_target, landing on it with a
/// constant step no larger than dtau.
inline BaseTrajectory<double> reduced_until(const SlowFastSystem<double>& sys, double x0, double x_target,
                                            const FhnConfig& cfg, const Vec<double>& eta_guess, double max_tau) {
    const Vec<double> start = Vec<double>::Constant(1, x0);
    const double sgn = x_target >= x0 ? 1.0 : -1.0;
    ReducedOptions<double> opts;
    opts.stop = [=](const Vec<double>& x) { return sgn * (x[0] - x_target) >= 0.0; };
    const auto probe = integrate_reduced(sys, start, max_tau, cfg.dtau, cfg.h, cfg.so, Direction::Forward, opts, eta_guess);
    if (sgn * (probe.x_values.back()[0] - x_target) < 0.0)
        throw Error(ErrorKind::NonConvergence, "reduced flow does not reach the target abscissa");
    // Crossing time by bisection on the Hermite interpolant of the last step.
    double a = probe.tau_mesh[probe.size() - 2], b = probe.tau_mesh.back();
    for (int it = 0; it < 100; ++it) {
        const double m = 0.5 * (a + b);
        if (sgn * (probe.x_at(m)[0] - x_target) >= 0.0) b = m;
        else a = m;
    }
    const double T = 0.5 * (a + b);
    const double steps = std::max(1.0, std::ceil(T / cfg.dtau));
    return integrate_reduced(sys, start, T, T / steps, cfg.h, cfg.so, Direction::Forward, {}, eta_guess);
}

// ---------------------------------------------------------------------------
// 2. gamma1 -> gamma2
// ---------------------------------------------------------------------------

struct Attachment {
    Vec<double> p;    // end of gamma1
    double x00 = 0.0; // base point on M^r
    TransientSolution gamma2;
    double discrepancy = 0.0;  // |gamma2(0) - p|
};

/// Projects the end p of gamma1 onto M^r along the fibers (or vertically when
/// naive), then follows M^r to x_end with an SO-SMST entry layer pinned by the
/// stable coordinates of p.
inline Attachment attach_to_manifold(const SlowFastSystem<double>& sys, const Vec<double>& p, double x_end,
                                     const FhnConfig& cfg, bool naive) {
    Attachment out;
    out.p = p;
    const Vec<double> xp = p.head(1);
    const Vec<double> yp = p.tail(2);
    const Vec<double> guess = branch_guess(sys, xp[0], yp[0]);
    const auto ms = sample_manifold(sys, xp, cfg.h, cfg.so, guess);
    out.x00 = naive ? xp[0] : project_to_manifold(ms.fiber, State<double>{xp, yp}, ms.point.eta)[0];

    TransientConfig tcfg = cfg.transient;
    tcfg.so = cfg.so;
    tcfg.h = cfg.h;
    tcfg.naive_fibers = naive;
    auto base = reduced_until(sys, out.x00, x_end, cfg, ms.point.eta, 10.0);
    // Stable coordinates of the deviation of p from its base point.
    const FiberSample s0 = fiber_sample(sys, 0.0, base.x_values[0], cfg.h, cfg.so, base.eta_values[0], naive);
    const auto split = split_spectrum(fast_linearization(sys, s0.x0, s0.eta, s0.d_eta), tcfg.hyperbolicity_floor);
    Eigen::PartialPivLU<Mat<double>> lu(Mat<double>::Identity(2, 2) + s0.d_eta * s0.phi);
    const Vec<double> coords = split.coord_s * lu.solve(yp - s0.eta);
    auto entry = solve_entry_bvp(sys, base, LayerPin::split(coords), tcfg);
    out.gamma2 = assemble_transient(sys, base, std::move(entry), std::nullopt);
    out.gamma2.entry_pin = LayerPin::split(coords);
    out.discrepancy = (out.gamma2.stitched.front().z() - p).norm();
    return out;
}

// ---------------------------------------------------------------------------
// 4. Matching W^u(M^r) and W^s(M^l) at y1 = section
// ---------------------------------------------------------------------------

struct SectionHit {
    Vec<double> start;      // displaced point next to the manifold
    Vec<double> base;       // (x_b, eta(x_b))
    Vec<double> value;      // (x, y2) on the section
    Vec<double> d_value;    // derivative of value with respect to x_b
    OdeTrajectory trajectory;
};

struct SectionStart {
    Vec<double> base;   // (x_b, eta(x_b))
    Vec<double> start;  // base + displacement * fiber direction
};

/// (x_b, eta(x_b)) displaced along the unstable (forward) or stable
/// (backward) fiber direction, oriented towards the section.
inline SectionStart section_start(const SlowFastSystem<double>& sys, double x_b, const Vec<double>& eta_guess,
                                  bool unstable, const FhnConfig& cfg) {
    const Vec<double> xb = Vec<double>::Constant(1, x_b);
    const auto ms = sample_manifold(sys, xb, cfg.h, cfg.so, eta_guess);
    const auto split = split_spectrum(fast_linearization(sys, xb, ms.point.eta, ms.point.d_eta),
                                      cfg.transient.hyperbolicity_floor);
    const Mat<double>& fb = unstable ? split.basis_u : split.basis_s;
    if (fb.cols() != 1) throw Error(ErrorKind::NonHyperbolic, "expected one-dimensional fast fibers");
    Vec<double> dir = tangent_basis(ms.fiber.phi, ms.point.d_eta) * fb.col(0);
    dir.normalize();
    if (dir[1] * (cfg.section - ms.point.eta[0]) < 0) dir = -dir;
    SectionStart out;
    out.base.resize(3);
    out.base << x_b, ms.point.eta;
    out.start = out.base + cfg.displacement * dir;
    return out;
}

inline SectionHit section_shot(const SlowFastSystem<double>& sys, double x_b, const Vec<double>& eta_guess,
                               bool unstable, const FhnConfig& cfg) {
    const SectionStart st = section_start(sys, x_b, eta_guess, unstable, cfg);
    SectionHit hit;
    hit.base = st.base;
    hit.start = st.start;
    // d(start)/d(x_b), including the turn of the fiber direction, whose
    // effect is amplified along the shot as much as the displacement itself.
    const double dx = cfg.start_fd_step;
    const Vec<double> w = (section_start(sys, x_b + dx, st.base.tail(2), unstable, cfg).start -
                           section_start(sys, x_b - dx, st.base.tail(2), unstable, cfg).start) /
                          (2 * dx);

    const RhsFn f = [&sys](double, const Vec<double>& z) { return sys.full_field(z); };
    const auto jac = [&sys](double, const Vec<double>& z) { return sys.full_jacobian(z); };
    const RhsFn fv = variational_rhs(f, jac, 3, 3);
    Vec<double> s0(12);
    s0.head(3) = hit.start;
    Eigen::Map<Mat<double>>(s0.data() + 3, 3, 3).setIdentity();
    const double level = cfg.section;
    const std::vector<OdeEvent> ev{{[level](double, const Vec<double>& s) { return s[1] - level; }, 0}};
    const double t_end = unstable ? cfg.match_time : -cfg.match_time;
    const auto run = integrate_adaptive(fv, 0.0, s0, t_end, cfg.ode, ev);
    if (run.event_index != 0) {
        std::ostringstream msg;
        msg << (unstable ? "forward" : "backward") << " shot from x_b = " << x_b << " misses y1 = " << level;
        throw Error(ErrorKind::SectionMiss, msg.str());
    }
    const Vec<double> zs = run.back().head(3);
    const Eigen::Map<const Mat<double>> Phi(run.back().data() + 3, 3, 3);
    // Sensitivity of the section point: Phi w corrected for the shift in the
    // crossing time.
    const Vec<double> fz = sys.full_field(zs);
    const Vec<double> dz = Phi * w;
    const Vec<double> dzs = dz - fz * (dz[1] / fz[1]);
    hit.value.resize(2);
    hit.value << zs[0], zs[2];
    hit.d_value.resize(2);
    hit.d_value << dzs[0], dzs[2];
    hit.trajectory.t = run.t;
    hit.trajectory.event_index = run.event_index;
    hit.trajectory.steps = run.steps;
    for (const auto& s : run.y) hit.trajectory.y.push_back(s.head(3));
    return hit;
}

struct Connection {
    double x_b_r = 0.0;
    double x_b_l = 0.0;
    double residual = 0.0;
    int iterations = 0;
    SectionHit right;
    SectionHit left;
    std::vector<double> t;  // gamma3, shifted to start at 0
    std::vector<Vec<double>> z;
};

using BranchGuess = std::function<Vec<double>(double x)>;

inline Connection match_connection(const SlowFastSystem<double>& sys, const BranchGuess& right_guess,
                                   const BranchGuess& left_guess, double x_b_r, double x_b_l, const FhnConfig& cfg) {
    Connection out;
    auto eval = [&](double xr, double xl) {
        out.right = section_shot(sys, xr, right_guess(xr), true, cfg);
        out.left = section_shot(sys, xl, left_guess(xl), false, cfg);
        return Vec<double>(out.right.value - out.left.value);
    };
    Vec<double> F = eval(x_b_r, x_b_l);
    double fn = F.norm();
    while (fn > cfg.match_tol) {
        if (++out.iterations > cfg.match_iter) {
            std::ostringstream msg;
            msg << "matching Newton stopped after " << cfg.match_iter << " iterations, |F| = " << fn;
            throw Error(ErrorKind::NewtonDivergence, msg.str());
        }
        Mat<double> J(2, 2);
        J << out.right.d_value, -out.left.d_value;
        const Vec<double> du = J.fullPivLu().solve(-F);
        if (!du.allFinite()) throw Error(ErrorKind::NewtonDivergence, "matching Jacobian is singular");
        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k < 20 && !accepted; ++k, lambda *= 0.5) {
            try {
                const Vec<double> Ft = eval(x_b_r + lambda * du[0], x_b_l + lambda * du[1]);
                if (Ft.norm() < fn || Ft.norm() <= cfg.match_tol) {
                    x_b_r += lambda * du[0];
                    x_b_l += lambda * du[1];
                    F = Ft;
                    fn = Ft.norm();
                    accepted = true;
                }
            } catch (const Error&) {
                // shot missed the section; shorten the step
            }
        }
        if (!accepted) {
            std::ostringstream msg;
            msg << "matching line search failed, |F| = " << fn;
            throw Error(ErrorKind::NewtonDivergence, msg.str());
        }
    }
    // eval() of the last accepted trial left the matching shots in place.
    out.right = section_shot(sys, x_b_r, right_guess(x_b_r), true, cfg);
    out.left = section_shot(sys, x_b_l, left_guess(x_b_l), false, cfg);
    out.x_b_r = x_b_r;
    out.x_b_l = x_b_l;
    out.residual = (out.right.value - out.left.value).norm();
    const double t_r = out.right.trajectory.t.back();
    const double t_l = out.left.trajectory.t.back();  // negative
    out.t = out.right.trajectory.t;
    out.z = out.right.trajectory.y;
    const auto& lt = out.left.trajectory;
    for (std::size_t k = lt.t.size() - 1; k-- > 0;) {  // skip the duplicate section point
        out.t.push_back(t_r + lt.t[k] - t_l);
        out.z.push_back(lt.y[k]);
    }
    return out;
}

/// Scans x_b^r; for each value x_b^l is fitted so that the x coordinates
/// agree on the section, and the y2 mismatch is checked for a sign change.
inline std::pair<double, double> scan_connection(const SlowFastSystem<double>& sys, const BranchGuess& right_guess,
                                                 const BranchGuess& left_guess, const FhnConfig& cfg) {
    double prev_r = 0.0, prev_l = 0.0, prev_g = 0.0;
    bool have_prev = false;
    for (int i = 0; i < cfg.scan_points; ++i) {
        const double xr = cfg.scan_lo + (cfg.scan_hi - cfg.scan_lo) * i / std::max(1, cfg.scan_points - 1);
        double xl = xr, g = 0.0;
        try {
            const SectionHit right = section_shot(sys, xr, right_guess(xr), true, cfg);
            for (int k = 0; k < 4; ++k) {
                const SectionHit left = section_shot(sys, xl, left_guess(xl), false, cfg);
                g = right.value[1] - left.value[1];
                xl += (right.value[0] - left.value[0]) / left.d_value[0];
            }
        } catch (const Error&) {
            have_prev = false;
            continue;
        }
        if (have_prev && (g < 0) != (prev_g < 0)) {
            const double s = prev_g / (prev_g - g);
            return {prev_r + s * (xr - prev_r), prev_l + s * (xl - prev_l)};
        }
        prev_r = xr;
        prev_l = xl;
        prev_g = g;
        have_prev = true;
    }
    throw Error(ErrorKind::NoBracket, "no sign change of the section mismatch in the scan range");
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

struct HomoclinicResult {
    FhnConfig config;
    WaveSpeed speed;
    Real c_star = 0;
    OdeTrajectory gamma1;
    Attachment gamma2;        // SOF projection
    Attachment gamma2_naive;  // vertical projection, for comparison
    Connection gamma3;
    BaseTrajectory<double> gamma4;
    BaseTrajectory<double> m_left;  // backward sweep along M^l from near 0
    double x_b_r = 0.0;
    double x_b_l = 0.0;
    double match_residual = 0.0;
    double projection_discrepancy = 0.0;
    double naive_discrepancy = 0.0;
    double departure_gap = 0.0;  // |gamma2(end) - gamma3(0)|
    double entrance_gap = 0.0;   // |gamma3(end) - gamma4(0)|
    double gamma4_end_distance = 0.0;
    std::vector<double> fold_x;
    std::vector<double> fold_y1;
};

inline HomoclinicResult assemble_homoclinic(const FhnConfig& cfg = {}) {
    HomoclinicResult res;
    res.config = cfg;
    const SystemBuilder builder = default_builder(cfg.params);

    // 1. wave speed and gamma1
    res.speed = find_wave_speed(builder, cfg.c_lo, cfg.c_hi, cfg.tol_c, cfg);
    res.c_star = res.speed.c_star;
    res.gamma1 = res.speed.gamma1;
    const SlowFastSystem<double> sys = system_at(cfg.params, static_cast<double>(res.c_star));

    Vec<double> y_start(2);
    y_start << -0.05, 0.0;
    for (const auto& w : models::find_folds(sys, -0.05, y_start, 2e-3, 1500)) {
        res.fold_x.push_back(w[0]);
        res.fold_y1.push_back(w[1]);
    }

    // 3. M^l by backward reduced flow from next to the equilibrium
    {
        ReducedOptions<double> opts;
        const double x_max = cfg.ml_x_max;
        opts.stop = [x_max](const Vec<double>& x) { return x[0] >= x_max; };
        res.m_left = integrate_reduced(sys, Vec<double>(Vec<double>::Constant(1, cfg.ml_start)), 50.0, cfg.dtau, cfg.h, cfg.so,
                                       Direction::Backward, opts, branch_guess(sys, cfg.ml_start, 0.0));
    }
    const auto& ml = res.m_left;
    const BranchGuess left_guess = [&ml, &sys](double x) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < ml.size(); ++k)
            if (std::abs(ml.x_values[k][0] - x) < std::abs(ml.x_values[best][0] - x)) best = k;
        return branch_guess(sys, x, ml.eta_values[best][0]);
    };
    const BranchGuess right_guess = [&sys](double x) { return branch_guess(sys, x, 1.0); };

    // 4. connection between M^r and M^l
    const auto [xr0, xl0] = scan_connection(sys, right_guess, left_guess, cfg);
    res.gamma3 = match_connection(sys, right_guess, left_guess, xr0, xl0, cfg);
    res.x_b_r = res.gamma3.x_b_r;
    res.x_b_l = res.gamma3.x_b_l;
    res.match_residual = res.gamma3.residual;

    // 2. gamma1 -> M^r -> x_b^r
    const Vec<double> p = res.gamma1.back();
    res.gamma2 = attach_to_manifold(sys, p, res.x_b_r, cfg, false);
    res.gamma2_naive = attach_to_manifold(sys, p, res.x_b_r, cfg, true);
    res.projection_discrepancy = res.gamma2.discrepancy;
    res.naive_discrepancy = res.gamma2_naive.discrepancy;

    // 5. gamma4 along M^l to the equilibrium
    {
        ReducedOptions<double> opts;
        const double stop_x = 1e-2 * cfg.gamma4_tol;
        opts.stop = [stop_x](const Vec<double>& x) { return std::abs(x[0]) <= stop_x; };
        res.gamma4 = integrate_reduced(sys, Vec<double>(Vec<double>::Constant(1, res.x_b_l)), cfg.gamma4_max_tau, cfg.dtau, cfg.h,
                                       cfg.so, Direction::Forward, opts, Vec<double>(left_guess(res.x_b_l)));
    }
    Vec<double> end4(3);
    end4 << res.gamma4.x_values.back(), res.gamma4.eta_values.back();
    res.gamma4_end_distance = end4.norm();
    if (res.gamma4_end_distance > cfg.gamma4_tol)
        throw Error(ErrorKind::NonConvergence, "gamma4 does not reach the equilibrium; increase gamma4_max_tau");

    Vec<double> z2(3);
    z2 << res.gamma2.gamma2.base.x_values.back(), res.gamma2.gamma2.base.eta_values.back();
    res.departure_gap = (z2 - res.gamma3.z.front()).norm();
    Vec<double> z4(3);
    z4 << res.gamma4.x_values.front(), res.gamma4.eta_values.front();
    res.entrance_gap = (res.gamma3.z.back() - z4).norm();
    return res;
}

}  // namespace slowfast::fhn
