#pragma once

// Adaptive integration of full (unreduced) systems with terminal events.
// Thin layer over Boost.Odeint's dense-output Dormand-Prince 5(4) pair; events
// are located by bisection on the continuous extension.

#include "slowfast/error.hpp"
#include "slowfast/types.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace slowfast {

template <typename S>
using BasicRhsFn = std::function<Vec<S>(S, const Vec<S>&)>;
using RhsFn = BasicRhsFn<double>;

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double dt0 = 1e-3;
    long max_steps = 2'000'000;
    bool store = true;  // keep every accepted step
};

/// Terminal event g(t, y) = 0. direction: +1 rising only, -1 falling only, 0 both.
template <typename S>
struct BasicOdeEvent {
    std::function<S(S, const Vec<S>&)> g;
    int direction = 0;
};
using OdeEvent = BasicOdeEvent<double>;

template <typename S>
struct BasicOdeTrajectory {
    std::vector<S> t;
    std::vector<Vec<S>> y;
    int event_index = -1;  // which event terminated the run, -1 if none
    long steps = 0;

    [[nodiscard]] const Vec<S>& back() const { return y.back(); }
};
using OdeTrajectory = BasicOdeTrajectory<double>;

namespace detail {

template <typename S>
std::vector<S> to_state(const Vec<S>& v) {
    return {v.data(), v.data() + v.size()};
}

template <typename S>
Vec<S> from_state(const std::vector<S>& s) {
    return Eigen::Map<const Vec<S>>(s.data(), static_cast<Eigen::Index>(s.size()));
}

template <typename S>
bool crossed(S g0, S g1, int direction) {
    if (direction >= 0 && g0 < S(0) && g1 >= S(0)) return true;
    if (direction <= 0 && g0 > S(0) && g1 <= S(0)) return true;
    return false;
}

}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t1 (t1 < t0 integrates backward) and
/// stops at the first event crossing, whose location is appended as the last
/// sample. S is double or long double.
template <typename S>
BasicOdeTrajectory<S> integrate_adaptive(const BasicRhsFn<S>& f, S t0, const Vec<S>& y0, S t1,
                                         const OdeOptions& opts = {},
                                         const std::vector<BasicOdeEvent<S>>& events = {}) {
    namespace odeint = boost::numeric::odeint;
    using OdeState = std::vector<S>;
    using std::abs;
    const S dir = t1 >= t0 ? S(1) : S(-1);
    auto stepper = odeint::make_dense_output(S(opts.atol), S(opts.rtol),
                                             odeint::runge_kutta_dopri5<OdeState, S, OdeState, S>());
    auto sys = [&f](const OdeState& s, OdeState& ds, S t) { ds = detail::to_state<S>(f(t, detail::from_state<S>(s))); };

    BasicOdeTrajectory<S> out;
    out.t.push_back(t0);
    out.y.push_back(y0);
    if (t0 == t1) return out;

    stepper.initialize(detail::to_state<S>(y0), t0, dir * std::min(S(opts.dt0), S(abs(t1 - t0))));
    std::vector<S> g_prev(events.size());
    for (std::size_t k = 0; k < events.size(); ++k) g_prev[k] = events[k].g(t0, y0);

    OdeState tmp(static_cast<std::size_t>(y0.size()));
    while (true) {
        if (++out.steps > opts.max_steps) throw Error(ErrorKind::NonConvergence, "adaptive integrator exceeded max_steps");
        // Keep the last step from overshooting t1.
        if (dir * (stepper.current_time() + stepper.current_time_step() - t1) > S(0))
            stepper.initialize(stepper.current_state(), stepper.current_time(), t1 - stepper.current_time());
        const auto [ta, tb] = stepper.do_step(sys);
        const Vec<S> yb = detail::from_state<S>(stepper.current_state());
        if (!yb.allFinite()) throw Error(ErrorKind::NonConvergence, "adaptive integrator produced non-finite state");

        // Earliest event crossing inside (ta, tb].
        int hit = -1;
        S t_hit = tb;
        for (std::size_t k = 0; k < events.size(); ++k) {
            const S gb = events[k].g(tb, yb);
            if (!detail::crossed(g_prev[k], gb, events[k].direction)) {
                g_prev[k] = gb;
                continue;
            }
            S lo = ta, hi = tb, glo = g_prev[k];
            for (int it = 0; it < 200 && abs(hi - lo) > 4 * std::numeric_limits<S>::epsilon() * abs(hi); ++it) {
                const S mid = (lo + hi) / 2;
                stepper.calc_state(mid, tmp);
                const S gm = events[k].g(mid, detail::from_state<S>(tmp));
                if (detail::crossed(glo, gm, events[k].direction)) {
                    hi = mid;
                } else {
                    lo = mid;
                    glo = gm;
                }
            }
            if (dir * (hi - t_hit) < S(0) || hit < 0) {
                hit = static_cast<int>(k);
                t_hit = hi;
            }
            g_prev[k] = gb;
        }
        if (hit >= 0) {
            stepper.calc_state(t_hit, tmp);
            out.t.push_back(t_hit);
            out.y.push_back(detail::from_state<S>(tmp));
            out.event_index = hit;
            return out;
        }
        if (opts.store || dir * (tb - t1) >= S(0)) {
            out.t.push_back(tb);
            out.y.push_back(yb);
        }
        if (dir * (tb - t1) >= S(0)) return out;
    }
}

/// y' = f together with the variational equation Phi' = J(t, y) Phi, packed
/// as [y; vec(Phi)] (column major).
inline RhsFn variational_rhs(const RhsFn& f, const std::function<Mat<double>(double, const Vec<double>&)>& jac,
                             Eigen::Index n, Eigen::Index cols) {
    return [f, jac, n, cols](double t, const Vec<double>& s) {
        const Vec<double> y = s.head(n);
        const Eigen::Map<const Mat<double>> Phi(s.data() + n, n, cols);
        Vec<double> out(s.size());
        out.head(n) = f(t, y);
        Eigen::Map<Mat<double>>(out.data() + n, n, cols) = jac(t, y) * Phi;
        return out;
    };
}

}  // namespace slowfast
