#pragma once

// Modified RK4 for the reduced flow x' = Lambda(x) = X_eps(x, eta(x)) / eps in
// slow time, with eta solved by SO at each of the four stage points.

#include "slowfast/ode.hpp"
#include "slowfast/sof.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>

namespace slowfast {

template <typename Scalar>
struct RkStage {
    Vec<Scalar> x;
    Vec<Scalar> eta;
    Vec<Scalar> lambda;
    Scalar residual = Scalar(0);
    int iterations = 0;
};

template <typename Scalar>
struct RkStepResult {
    Vec<Scalar> x_next;
    std::array<RkStage<Scalar>, 4> stages;
};

template <typename Scalar>
Vec<Scalar> reduced_field(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x, const Vec<Scalar>& eta) {
    return sys.X_eps(x, eta) / sys.epsilon;
}

/// One step of size dtau (negative for backward integration).
template <typename Scalar>
RkStepResult<Scalar> rk4_step(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x, Scalar dtau, Scalar h,
                              const SoConfig<Scalar>& cfg, const Vec<Scalar>& eta_guess) {
    RkStepResult<Scalar> out;
    Vec<Scalar> guess = eta_guess;
    std::array<Vec<Scalar>, 4> kappa;
    static constexpr std::array<double, 4> shift{0.0, 0.5, 0.5, 1.0};
    for (std::size_t s = 0; s < 4; ++s) {
        const Vec<Scalar> xs = s == 0 ? x : Vec<Scalar>(x + Scalar(shift[s]) * kappa[s - 1]);
        ManifoldPoint<Scalar> mp;
        try {
            mp = so_point(sys, xs, h, cfg, guess);
        } catch (const Error& e) {
            throw Error(e.kind(), "RK4 stage " + std::to_string(s + 1) + ": " + e.what());
        }
        guess = mp.eta;
        const Vec<Scalar> lam = reduced_field(sys, xs, mp.eta);
        kappa[s] = dtau * lam;
        out.stages[s] = RkStage<Scalar>{xs, mp.eta, lam, mp.residual, mp.iterations};
    }
    out.x_next = x + (kappa[0] + Scalar(2) * kappa[1] + Scalar(2) * kappa[2] + kappa[3]) / Scalar(6);
    return out;
}

enum class Direction { Forward, Backward };

template <typename Scalar>
struct BaseTrajectory {
    std::vector<Scalar> tau_mesh;
    std::vector<Vec<Scalar>> x_values;
    std::vector<Vec<Scalar>> eta_values;
    std::vector<Mat<Scalar>> d_eta_values;
    std::vector<Mat<Scalar>> phi_values;  // empty unless requested
    std::vector<Vec<Scalar>> lambda_values;
    std::vector<Scalar> residuals;
    std::vector<std::array<RkStage<Scalar>, 4>> steps;  // stage data of step i -> i+1
    Scalar dtau = Scalar(0);
    Scalar h_used = Scalar(0);

    [[nodiscard]] std::size_t size() const { return tau_mesh.size(); }

    /// Cubic Hermite interpolation of x0(tau) from node values and Lambda.
    [[nodiscard]] Vec<Scalar> x_at(Scalar tau) const {
        const std::size_t n = tau_mesh.size();
        if (n == 1) return x_values[0];
        const bool increasing = tau_mesh.back() > tau_mesh.front();
        std::size_t j = 0;
        // Locate the interval containing tau (clamped at the ends).
        std::size_t lo = 0, hi = n - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if ((tau_mesh[mid] <= tau) == increasing) lo = mid;
            else hi = mid;
        }
        j = lo;
        const Scalar t0 = tau_mesh[j];
        const Scalar d = tau_mesh[j + 1] - t0;
        const Scalar s = (tau - t0) / d;
        const Scalar s2 = s * s, s3 = s2 * s;
        const Scalar h00 = Scalar(2) * s3 - Scalar(3) * s2 + Scalar(1);
        const Scalar h10 = s3 - Scalar(2) * s2 + s;
        const Scalar h01 = Scalar(-2) * s3 + Scalar(3) * s2;
        const Scalar h11 = s3 - s2;
        return h00 * x_values[j] + h10 * d * lambda_values[j] + h01 * x_values[j + 1] +
               h11 * d * lambda_values[j + 1];
    }

    /// tau, x..., eta..., residual
    void write_csv(std::ostream& os) const {
        const Eigen::Index ns = x_values.front().size();
        const Eigen::Index nf = eta_values.front().size();
        os << "tau";
        for (Eigen::Index i = 0; i < ns; ++i) os << ",x" << i;
        for (Eigen::Index i = 0; i < nf; ++i) os << ",eta" << i;
        os << ",residual\n";
        os << std::scientific << std::setprecision(16);
        for (std::size_t k = 0; k < tau_mesh.size(); ++k) {
            os << to_double(tau_mesh[k]);
            for (Eigen::Index i = 0; i < ns; ++i) os << ',' << to_double(x_values[k][i]);
            for (Eigen::Index i = 0; i < nf; ++i) os << ',' << to_double(eta_values[k][i]);
            os << ',' << to_double(residuals[k]) << '\n';
        }
    }
};

template <typename Scalar>
struct ReducedOptions {
    bool with_phi = false;
    // Optional early stop, checked after every step on the new node.
    std::function<bool(const Vec<Scalar>&)> stop;
};

namespace detail {

template <typename Scalar>
void push_node(BaseTrajectory<Scalar>& traj, const SlowFastSystem<Scalar>& sys, Scalar tau, const Vec<Scalar>& x,
               const SoConfig<Scalar>& cfg, const Vec<Scalar>& guess, bool with_phi) {
    const auto so = so_iterate(sys, LocalGrid<Scalar>(x, traj.h_used), cfg, guess);
    traj.tau_mesh.push_back(tau);
    traj.x_values.push_back(x);
    traj.eta_values.push_back(so.center.eta);
    traj.d_eta_values.push_back(so.center.d_eta);
    traj.residuals.push_back(so.center.residual);
    traj.lambda_values.push_back(reduced_field(sys, x, so.center.eta));
    if (with_phi) traj.phi_values.push_back(sof_iterate(sys, so, cfg).center.phi);
}

}  // namespace detail

/// Iterated rk4_step over [0, T] with constant step dtau (the last step is
/// not shortened: T is rounded to the nearest multiple of dtau). Backward
/// integration walks tau downward from 0 to -T.
template <typename Scalar>
BaseTrajectory<Scalar> integrate_reduced(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x0, Scalar T,
                                         Scalar dtau, Scalar h, const SoConfig<Scalar>& cfg,
                                         Direction direction = Direction::Forward,
                                         const ReducedOptions<Scalar>& opts = {},
                                         const Vec<Scalar>& eta_guess = Vec<Scalar>()) {
    using std::round;
    if (!(dtau > Scalar(0))) throw Error(ErrorKind::InvalidArgument, "dtau must be positive");
    if (T < Scalar(0)) throw Error(ErrorKind::InvalidArgument, "T must be non-negative");
    const Scalar sign = direction == Direction::Forward ? Scalar(1) : Scalar(-1);
    const long steps = static_cast<long>(to_double(round(T / dtau)));

    BaseTrajectory<Scalar> traj;
    traj.dtau = dtau;
    traj.h_used = h;
    const Vec<Scalar> guess0 = eta_guess.size() == sys.n_f ? eta_guess : Vec<Scalar>(Vec<Scalar>::Zero(sys.n_f));
    detail::push_node(traj, sys, Scalar(0), x0, cfg, guess0, opts.with_phi);
    for (long k = 0; k < steps; ++k) {
        const auto step = rk4_step(sys, traj.x_values.back(), sign * dtau, h, cfg, traj.eta_values.back());
        traj.steps.push_back(step.stages);
        detail::push_node(traj, sys, sign * Scalar(k + 1) * dtau, step.x_next, cfg, step.stages[3].eta,
                          opts.with_phi);
        if (opts.stop && opts.stop(step.x_next)) break;
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Saddle validation harness: full-system integrations from points displaced
// by +-d along the unstable fiber direction diverge to opposite sides as long
// as d exceeds the manifold error.
// ---------------------------------------------------------------------------

struct SaddleProbe {
    double d = 0.0;
    int side_plus = 0;
    int side_minus = 0;
    [[nodiscard]] bool split() const { return side_plus != side_minus; }
};

struct SaddleValidation {
    std::vector<SaddleProbe> probes;
    // First exponent k (d = 10^k, scanned in the given order) whose pair
    // lands on the same side; the manifold error lies between 10^k and
    // 10^{k+1}. One below the last scanned exponent if every pair splits.
    int same_side_exponent = 0;
};

/// `direction` is a full-space vector (length n_s + n_f); `side` classifies a
/// full-space state by the sign of its deviation along `direction`. Each pair
/// is integrated for fast time t_end (negative for backward integration).
inline SaddleValidation saddle_validation(const SlowFastSystem<double>& sys, const Vec<double>& x,
                                          const Vec<double>& eta, const Vec<double>& direction, double t_end,
                                          const std::vector<int>& exponents, const OdeOptions& ode = {}) {
    Vec<double> base(sys.n_s + sys.n_f);
    base << x, eta;
    const Vec<double> dirn = direction.normalized();
    const RhsFn f = [&sys](double, const Vec<double>& z) { return sys.full_field(z); };
    SaddleValidation out;
    out.same_side_exponent = exponents.empty() ? 0 : exponents.back() - 1;
    bool found = false;
    for (int k : exponents) {
        const double d = std::pow(10.0, k);
        SaddleProbe p{d, 0, 0};
        for (int s : {1, -1}) {
            const Vec<double> z0 = base + s * d * dirn;
            // Stop once the deviation is O(1): the side is then decided.
            const std::vector<OdeEvent> ev{{[&](double, const Vec<double>& z) { return (z - base).norm() - 0.5; }, 1}};
            const auto run = integrate_adaptive(f, 0.0, z0, t_end, ode, ev);
            const double proj = (run.back() - base).dot(dirn);
            (s > 0 ? p.side_plus : p.side_minus) = proj >= 0 ? 1 : -1;
        }
        if (!p.split() && !found) {
            out.same_side_exponent = k;
            found = true;
        }
        out.probes.push_back(p);
    }
    return out;
}

}  // namespace slowfast
