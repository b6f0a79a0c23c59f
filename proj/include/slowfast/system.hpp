#pragma once

// Slow-fast system abstraction
//
//     x' = X_eps(x, y),   y' = Y(x, y)       (fast time t)
//
// with x in R^{n_s} slow and y in R^{n_f} fast. The slow field is stored as
// X_eps and never assumed to factor as eps * X, so systems whose variables are
// not in canonical form (e.g. the Lindemann mechanism) are covered.

#include "slowfast/error.hpp"
#include "slowfast/types.hpp"

#include <functional>
#include <random>
#include <sstream>
#include <string>

namespace slowfast {

enum class TimeConvention { Fast, Slow };

template <typename Scalar>
struct SlowFastSystem {
    using VecT = Vec<Scalar>;
    using MatT = Mat<Scalar>;
    using Field = std::function<VecT(const VecT&, const VecT&)>;
    using Jacobian = std::function<MatT(const VecT&, const VecT&)>;

    std::string name;
    int n_s = 0;
    int n_f = 0;
    Scalar epsilon = Scalar(0);
    Field X_eps;
    Field Y;
    Jacobian dX_dx;
    Jacobian dX_dy;
    Jacobian dY_dx;
    Jacobian dY_dy;
    // Optional closed-form critical manifold and its derivative.
    std::function<VecT(const VecT&)> eta0_hint;
    std::function<MatT(const VecT&)> d_eta0_hint;
    TimeConvention time_convention = TimeConvention::Fast;

    /// Full vector field U = (X_eps, Y) in fast time.
    [[nodiscard]] VecT full_field(const VecT& z) const {
        VecT out(n_s + n_f);
        const VecT x = z.head(n_s);
        const VecT y = z.tail(n_f);
        out.head(n_s) = X_eps(x, y);
        out.tail(n_f) = Y(x, y);
        return out;
    }

    [[nodiscard]] MatT full_jacobian(const VecT& z) const {
        const VecT x = z.head(n_s);
        const VecT y = z.tail(n_f);
        MatT J(n_s + n_f, n_s + n_f);
        J.topLeftCorner(n_s, n_s) = dX_dx(x, y);
        J.topRightCorner(n_s, n_f) = dX_dy(x, y);
        J.bottomLeftCorner(n_f, n_s) = dY_dx(x, y);
        J.bottomRightCorner(n_f, n_f) = dY_dy(x, y);
        return J;
    }
};

template <typename Scalar>
struct State {
    Vec<Scalar> x;
    Vec<Scalar> y;

    [[nodiscard]] Vec<Scalar> stacked() const {
        Vec<Scalar> z(x.size() + y.size());
        z << x, y;
        return z;
    }
};

struct RootOptions {
    int max_iter = 50;
};

namespace detail {

template <typename Scalar>
bool nearly_singular(const Eigen::PartialPivLU<Mat<Scalar>>& lu) {
    // Pivot ratio of the U factor; cheaper than rcond() and available for
    // every scalar type Eigen supports.
    using std::abs;
    const auto& lu_m = lu.matrixLU();
    if (lu_m.rows() == 0) return false;
    Scalar lo = abs(lu_m(0, 0));
    Scalar hi = lo;
    for (Eigen::Index i = 1; i < lu_m.rows(); ++i) {
        const Scalar d = abs(lu_m(i, i));
        if (d < lo) lo = d;
        if (d > hi) hi = d;
    }
    return !(lo > Scalar(100) * machine_epsilon<Scalar>() * hi);
}

}  // namespace detail

/// Root of Y(x, .) = 0 near `guess`: the critical manifold eta0(x).
template <typename Scalar>
Vec<Scalar> critical_manifold(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x,
                              const Vec<Scalar>& guess, Scalar tol = default_tolerance<Scalar>(),
                              RootOptions opts = {}) {
    using std::abs;
    if (sys.eta0_hint) return sys.eta0_hint(x);

    Vec<Scalar> y = guess;
    Vec<Scalar> r = sys.Y(x, y);
    Scalar rn = r.norm();
    for (int it = 0; it < opts.max_iter; ++it) {
        if (rn <= tol) return y;
        Eigen::PartialPivLU<Mat<Scalar>> lu(sys.dY_dy(x, y));
        if (detail::nearly_singular(lu)) {
            std::ostringstream msg;
            msg << "d_y Y singular at x = " << to_double(x).transpose();
            throw Error(ErrorKind::SingularJacobian, msg.str());
        }
        const Vec<Scalar> step = lu.solve(r);
        // Damped Newton: halve the step while the residual grows.
        Scalar lambda(1);
        for (int k = 0; k < 30; ++k) {
            const Vec<Scalar> trial = y - lambda * step;
            const Vec<Scalar> rt = sys.Y(x, trial);
            const Scalar rtn = rt.norm();
            if (rtn < rn || k == 29) {
                y = trial;
                r = rt;
                rn = rtn;
                break;
            }
            lambda /= Scalar(2);
        }
    }
    if (rn <= tol) return y;
    std::ostringstream msg;
    msg << "critical manifold root did not converge, |Y| = " << to_double(rn);
    throw Error(ErrorKind::NonConvergence, msg.str());
}

/// d eta0/dx = -(d_y Y)^{-1} d_x Y at a point of the critical manifold.
template <typename Scalar>
Mat<Scalar> d_eta0(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x,
                   const Vec<Scalar>& eta0_x) {
    if (sys.d_eta0_hint) return sys.d_eta0_hint(x);
    Eigen::PartialPivLU<Mat<Scalar>> lu(sys.dY_dy(x, eta0_x));
    if (detail::nearly_singular(lu)) {
        std::ostringstream msg;
        msg << "d_y Y singular at x = " << to_double(x).transpose();
        throw Error(ErrorKind::SingularJacobian, msg.str());
    }
    return -lu.solve(sys.dY_dx(x, eta0_x));
}

struct JacobianCheck {
    double max_rel_error = 0.0;  // over all blocks and probes
    std::string worst_block;
    bool ok = false;
};

/// Compares the analytic Jacobian blocks against central differences at
/// random probes in the box center +- radius.
inline JacobianCheck validate_jacobians(const SlowFastSystem<double>& sys, const Vec<double>& x_center,
                                        const Vec<double>& y_center, double radius = 0.1,
                                        int probes = 8, unsigned seed = 7, double step = 1e-6,
                                        double threshold = 1e-6) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unif(-radius, radius);
    JacobianCheck out;
    auto update = [&](const Mat<double>& analytic, const Mat<double>& fd, const char* name) {
        const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
        const double err = (analytic - fd).cwiseAbs().maxCoeff() / scale;
        if (err > out.max_rel_error) {
            out.max_rel_error = err;
            out.worst_block = name;
        }
    };
    for (int p = 0; p < probes; ++p) {
        Vec<double> x = x_center;
        Vec<double> y = y_center;
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += unif(rng);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += unif(rng);

        Mat<double> fdXx(sys.n_s, sys.n_s), fdYx(sys.n_f, sys.n_s);
        for (int j = 0; j < sys.n_s; ++j) {
            Vec<double> xp = x, xm = x;
            xp[j] += step;
            xm[j] -= step;
            fdXx.col(j) = (sys.X_eps(xp, y) - sys.X_eps(xm, y)) / (2 * step);
            fdYx.col(j) = (sys.Y(xp, y) - sys.Y(xm, y)) / (2 * step);
        }
        Mat<double> fdXy(sys.n_s, sys.n_f), fdYy(sys.n_f, sys.n_f);
        for (int j = 0; j < sys.n_f; ++j) {
            Vec<double> yp = y, ym = y;
            yp[j] += step;
            ym[j] -= step;
            fdXy.col(j) = (sys.X_eps(x, yp) - sys.X_eps(x, ym)) / (2 * step);
            fdYy.col(j) = (sys.Y(x, yp) - sys.Y(x, ym)) / (2 * step);
        }
        update(sys.dX_dx(x, y), fdXx, "dX_dx");
        update(sys.dX_dy(x, y), fdXy, "dX_dy");
        update(sys.dY_dx(x, y), fdYx, "dY_dx");
        update(sys.dY_dy(x, y), fdYy, "dY_dy");
    }
    out.ok = out.max_rel_error <= threshold;
    return out;
}

}  // namespace slowfast
