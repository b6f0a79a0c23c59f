#pragma once

// Discretized straightening-out (SO) iteration for the slow manifold y = eta(x).
//
// Starting from the critical manifold eta0 on every node of a LocalGrid, each
// sweep computes the invariance defect
//
//     rho = -D X_eps(x, eta) + Y(x, eta)
//
// with D = d eta0/dx + delta_h (eta - eta0) (split form) or D = delta_h eta
// (plain form), and updates eta <- eta - A0^{-1} rho. A0 is evaluated once at
// the grid center and its LU factorization is reused for every node and every
// sweep. The iteration stops when the defect at the center drops below tol.

#include "slowfast/differencing.hpp"
#include "slowfast/system.hpp"

#include <sstream>

namespace slowfast {

template <typename Scalar>
struct SoConfig {
    Scalar tol = default_tolerance<Scalar>();
    int max_iter = 100;
    bool use_eta0_derivative = true;
    // A sweep "stagnates" when residual_n > stagnation_factor * residual_{n-1};
    // two consecutive stagnating sweeps abort the iteration.
    Scalar stagnation_factor = Scalar(0.9);
    Scalar root_tol = default_tolerance<Scalar>();

    void validate() const {
        if (!(tol > Scalar(0))) throw Error(ErrorKind::InvalidArgument, "SoConfig.tol must be positive");
        if (!(stagnation_factor > Scalar(0)) || stagnation_factor > Scalar(1))
            throw Error(ErrorKind::InvalidArgument, "SoConfig.stagnation_factor must lie in (0,1]");
    }
};

template <typename Scalar>
struct ManifoldPoint {
    Vec<Scalar> x;
    Vec<Scalar> eta;
    Mat<Scalar> d_eta;
    Scalar residual = Scalar(0);
    int iterations = 0;
};

/// Everything the SO sweep produced on the grid; the SOF iteration reuses it.
template <typename Scalar>
struct SoGridSolution {
    LocalGrid<Scalar> grid;
    std::vector<Vec<Scalar>> eta0;
    std::vector<Mat<Scalar>> d_eta0;
    std::vector<Vec<Scalar>> eta;
    std::vector<Mat<Scalar>> d_eta;
    Mat<Scalar> A0;
    Eigen::PartialPivLU<Mat<Scalar>> A0_lu;
    ManifoldPoint<Scalar> center;
    std::vector<Scalar> residual_history;
};

/// ||-d_eta X_eps(x, eta) + Y(x, eta)|| (Euclidean).
template <typename Scalar>
Scalar so_residual(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x, const Vec<Scalar>& eta,
                   const Mat<Scalar>& d_eta) {
    return (-d_eta * sys.X_eps(x, eta) + sys.Y(x, eta)).norm();
}

template <typename Scalar>
SoGridSolution<Scalar> so_iterate(const SlowFastSystem<Scalar>& sys, const LocalGrid<Scalar>& grid,
                                  const SoConfig<Scalar>& cfg, const Vec<Scalar>& eta_guess) {
    cfg.validate();
    const int n = grid.size();
    const int c = grid.center_index();
    const auto sz = static_cast<std::size_t>(n);

    std::vector<Vec<Scalar>> eta0(sz);
    std::vector<Mat<Scalar>> d_eta0_v(sz);
    eta0[static_cast<std::size_t>(c)] = critical_manifold(sys, grid.center(), eta_guess, cfg.root_tol);
    for (int g = 0; g < n; ++g) {
        if (g == c) continue;
        eta0[static_cast<std::size_t>(g)] =
            critical_manifold(sys, grid.point(g), eta0[static_cast<std::size_t>(c)], cfg.root_tol);
    }
    const std::span<const Vec<Scalar>> eta0_span(eta0);
    if (cfg.use_eta0_derivative) {
        for (int g = 0; g < n; ++g)
            d_eta0_v[static_cast<std::size_t>(g)] = d_eta0(sys, grid.point(g), eta0[static_cast<std::size_t>(g)]);
    } else {
        for (int g = 0; g < n; ++g) d_eta0_v[static_cast<std::size_t>(g)] = lagrange_jacobian(grid, eta0_span, g);
    }

    const Vec<Scalar>& xc = grid.center();
    const Vec<Scalar>& e0c = eta0[static_cast<std::size_t>(c)];
    Mat<Scalar> A0 = -d_eta0_v[static_cast<std::size_t>(c)] * sys.dX_dy(xc, e0c) + sys.dY_dy(xc, e0c);
    Eigen::PartialPivLU<Mat<Scalar>> lu(A0);
    if (detail::nearly_singular(lu)) {
        std::ostringstream msg;
        msg << "A0 singular at x = " << to_double(xc).transpose();
        throw Error(ErrorKind::SingularA0, msg.str());
    }

    std::vector<Vec<Scalar>> eta = eta0;
    std::vector<Vec<Scalar>> dev(sz);
    std::vector<Mat<Scalar>> D(sz);
    std::vector<Vec<Scalar>> rho(sz);
    std::vector<Scalar> history;
    Scalar prev = Scalar(-1);
    int stalled = 0;

    for (int sweep = 1; sweep <= cfg.max_iter; ++sweep) {
        if (cfg.use_eta0_derivative) {
            for (std::size_t g = 0; g < sz; ++g) dev[g] = eta[g] - eta0[g];
            const std::span<const Vec<Scalar>> dev_span(dev);
            for (int g = 0; g < n; ++g)
                D[static_cast<std::size_t>(g)] = d_eta0_v[static_cast<std::size_t>(g)] + lagrange_jacobian(grid, dev_span, g);
        } else {
            const std::span<const Vec<Scalar>> eta_span(eta);
            for (int g = 0; g < n; ++g) D[static_cast<std::size_t>(g)] = lagrange_jacobian(grid, eta_span, g);
        }
        for (int g = 0; g < n; ++g) {
            const auto gi = static_cast<std::size_t>(g);
            const Vec<Scalar> xg = grid.point(g);
            rho[gi] = -D[gi] * sys.X_eps(xg, eta[gi]) + sys.Y(xg, eta[gi]);
        }
        const Scalar res = rho[static_cast<std::size_t>(c)].norm();
        history.push_back(res);
        if (res <= cfg.tol) {
            SoGridSolution<Scalar> out{grid, std::move(eta0), std::move(d_eta0_v), eta, D, A0, lu, {}, history};
            out.center = ManifoldPoint<Scalar>{xc, eta[static_cast<std::size_t>(c)], D[static_cast<std::size_t>(c)], res, sweep};
            return out;
        }
        using std::isfinite;
        if (!isfinite(res)) {
            throw Error(ErrorKind::Stagnation, "SO residual is not finite");
        }
        if (prev >= Scalar(0) && res > cfg.stagnation_factor * prev) {
            if (++stalled >= 2) {
                std::ostringstream msg;
                msg << "SO residual stalled at " << to_double(res) << " after " << sweep << " sweeps (x = "
                    << to_double(xc).transpose() << ")";
                throw Error(ErrorKind::Stagnation, msg.str());
            }
        } else {
            stalled = 0;
        }
        prev = res;
        for (std::size_t g = 0; g < sz; ++g) eta[g] -= lu.solve(rho[g]);
    }
    std::ostringstream msg;
    msg << "SO did not reach tol " << to_double(cfg.tol) << " in " << cfg.max_iter << " sweeps";
    throw Error(ErrorKind::NonConvergence, msg.str());
}

/// Convenience: build the grid and return only the center point.
template <typename Scalar>
ManifoldPoint<Scalar> so_point(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x, Scalar h,
                               const SoConfig<Scalar>& cfg, const Vec<Scalar>& eta_guess) {
    return so_iterate(sys, LocalGrid<Scalar>(x, h), cfg, eta_guess).center;
}

}  // namespace slowfast
