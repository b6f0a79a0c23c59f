#pragma once

// Discretized SOF iteration: the n_s x n_f matrix phi whose graph
// [phi; I_f + d_eta phi] spans the tangent spaces of the fast fibers at the
// slow manifold, plus the two fiber coordinate maps built from it.

#include "slowfast/so.hpp"

namespace slowfast {

template <typename Scalar>
struct FiberProjection {
    Vec<Scalar> x;
    Mat<Scalar> phi;            // n_s x n_f
    Mat<Scalar> d_eta;          // n_f x n_s
    Mat<Scalar> tangent_basis;  // (n_s + n_f) x n_f
    int iterations = 0;
    Scalar last_mu_norm = Scalar(0);

    /// I_f + d_eta phi
    [[nodiscard]] Mat<Scalar> correction() const {
        return Mat<Scalar>::Identity(d_eta.rows(), d_eta.rows()) + d_eta * phi;
    }
};

template <typename Scalar>
Mat<Scalar> tangent_basis(const Mat<Scalar>& phi, const Mat<Scalar>& d_eta) {
    const Eigen::Index ns = phi.rows();
    const Eigen::Index nf = phi.cols();
    Mat<Scalar> T(ns + nf, nf);
    T.topRows(ns) = phi;
    T.bottomRows(nf) = Mat<Scalar>::Identity(nf, nf) + d_eta * phi;
    return T;
}

/// phi values on every grid node (the iteration differences phi across the
/// grid just as SO does for eta) and the projection at the center.
template <typename Scalar>
struct SofGridSolution {
    std::vector<Mat<Scalar>> phi;
    FiberProjection<Scalar> center;
};

template <typename Scalar>
SofGridSolution<Scalar> sof_iterate(const SlowFastSystem<Scalar>& sys, const SoGridSolution<Scalar>& so,
                                    const SoConfig<Scalar>& cfg) {
    const LocalGrid<Scalar>& grid = so.grid;
    const int n = grid.size();
    const auto sz = static_cast<std::size_t>(n);
    const int c = grid.center_index();
    const int ns = sys.n_s;

    // phi = mu A0^{-1}  <=>  A0^T phi^T = mu^T
    Eigen::PartialPivLU<Mat<Scalar>> luT(so.A0.transpose());
    if (detail::nearly_singular(luT)) throw Error(ErrorKind::SingularA0, "A0 singular in SOF");
    auto right_solve = [&](const Mat<Scalar>& mu) -> Mat<Scalar> { return luT.solve(mu.transpose()).transpose(); };

    std::vector<Vec<Scalar>> lambda(sz);
    std::vector<Mat<Scalar>> dLambda(sz);
    std::vector<Mat<Scalar>> a(sz);
    std::vector<Mat<Scalar>> term(sz);
    std::vector<Mat<Scalar>> phi_total(sz);
    for (int g = 0; g < n; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        const Vec<Scalar> xg = grid.point(g);
        const Vec<Scalar>& eg = so.eta[gi];
        const Mat<Scalar> Xy = sys.dX_dy(xg, eg);
        lambda[gi] = sys.X_eps(xg, eg);
        dLambda[gi] = sys.dX_dx(xg, eg) + Xy * so.d_eta[gi];
        a[gi] = -so.d_eta[gi] * Xy + sys.dY_dy(xg, eg) - so.A0;
        term[gi] = right_solve(Xy);  // phi_0 = mu_0 A0^{-1}
        phi_total[gi] = term[gi];
    }

    Scalar prev = Scalar(-1);
    int stalled = 0;
    Scalar last = term[static_cast<std::size_t>(c)].norm();
    for (int sweep = 1; sweep <= cfg.max_iter; ++sweep) {
        const std::span<const Mat<Scalar>> term_span(term);
        std::vector<Mat<Scalar>> next(sz);
        for (int g = 0; g < n; ++g) {
            const auto gi = static_cast<std::size_t>(g);
            Mat<Scalar> transport = Mat<Scalar>::Zero(term[gi].rows(), term[gi].cols());
            for (int k = 0; k < ns; ++k)
                transport += lagrange_diff<Scalar, Mat<Scalar>>(grid, term_span, g, k) * lambda[gi][k];
            const Mat<Scalar> mu = -transport + dLambda[gi] * term[gi] - term[gi] * a[gi];
            next[gi] = right_solve(mu);
        }
        term = std::move(next);
        for (std::size_t g = 0; g < sz; ++g) phi_total[g] += term[g];
        last = term[static_cast<std::size_t>(c)].norm();
        if (last <= cfg.tol) {
            FiberProjection<Scalar> fp{grid.center(), phi_total[static_cast<std::size_t>(c)], so.center.d_eta,
                                       tangent_basis(phi_total[static_cast<std::size_t>(c)], so.center.d_eta),
                                       sweep, last};
            return SofGridSolution<Scalar>{std::move(phi_total), std::move(fp)};
        }
        using std::isfinite;
        if (!isfinite(last)) throw Error(ErrorKind::Stagnation, "SOF increment is not finite");
        if (prev >= Scalar(0) && last > cfg.stagnation_factor * prev) {
            if (++stalled >= 2) {
                std::ostringstream msg;
                msg << "SOF increment stalled at " << to_double(last) << " after " << sweep << " sweeps";
                throw Error(ErrorKind::Stagnation, msg.str());
            }
        } else {
            stalled = 0;
        }
        prev = last;
    }
    std::ostringstream msg;
    msg << "SOF did not reach tol " << to_double(cfg.tol) << " in " << cfg.max_iter << " sweeps, last |phi_n| = "
        << to_double(last);
    throw Error(ErrorKind::NonConvergence, msg.str());
}

/// x0 = x - phi(x) (y - eta(x)); drops an O(eps^2 |y0|^2) remainder.
template <typename Scalar>
Vec<Scalar> project_to_manifold(const FiberProjection<Scalar>& fp, const State<Scalar>& state,
                                const Vec<Scalar>& eta_at_x) {
    return state.x - fp.phi * (state.y - eta_at_x);
}

/// x = x0 + phi(x0) (I_f + d_eta(x0) phi(x0))^{-1} (y - eta(x0)).
template <typename Scalar>
Vec<Scalar> fiber_offset_map(const FiberProjection<Scalar>& fp, const Vec<Scalar>& x0, const Vec<Scalar>& y,
                             const Vec<Scalar>& eta_at_x0, const Mat<Scalar>& d_eta_at_x0) {
    const Eigen::Index nf = fp.phi.cols();
    Eigen::PartialPivLU<Mat<Scalar>> lu(Mat<Scalar>::Identity(nf, nf) + d_eta_at_x0 * fp.phi);
    if (detail::nearly_singular(lu)) throw Error(ErrorKind::SingularCorrection, "I_f + d_eta phi is singular");
    return x0 + fp.phi * lu.solve(y - eta_at_x0);
}

/// SO followed by SOF at one base point.
template <typename Scalar>
struct ManifoldSample {
    ManifoldPoint<Scalar> point;
    FiberProjection<Scalar> fiber;
};

template <typename Scalar>
ManifoldSample<Scalar> sample_manifold(const SlowFastSystem<Scalar>& sys, const Vec<Scalar>& x, Scalar h,
                                       const SoConfig<Scalar>& cfg, const Vec<Scalar>& eta_guess) {
    const auto so = so_iterate(sys, LocalGrid<Scalar>(x, h), cfg, eta_guess);
    auto sof = sof_iterate(sys, so, cfg);
    return ManifoldSample<Scalar>{so.center, std::move(sof.center)};
}

}  // namespace slowfast
