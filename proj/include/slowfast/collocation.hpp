#pragma once

// Hermite-Simpson collocation for two-point boundary value problems.
//
// On each interval [t_i, t_{i+1}] of length D the state is the cubic Hermite
// interpolant of (z_i, f_i) and (z_{i+1}, f_{i+1}); the ODE is enforced at
// the midpoint, where
//
//     z_m  = (z_i + z_{i+1}) / 2 + D (f_i - f_{i+1}) / 8
//     z'_m = 3 (z_{i+1} - z_i) / (2 D) - (f_i + f_{i+1}) / 4.
//
// Residual rows are scaled by D. The Jacobian is assembled analytically and
// factored with SparseLU; Newton steps are damped by backtracking.

#include "slowfast/error.hpp"
#include "slowfast/types.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <functional>
#include <sstream>

namespace slowfast {

/// Right-hand side evaluated at collocation point k: k = 2i is node i,
/// k = 2i + 1 is the midpoint of interval i. Point-indexed so callers can
/// precompute time-dependent data once.
struct CollocationProblem {
    int m = 0;
    std::vector<double> t;  // nodes, strictly monotone
    std::function<Vec<double>(int, const Vec<double>&)> f;
    std::function<Mat<double>(int, const Vec<double>&)> jac;
    // m boundary equations g(z_0, z_N) = 0 with their Jacobians.
    std::function<Vec<double>(const Vec<double>&, const Vec<double>&)> bc;
    std::function<Mat<double>(const Vec<double>&, const Vec<double>&)> bc_jac_a;
    std::function<Mat<double>(const Vec<double>&, const Vec<double>&)> bc_jac_b;
};

struct NewtonOptions {
    double tol = 1e-11;  // on the max-norm of the scaled residual
    int max_iter = 40;
};

struct HermiteMesh {
    std::vector<double> t_nodes;
    std::vector<Vec<double>> states;
    std::vector<Vec<double>> derivs;
    std::vector<double> midpoint_residuals;  // max-norm of z'_m - f_m per interval
    double bc_residual = 0.0;
    double residual = 0.0;  // final scaled max-norm residual
    int iterations = 0;
};

namespace detail {

struct CollocationEval {
    Vec<double> R;
    std::vector<Vec<double>> f_nodes;
    std::vector<Vec<double>> f_mid;
    std::vector<Vec<double>> z_mid;
};

inline CollocationEval collocation_residual(const CollocationProblem& p, const std::vector<Vec<double>>& z) {
    const int N = static_cast<int>(p.t.size()) - 1;
    const int m = p.m;
    CollocationEval e;
    e.R.resize(static_cast<Eigen::Index>(m) * (N + 1));
    e.f_nodes.resize(static_cast<std::size_t>(N + 1));
    e.f_mid.resize(static_cast<std::size_t>(N));
    e.z_mid.resize(static_cast<std::size_t>(N));
    for (int i = 0; i <= N; ++i) e.f_nodes[static_cast<std::size_t>(i)] = p.f(2 * i, z[static_cast<std::size_t>(i)]);
    e.R.head(m) = p.bc(z.front(), z.back());
    for (int i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double D = p.t[ui + 1] - p.t[ui];
        const Vec<double>& fa = e.f_nodes[ui];
        const Vec<double>& fb = e.f_nodes[ui + 1];
        e.z_mid[ui] = 0.5 * (z[ui] + z[ui + 1]) + D * (fa - fb) / 8.0;
        e.f_mid[ui] = p.f(2 * i + 1, e.z_mid[ui]);
        e.R.segment(static_cast<Eigen::Index>(m) * (i + 1), m) =
            1.5 * (z[ui + 1] - z[ui]) - D * (fa + fb) / 4.0 - D * e.f_mid[ui];
    }
    return e;
}

}  // namespace detail

inline HermiteMesh solve_collocation(const CollocationProblem& p, std::vector<Vec<double>> z,
                                     const NewtonOptions& opts = {}) {
    const int N = static_cast<int>(p.t.size()) - 1;
    const int m = p.m;
    if (N < 1 || static_cast<int>(z.size()) != N + 1)
        throw Error(ErrorKind::InvalidArgument, "collocation needs >= 2 nodes and a matching initial guess");
    const Eigen::Index dim = static_cast<Eigen::Index>(m) * (N + 1);
    const Mat<double> I = Mat<double>::Identity(m, m);

    auto eval = detail::collocation_residual(p, z);
    double rn = eval.R.lpNorm<Eigen::Infinity>();
    int it = 0;
    while (rn > opts.tol) {
        if (++it > opts.max_iter) {
            std::ostringstream msg;
            msg << "collocation Newton stopped after " << opts.max_iter << " iterations, |R| = " << rn;
            throw Error(ErrorKind::NewtonDivergence, msg.str());
        }
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(2 * m * m * (N + 1)));
        auto put = [&](Eigen::Index r0, Eigen::Index c0, const Mat<double>& B) {
            for (Eigen::Index r = 0; r < B.rows(); ++r)
                for (Eigen::Index c = 0; c < B.cols(); ++c)
                    if (B(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, B(r, c));
        };
        put(0, 0, p.bc_jac_a(z.front(), z.back()));
        put(0, static_cast<Eigen::Index>(m) * N, p.bc_jac_b(z.front(), z.back()));
        std::vector<Mat<double>> Jn(static_cast<std::size_t>(N + 1));
        for (int i = 0; i <= N; ++i) Jn[static_cast<std::size_t>(i)] = p.jac(2 * i, z[static_cast<std::size_t>(i)]);
        for (int i = 0; i < N; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const double D = p.t[ui + 1] - p.t[ui];
            const Mat<double> Jm = p.jac(2 * i + 1, eval.z_mid[ui]);
            const Mat<double> dA = -1.5 * I - D * Jn[ui] / 4.0 - D * Jm * (0.5 * I + D * Jn[ui] / 8.0);
            const Mat<double> dB = 1.5 * I - D * Jn[ui + 1] / 4.0 - D * Jm * (0.5 * I - D * Jn[ui + 1] / 8.0);
            const Eigen::Index row = static_cast<Eigen::Index>(m) * (i + 1);
            put(row, static_cast<Eigen::Index>(m) * i, dA);
            put(row, static_cast<Eigen::Index>(m) * (i + 1), dB);
        }
        Eigen::SparseMatrix<double> J(dim, dim);
        J.setFromTriplets(trip.begin(), trip.end());
        J.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw Error(ErrorKind::NewtonDivergence, "collocation Jacobian is singular: " + lu.lastErrorMessage());
        const Vec<double> dz = lu.solve(-eval.R);
        if (!dz.allFinite()) throw Error(ErrorKind::NewtonDivergence, "collocation Newton step is not finite");

        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k < 30; ++k) {
            std::vector<Vec<double>> trial = z;
            for (int i = 0; i <= N; ++i)
                trial[static_cast<std::size_t>(i)] += lambda * dz.segment(static_cast<Eigen::Index>(m) * i, m);
            try {
                auto te = detail::collocation_residual(p, trial);
                const double tn = te.R.lpNorm<Eigen::Infinity>();
                if (std::isfinite(tn) && (tn < (1.0 - 1e-4 * lambda) * rn || tn <= opts.tol)) {
                    z = std::move(trial);
                    eval = std::move(te);
                    rn = tn;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                // The trial left the domain of f; shorten the step.
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            std::ostringstream msg;
            msg << "collocation line search failed at iteration " << it << ", |R| = " << rn;
            throw Error(ErrorKind::NewtonDivergence, msg.str());
        }
    }

    HermiteMesh out;
    out.t_nodes = p.t;
    out.derivs = eval.f_nodes;
    out.iterations = it;
    out.residual = rn;
    out.bc_residual = eval.R.head(m).lpNorm<Eigen::Infinity>();
    out.midpoint_residuals.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double D = p.t[ui + 1] - p.t[ui];
        const Vec<double> zp = 1.5 * (z[ui + 1] - z[ui]) / D - (eval.f_nodes[ui] + eval.f_nodes[ui + 1]) / 4.0;
        out.midpoint_residuals[ui] = (zp - eval.f_mid[ui]).lpNorm<Eigen::Infinity>();
    }
    out.states = std::move(z);
    return out;
}

}  // namespace slowfast
