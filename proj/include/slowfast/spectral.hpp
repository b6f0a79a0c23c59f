#pragma once

// Stable/unstable splitting of the fast linearization A, oblique spectral
// projections and boundary-layer times.

#include "slowfast/error.hpp"
#include "slowfast/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace slowfast {

struct SpectralSplit {
    Mat<double> A;
    Mat<double> basis_s;  // n_f x n_f^s
    Mat<double> basis_u;  // n_f x n_f^u
    Mat<double> coord_s;  // n_f^s x n_f, with pi_s = basis_s * coord_s
    Mat<double> coord_u;  // n_f^u x n_f
    Mat<double> pi_s;
    Mat<double> pi_u;
    double lambda_s = 0.0;  // min |Re| over the stable eigenvalues (0 if none)
    double lambda_u = 0.0;  // min Re over the unstable eigenvalues (0 if none)

    [[nodiscard]] int n_stable() const { return static_cast<int>(basis_s.cols()); }
    [[nodiscard]] int n_unstable() const { return static_cast<int>(basis_u.cols()); }
};

namespace detail {

/// Matrix sign function by the scaled Newton iteration Z <- (c Z + (c Z)^{-1}) / 2.
inline Mat<double> matrix_sign(const Mat<double>& A) {
    const Eigen::Index n = A.rows();
    Mat<double> Z = A;
    for (int it = 0; it < 100; ++it) {
        Eigen::PartialPivLU<Mat<double>> lu(Z);
        const Mat<double> Zi = lu.inverse();
        // Determinant scaling speeds up the early iterations.
        double c = 1.0;
        if (it < 10) {
            const double det = std::abs(lu.determinant());
            if (det > 0.0 && std::isfinite(det)) c = std::pow(det, -1.0 / static_cast<double>(n));
        }
        const Mat<double> next = 0.5 * (c * Z + Zi / c);
        const double change = (next - Z).norm();
        Z = next;
        if (change <= 1e-14 * std::max(1.0, Z.norm())) break;
    }
    return Z;
}

}  // namespace detail

/// Splits R^{n_f} into the invariant subspaces of A for Re < 0 and Re > 0.
/// The projections come from the matrix sign function S: pi_s = (I - S)/2,
/// which spans exactly the stable invariant subspace regardless of the
/// ordering of eigenvalues or Schur blocks.
inline SpectralSplit split_spectrum(const Mat<double>& A, double floor = 1e-6) {
    const Eigen::Index n = A.rows();
    Eigen::EigenSolver<Mat<double>> es(A, false);
    const auto ev = es.eigenvalues();
    SpectralSplit out;
    out.A = A;
    double ls = std::numeric_limits<double>::infinity();
    double lu = std::numeric_limits<double>::infinity();
    int ns = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double re = ev[i].real();
        if (std::abs(re) < floor) {
            std::ostringstream msg;
            msg << "eigenvalue " << ev[i] << " within " << floor << " of the imaginary axis";
            throw Error(ErrorKind::NonHyperbolic, msg.str());
        }
        if (re < 0) {
            ++ns;
            ls = std::min(ls, -re);
        } else {
            lu = std::min(lu, re);
        }
    }
    out.lambda_s = ns > 0 ? ls : 0.0;
    out.lambda_u = ns < n ? lu : 0.0;

    const Mat<double> I = Mat<double>::Identity(n, n);
    if (ns == n) {
        out.pi_s = I;
        out.pi_u = Mat<double>::Zero(n, n);
    } else if (ns == 0) {
        out.pi_s = Mat<double>::Zero(n, n);
        out.pi_u = I;
    } else {
        const Mat<double> S = detail::matrix_sign(A);
        out.pi_s = 0.5 * (I - S);
        out.pi_u = 0.5 * (I + S);
    }

    auto range_basis = [](const Mat<double>& P, Eigen::Index k) -> Mat<double> {
        if (k == 0) return Mat<double>(P.rows(), 0);
        Eigen::ColPivHouseholderQR<Mat<double>> qr(P);
        return Mat<double>(qr.householderQ()).leftCols(k);
    };
    out.basis_s = range_basis(out.pi_s, ns);
    out.basis_u = range_basis(out.pi_u, n - ns);
    Mat<double> B(n, n);
    B << out.basis_s, out.basis_u;
    const Mat<double> L = B.inverse();
    out.coord_s = L.topRows(ns);
    out.coord_u = L.bottomRows(n - ns);
    // Rebuild the projectors from the bases so that the identities hold to
    // rounding even if the sign iteration stopped slightly early.
    out.pi_s = out.basis_s * out.coord_s;
    out.pi_u = out.basis_u * out.coord_u;
    return out;
}

/// rate^{-1} log(r / tol): fast time for a deviation of size r to decay to tol.
inline double boundary_layer_time(double rate, double r, double tol) {
    if (!(rate > 0.0) || !(r > 0.0) || !(tol > 0.0))
        throw Error(ErrorKind::InvalidArgument, "boundary_layer_time needs positive rate, r and tol");
    if (tol > r) {
        std::ostringstream msg;
        msg << "tol " << tol << " exceeds deviation " << r;
        throw Error(ErrorKind::InvalidTolerance, msg.str());
    }
    return std::log(r / tol) / rate;
}

}  // namespace slowfast
