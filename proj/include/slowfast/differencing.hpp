#pragma once

// Local h-grid of 3^{n_s} points around a base point and the second order
// finite difference operator built on it.
//
// Offsets are enumerated lexicographically, axis 0 most significant, each
// axis digit running over (-h, 0, +h). The center is the all-zero offset.

#include "slowfast/error.hpp"
#include "slowfast/types.hpp"

#include <algorithm>
#include <span>
#include <sstream>

namespace slowfast {

inline int ipow3(int n) {
    int p = 1;
    for (int i = 0; i < n; ++i) p *= 3;
    return p;
}

template <typename Scalar>
class LocalGrid {
public:
    LocalGrid(Vec<Scalar> center, Scalar h) : center_(std::move(center)), n_s_(static_cast<int>(center_.size())) {
        using std::max;
        // Floor against catastrophic cancellation in the difference quotients.
        const Scalar floor = Scalar(1000) * machine_epsilon<Scalar>() * (Scalar(1) + center_.norm());
        if (!(h > Scalar(0)))
            throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive");
        h_ = max(h, floor);
        count_ = ipow3(n_s_);
        strides_.assign(static_cast<std::size_t>(n_s_), 1);
        for (int axis = n_s_ - 2; axis >= 0; --axis)
            strides_[static_cast<std::size_t>(axis)] = strides_[static_cast<std::size_t>(axis) + 1] * 3;
        center_index_ = (count_ - 1) / 2;
    }

    [[nodiscard]] const Vec<Scalar>& center() const { return center_; }
    [[nodiscard]] Scalar h() const { return h_; }
    [[nodiscard]] int dimension() const { return n_s_; }
    [[nodiscard]] int size() const { return count_; }
    [[nodiscard]] int center_index() const { return center_index_; }

    /// Digit in {0,1,2} of node `index` along `axis` (1 is the center plane).
    [[nodiscard]] int digit(int index, int axis) const {
        return (index / strides_[static_cast<std::size_t>(axis)]) % 3;
    }

    [[nodiscard]] int neighbor(int index, int axis, int target_digit) const {
        return index + (target_digit - digit(index, axis)) * strides_[static_cast<std::size_t>(axis)];
    }

    [[nodiscard]] Vec<Scalar> offset(int index) const {
        Vec<Scalar> e(n_s_);
        for (int axis = 0; axis < n_s_; ++axis) e[axis] = Scalar(digit(index, axis) - 1) * h_;
        return e;
    }

    [[nodiscard]] Vec<Scalar> point(int index) const { return center_ + offset(index); }

private:
    Vec<Scalar> center_;
    int n_s_;
    Scalar h_;
    int count_ = 1;
    int center_index_ = 0;
    std::vector<int> strides_;
};

/// Central difference (f(x+h e_i) - f(x-h e_i)) / (2h) at the grid center,
/// one column per axis. `values` holds one sample per grid node; an empty
/// sample marks a missing node.
template <typename Scalar>
Mat<Scalar> central_diff(const LocalGrid<Scalar>& grid, std::span<const Vec<Scalar>> values) {
    if (static_cast<int>(values.size()) != grid.size()) {
        std::ostringstream msg;
        msg << "expected " << grid.size() << " samples, got " << values.size();
        throw Error(ErrorKind::MissingNeighbor, msg.str());
    }
    const int c = grid.center_index();
    const Eigen::Index m = values[static_cast<std::size_t>(c)].size();
    Mat<Scalar> out(m, grid.dimension());
    for (int axis = 0; axis < grid.dimension(); ++axis) {
        const auto& lo = values[static_cast<std::size_t>(grid.neighbor(c, axis, 0))];
        const auto& hi = values[static_cast<std::size_t>(grid.neighbor(c, axis, 2))];
        if (lo.size() != m || hi.size() != m || m == 0) {
            std::ostringstream msg;
            msg << "missing +-h neighbor along axis " << axis;
            throw Error(ErrorKind::MissingNeighbor, msg.str());
        }
        out.col(axis) = (hi - lo) / (Scalar(2) * grid.h());
    }
    return out;
}

/// Derivative along `axis` at node `index` of the quadratic Lagrange
/// interpolant through the three nodes on that axis line. Central at the
/// middle plane, the one-sided three point formula on the outer planes.
/// Works for any Eigen value type (vectors or matrices).
template <typename Scalar, typename Value>
Value lagrange_diff(const LocalGrid<Scalar>& grid, std::span<const Value> values, int index, int axis) {
    const auto& f0 = values[static_cast<std::size_t>(grid.neighbor(index, axis, 0))];
    const auto& f1 = values[static_cast<std::size_t>(grid.neighbor(index, axis, 1))];
    const auto& f2 = values[static_cast<std::size_t>(grid.neighbor(index, axis, 2))];
    const Scalar inv = Scalar(1) / (Scalar(2) * grid.h());
    switch (grid.digit(index, axis)) {
        case 0: return ((Scalar(-3) * f0 + Scalar(4) * f1 - f2) * inv).eval();
        case 1: return ((f2 - f0) * inv).eval();
        default: return ((f0 - Scalar(4) * f1 + Scalar(3) * f2) * inv).eval();
    }
}

/// Jacobian (m x n_s) of vector samples at node `index`.
template <typename Scalar>
Mat<Scalar> lagrange_jacobian(const LocalGrid<Scalar>& grid, std::span<const Vec<Scalar>> values, int index) {
    const Eigen::Index m = values[static_cast<std::size_t>(index)].size();
    Mat<Scalar> out(m, grid.dimension());
    for (int axis = 0; axis < grid.dimension(); ++axis)
        out.col(axis) = lagrange_diff<Scalar, Vec<Scalar>>(grid, values, index, axis);
    return out;
}

/// Grid spacing matched to the RK4 order when the critical-manifold
/// derivative is used explicitly: min{1e-2, 0.1 dtau^5 / eps^2}.
template <typename Scalar>
Scalar choose_h(Scalar dtau, Scalar epsilon) {
    using std::min;
    if (!(dtau > Scalar(0)) || !(epsilon > Scalar(0)))
        throw Error(ErrorKind::InvalidArgument, "choose_h needs dtau > 0 and epsilon > 0");
    const Scalar d2 = dtau * dtau;
    return min(Scalar(1e-2), Scalar(0.1) * d2 * d2 * dtau / (epsilon * epsilon));
}

}  // namespace slowfast
