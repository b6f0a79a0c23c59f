#pragma once

// Common vector/matrix aliases and precision-aware defaults.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace slowfast {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Tolerance that corresponds to 1e-12 in double and scales with the unit
/// roundoff of wider types (long double, float128).
template <typename Scalar>
Scalar default_tolerance() {
    const Scalar ratio = std::numeric_limits<Scalar>::epsilon() /
                         Scalar(std::numeric_limits<double>::epsilon());
    return Scalar(1e-12) * ratio;
}

template <typename Scalar>
Scalar machine_epsilon() {
    return std::numeric_limits<Scalar>::epsilon();
}

template <typename Scalar>
double to_double(const Scalar& v) {
    return static_cast<double>(v);
}

template <typename Scalar>
Vec<double> to_double(const Vec<Scalar>& v) {
    Vec<double> out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
    return out;
}

template <typename Scalar>
Mat<double> to_double(const Mat<Scalar>& m) {
    Mat<double> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = static_cast<double>(m(i, j));
    return out;
}

template <typename To, typename From>
Vec<To> cast_vec(const Vec<From>& v) {
    Vec<To> out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = To(v[i]);
    return out;
}

template <typename To, typename From>
Mat<To> cast_mat(const Mat<From>& m) {
    Mat<To> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = To(m(i, j));
    return out;
}

}  // namespace slowfast
