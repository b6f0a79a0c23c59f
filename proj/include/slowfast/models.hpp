#pragma once

// Built-in example systems. Every builder is templated on the scalar type so
// the same model can be run in double for production work and in extended
// precision for order studies.

#include "slowfast/system.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace slowfast::models {

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key) {
    const auto it = p.find(key);
    if (it == p.end()) throw Error(ErrorKind::BadParams, "missing parameter '" + key + "'");
    return it->second;
}

/// Overlay `overrides` onto `defaults`; unknown keys are rejected.
inline Params merge_params(const Params& defaults, const Params& overrides) {
    Params out = defaults;
    for (const auto& [k, v] : overrides) {
        if (!defaults.contains(k)) throw Error(ErrorKind::BadParams, "unknown parameter '" + k + "'");
        out[k] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy saddle: dx = eps (cos x1 + y1 + y2 cos x2, -sin x2 + y2 + y1 sin x1),
//             dy = (cos x2 - y1, -sin x1 + y2).
// ---------------------------------------------------------------------------

inline Params toy_defaults() { return {{"epsilon", 1e-3}}; }

template <typename S>
SlowFastSystem<S> toy(const Params& overrides = {}) {
    const Params p = merge_params(toy_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "toy";
    sys.n_s = 2;
    sys.n_f = 2;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    sys.X_eps = [eps](const V& x, const V& y) {
        using std::cos;
        using std::sin;
        V out(2);
        out << eps * (cos(x[0]) + y[0] + y[1] * cos(x[1])), eps * (-sin(x[1]) + y[1] + y[0] * sin(x[0]));
        return out;
    };
    sys.Y = [](const V& x, const V& y) {
        using std::cos;
        using std::sin;
        V out(2);
        out << cos(x[1]) - y[0], -sin(x[0]) + y[1];
        return out;
    };
    sys.dX_dx = [eps](const V& x, const V& y) {
        using std::cos;
        using std::sin;
        M J(2, 2);
        J << -eps * sin(x[0]), -eps * y[1] * sin(x[1]), eps * y[0] * cos(x[0]), -eps * cos(x[1]);
        return J;
    };
    sys.dX_dy = [eps](const V& x, const V&) {
        using std::cos;
        using std::sin;
        M J(2, 2);
        J << eps, eps * cos(x[1]), eps * sin(x[0]), eps;
        return J;
    };
    sys.dY_dx = [](const V& x, const V&) {
        using std::cos;
        using std::sin;
        M J(2, 2);
        J << S(0), -sin(x[1]), -cos(x[0]), S(0);
        return J;
    };
    sys.dY_dy = [](const V&, const V&) {
        M J(2, 2);
        J << S(-1), S(0), S(0), S(1);
        return J;
    };
    sys.eta0_hint = [](const V& x) {
        using std::cos;
        using std::sin;
        V out(2);
        out << cos(x[1]), sin(x[0]);
        return out;
    };
    sys.d_eta0_hint = [](const V& x) {
        using std::cos;
        using std::sin;
        M J(2, 2);
        J << S(0), -sin(x[1]), cos(x[0]), S(0);
        return J;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// eps u'' + u' = 1 in first order form x = u, y = u': dx = eps y, dy = 1 - y.
// ---------------------------------------------------------------------------

inline Params linear_bvp_defaults() { return {{"epsilon", 0.1}}; }

template <typename S>
SlowFastSystem<S> linear_bvp(const Params& overrides = {}) {
    const Params p = merge_params(linear_bvp_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "linear-bvp";
    sys.n_s = 1;
    sys.n_f = 1;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    sys.X_eps = [eps](const V&, const V& y) { return V::Constant(1, eps * y[0]); };
    sys.Y = [](const V&, const V& y) { return V::Constant(1, S(1) - y[0]); };
    sys.dX_dx = [](const V&, const V&) { return M::Zero(1, 1); };
    sys.dX_dy = [eps](const V&, const V&) { return M::Constant(1, 1, eps); };
    sys.dY_dx = [](const V&, const V&) { return M::Zero(1, 1); };
    sys.dY_dy = [](const V&, const V&) { return M::Constant(1, 1, S(-1)); };
    return sys;
}

// ---------------------------------------------------------------------------
// Pair of neurons coupled by reciprocal inhibition; slow (q1, q2), fast (v1, v2).
// ---------------------------------------------------------------------------

inline Params reciprocal_inhibition_defaults() {
    return {{"epsilon", 1e-3}, {"omega", 0.03}, {"gamma", 10.0},   {"r", -4.0},         {"theta", 0.01333},
            {"a", 1.0},        {"s", 1.0},      {"sigma1", 3.0},   {"sigma2", 1.2652372051}};
}

template <typename S>
SlowFastSystem<S> reciprocal_inhibition(const Params& overrides = {}) {
    const Params p = merge_params(reciprocal_inhibition_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "reciprocal-inhibition";
    sys.n_s = 2;
    sys.n_f = 2;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    const S omega(param(p, "omega")), gamma(param(p, "gamma")), rr(param(p, "r")), theta(param(p, "theta"));
    const S a(param(p, "a")), s(param(p, "s")), sig1(param(p, "sigma1")), sig2(param(p, "sigma2"));

    // f(v) = 1 / (1 + exp(-4 gamma (v - theta)))
    auto f = [gamma, theta](const S& v) {
        using std::exp;
        return S(1) / (S(1) + exp(S(-4) * gamma * (v - theta)));
    };
    auto df = [f, gamma](const S& v) {
        const S fv = f(v);
        return S(4) * gamma * fv * (S(1) - fv);
    };
    // g(v) = v - a tanh(sigma v / a)
    auto g = [a](const S& v, const S& sig) {
        using std::tanh;
        return v - a * tanh(sig * v / a);
    };
    auto dg = [a](const S& v, const S& sig) {
        using std::tanh;
        const S t = tanh(sig * v / a);
        return S(1) - sig * (S(1) - t * t);
    };

    sys.X_eps = [eps, s](const V& x, const V& y) {
        V out(2);
        out << eps * (-x[0] + s * y[0]), eps * (-x[1] + s * y[1]);
        return out;
    };
    sys.Y = [=](const V& x, const V& y) {
        V out(2);
        out << -(g(y[0], sig1) + x[0] + omega * f(y[1]) * (y[0] - rr)),
            -(g(y[1], sig2) + x[1] + omega * f(y[0]) * (y[1] - rr));
        return out;
    };
    sys.dX_dx = [eps](const V&, const V&) { return M(-eps * M::Identity(2, 2)); };
    sys.dX_dy = [eps, s](const V&, const V&) { return M(eps * s * M::Identity(2, 2)); };
    sys.dY_dx = [](const V&, const V&) { return M(-M::Identity(2, 2)); };
    sys.dY_dy = [=](const V&, const V& y) {
        M J(2, 2);
        J << -(dg(y[0], sig1) + omega * f(y[1])), -omega * df(y[1]) * (y[0] - rr),
            -omega * df(y[0]) * (y[1] - rr), -(dg(y[1], sig2) + omega * f(y[0]));
        return J;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// FitzHugh-Nagumo travelling waves: dx = eps_c (y1 - gamma x), dy1 = y2,
// dy2 = (c y2 - f_a(y1) + x - p) / d with f_a(u) = u (u - a)(1 - u).
// eps_c = eps / c when slow_over_c = 1 (travelling-wave scaling of the slow
// equation), eps_c = eps when slow_over_c = 0.
// ---------------------------------------------------------------------------

inline Params fhn_defaults() {
    return {{"epsilon", 1e-3}, {"a", 0.1}, {"d", 5.0}, {"p", 0.0}, {"c", 1.2462875}, {"gamma", 1.0}, {"slow_over_c", 1.0}};
}

template <typename S>
S fhn_cubic(const S& u, const S& a) {
    return u * (u - a) * (S(1) - u);
}

template <typename S>
S fhn_cubic_prime(const S& u, const S& a) {
    return S(-3) * u * u + S(2) * (S(1) + a) * u - a;
}

/// Wave speed passed separately at full precision of S (the "c" entry of
/// the parameters is ignored).
template <typename S>
SlowFastSystem<S> fitzhugh_nagumo_at_speed(const Params& overrides, const S& c) {
    const Params p = merge_params(fhn_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "fitzhugh-nagumo";
    sys.n_s = 1;
    sys.n_f = 2;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    const S a(param(p, "a")), d(param(p, "d")), pp(param(p, "p")), gam(param(p, "gamma"));
    if (param(p, "slow_over_c") != 0.0 && param(p, "slow_over_c") != 1.0)
        throw Error(ErrorKind::BadParams, "slow_over_c must be 0 or 1");
    if (param(p, "slow_over_c") == 1.0 && c == S(0)) throw Error(ErrorKind::BadParams, "c must be nonzero");
    const S rate = param(p, "slow_over_c") == 1.0 ? S(eps / c) : eps;
    sys.X_eps = [eps = rate, gam](const V& x, const V& y) { return V::Constant(1, eps * (y[0] - gam * x[0])); };
    sys.Y = [a, d, pp, c](const V& x, const V& y) {
        V out(2);
        out << y[1], (c * y[1] - fhn_cubic(y[0], a) + x[0] - pp) / d;
        return out;
    };
    sys.dX_dx = [eps = rate, gam](const V&, const V&) { return M::Constant(1, 1, -eps * gam); };
    sys.dX_dy = [eps = rate](const V&, const V&) {
        M J(1, 2);
        J << eps, S(0);
        return J;
    };
    sys.dY_dx = [d](const V&, const V&) {
        M J(2, 1);
        J << S(0), S(1) / d;
        return J;
    };
    sys.dY_dy = [a, d, c](const V&, const V& y) {
        M J(2, 2);
        J << S(0), S(1), -fhn_cubic_prime(y[0], a) / d, c / d;
        return J;
    };
    return sys;
}

template <typename S>
SlowFastSystem<S> fitzhugh_nagumo(const Params& overrides = {}) {
    return fitzhugh_nagumo_at_speed<S>(overrides, S(param(merge_params(fhn_defaults(), overrides), "c")));
}

// ---------------------------------------------------------------------------
// Lindemann mechanism, dx = -x (x - y), dy = x (x - y) - eps y. Not in
// canonical form: X_eps is O(1) away from the critical manifold y = x.
// ---------------------------------------------------------------------------

inline Params lindemann_defaults() { return {{"epsilon", 0.1}}; }

template <typename S>
SlowFastSystem<S> lindemann(const Params& overrides = {}) {
    const Params p = merge_params(lindemann_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "lindemann";
    sys.n_s = 1;
    sys.n_f = 1;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    sys.X_eps = [](const V& x, const V& y) { return V::Constant(1, -x[0] * (x[0] - y[0])); };
    sys.Y = [eps](const V& x, const V& y) { return V::Constant(1, x[0] * (x[0] - y[0]) - eps * y[0]); };
    sys.dX_dx = [](const V& x, const V& y) { return M::Constant(1, 1, -(S(2) * x[0] - y[0])); };
    sys.dX_dy = [](const V& x, const V&) { return M::Constant(1, 1, x[0]); };
    sys.dY_dx = [](const V& x, const V& y) { return M::Constant(1, 1, S(2) * x[0] - y[0]); };
    sys.dY_dy = [eps](const V& x, const V&) { return M::Constant(1, 1, -x[0] - eps); };
    return sys;
}

/// Same mechanism in canonical coordinates (w, z) = (x + y, 2y):
/// dw = -eps z / 2, dz = 2 w^2 - (3 w + eps) z + z^2.
template <typename S>
SlowFastSystem<S> lindemann_wz(const Params& overrides = {}) {
    const Params p = merge_params(lindemann_defaults(), overrides);
    using V = Vec<S>;
    using M = Mat<S>;
    SlowFastSystem<S> sys;
    sys.name = "lindemann-wz";
    sys.n_s = 1;
    sys.n_f = 1;
    sys.epsilon = S(param(p, "epsilon"));
    const S eps = sys.epsilon;
    sys.X_eps = [eps](const V&, const V& z) { return V::Constant(1, -eps * z[0] / S(2)); };
    sys.Y = [eps](const V& w, const V& z) {
        return V::Constant(1, S(2) * w[0] * w[0] - (S(3) * w[0] + eps) * z[0] + z[0] * z[0]);
    };
    sys.dX_dx = [](const V&, const V&) { return M::Zero(1, 1); };
    sys.dX_dy = [eps](const V&, const V&) { return M::Constant(1, 1, -eps / S(2)); };
    sys.dY_dx = [](const V& w, const V& z) { return M::Constant(1, 1, S(4) * w[0] - S(3) * z[0]); };
    sys.dY_dy = [eps](const V& w, const V& z) { return M::Constant(1, 1, -(S(3) * w[0] + eps) + S(2) * z[0]); };
    return sys;
}

// ---------------------------------------------------------------------------
// Folds of a one-dimensional critical manifold
// ---------------------------------------------------------------------------

/// Pseudo-arclength continuation of Y(x, y) = 0 (n_s = 1) from (x, y) and
/// bisection on sign changes of det(d_y Y): points where d eta0 / dx blows up.
inline std::vector<Vec<double>> find_folds(const SlowFastSystem<double>& sys, double x_start,
                                           const Vec<double>& y_start, double ds = 1e-3, int steps = 4000) {
    if (sys.n_s != 1) throw Error(ErrorKind::InvalidArgument, "fold search needs one slow variable");
    const int nf = sys.n_f;
    const int n = nf + 1;
    auto G = [&](const Vec<double>& w) { return sys.Y(w.head(1), w.tail(nf)); };
    auto DG = [&](const Vec<double>& w) {
        Mat<double> J(nf, n);
        J << sys.dY_dx(w.head(1), w.tail(nf)), sys.dY_dy(w.head(1), w.tail(nf));
        return J;
    };
    auto det_fast = [&](const Vec<double>& w) { return sys.dY_dy(w.head(1), w.tail(nf)).determinant(); };
    auto tangent = [&](const Vec<double>& w, const Vec<double>& prev) {
        Eigen::FullPivLU<Mat<double>> lu(DG(w));
        Vec<double> t = lu.kernel().col(0).normalized();
        if (prev.size() == n && t.dot(prev) < 0) t = -t;
        return t;
    };
    // Newton corrector on G = 0 plus the arclength constraint t.(w - w_pred) = 0.
    auto correct = [&](Vec<double> w, const Vec<double>& t) {
        const Vec<double> w_pred = w;
        for (int it = 0; it < 30; ++it) {
            Vec<double> F(n);
            F << G(w), t.dot(w - w_pred);
            if (F.norm() < 1e-13) break;
            Mat<double> J(n, n);
            J << DG(w), t.transpose();
            w -= J.fullPivLu().solve(F);
        }
        return w;
    };

    Vec<double> w(n);
    w << x_start, critical_manifold(sys, Vec<double>(Vec<double>::Constant(1, x_start)), y_start, 1e-13);
    Vec<double> t = tangent(w, Vec<double>());
    std::vector<Vec<double>> folds;
    double d_prev = det_fast(w);
    for (int k = 0; k < steps; ++k) {
        Vec<double> w_next = correct(w + ds * t, t);
        const double d_next = det_fast(w_next);
        if ((d_prev < 0) != (d_next < 0)) {
            Vec<double> a = w, b = w_next;
            for (int it = 0; it < 60; ++it) {
                Vec<double> mid = 0.5 * (a + b);
                const Vec<double> tm = tangent(mid, t);
                mid = correct(mid, tm);
                if ((det_fast(mid) < 0) == (d_prev < 0)) a = mid;
                else b = mid;
            }
            folds.push_back(0.5 * (a + b));
        }
        t = tangent(w_next, t);
        w = w_next;
        d_prev = d_next;
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

struct KnownValue {
    std::string quantity;
    double value;
    std::string source;
};

struct ModelCatalogEntry {
    std::string name;
    std::function<SlowFastSystem<double>(const Params&)> builder;
    Params default_params;
    std::vector<KnownValue> known_values;
    // Representative state for Jacobian validation probes.
    std::vector<double> probe_x;
    std::vector<double> probe_y;
};

inline const std::vector<ModelCatalogEntry>& catalog() {
    static const std::vector<ModelCatalogEntry> entries = {
        {"toy", toy<double>, toy_defaults(),
         {{"eta-order slope (split variant)", 4.0, "published"}, {"phi-order slope", 4.0, "published"},
          {"RK4 max deviation, dtau=0.5", 3e-3, "published"}},
         {-0.5, -0.7},
         {0.76, -0.48}},
        {"linear-bvp", linear_bvp<double>, linear_bvp_defaults(),
         {{"eta", 1.0, "published"}, {"phi/eps", -1.0, "published"}},
         {0.5},
         {1.0}},
        {"reciprocal-inhibition", reciprocal_inhibition<double>, reciprocal_inhibition_defaults(),
         {{"q1(0)", -0.51723351869, "published"},
          {"q2(0)", -0.73434299772, "published"},
          {"v1(0)", -0.27894449516, "published"},
          {"v2(0)", 1.71095643157, "published"},
          {"q1(T)", -0.39340933174, "published"},
          {"q2(T)", 0.00310289762, "published"},
          {"v1(T)", -0.15410414452, "published"},
          {"v2(T)", 0.72034762953, "published"},
          {"v1(T) exit pin", -0.025410414452, "published"},
          {"max transient error, eps=1e-3, r=0.1", 7.5e-6, "published"}},
         {-0.5, -0.7},
         {-0.3, 1.6}},
        {"fitzhugh-nagumo", fitzhugh_nagumo<double>, fhn_defaults(),
         {{"c_star (p=0, eps=1e-3)", 1.2462875, "published"},
          {"SOF stitch discrepancy", 5e-9, "published"},
          {"naive stitch discrepancy", 2e-6, "published"}},
         {0.05},
         {0.8, 0.01}},
        {"lindemann", lindemann<double>, lindemann_defaults(),
         {{"eta-order slope", 5.0, "published"}, {"phi-order slope", 4.0, "published"}},
         {1.0},
         {0.95}},
        {"lindemann-wz", lindemann_wz<double>, lindemann_defaults(), {}, {1.5}, {1.0}},
    };
    return entries;
}

inline const ModelCatalogEntry& find_model(const std::string& name) {
    for (const auto& e : catalog())
        if (e.name == name) return e;
    throw Error(ErrorKind::UnknownModel, "no model named '" + name + "'");
}

inline SlowFastSystem<double> build(const std::string& name, const Params& overrides = {}) {
    return find_model(name).builder(overrides);
}

}  // namespace slowfast::models
