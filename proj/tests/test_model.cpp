#include "slowfast/differencing.hpp"
#include "slowfast/models.hpp"
#include "slowfast/ode.hpp"
#include "slowfast/system.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace slowfast;

namespace {

Vec<double> vec(std::initializer_list<double> v) {
    Vec<double> out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

// --- critical manifold ------------------------------------------------------

TEST(CriticalManifold, LinearBvpRootIsOne) {
    const auto sys = models::linear_bvp<double>();
    for (double x : {-3.0, 0.0, 0.7}) {
        const auto eta0 = critical_manifold(sys, vec({x}), vec({0.0}), 1e-12);
        EXPECT_NEAR(eta0[0], 1.0, 1e-14);
    }
}

TEST(CriticalManifold, ToyAtOrigin) {
    const auto sys = models::toy<double>();
    const auto eta0 = critical_manifold(sys, vec({0.0, 0.0}), vec({0.0, 0.0}), 1e-12);
    EXPECT_NEAR(eta0[0], 1.0, 1e-15);
    EXPECT_NEAR(eta0[1], 0.0, 1e-15);
}

TEST(CriticalManifold, ToyNewtonMatchesHint) {
    auto sys = models::toy<double>();
    const Vec<double> x = vec({-0.5, -0.7});
    const Vec<double> with_hint = critical_manifold(sys, x, vec({0.0, 0.0}), 1e-12);
    sys.eta0_hint = nullptr;
    const Vec<double> newton = critical_manifold(sys, x, vec({0.0, 0.0}), 1e-12);
    EXPECT_LT((with_hint - newton).norm(), 1e-12);
    EXPECT_LE(sys.Y(x, newton).norm(), 1e-12);
}

TEST(CriticalManifold, ReciprocalInhibitionFromGridScan) {
    const auto sys = models::reciprocal_inhibition<double>();
    const Vec<double> q = vec({-0.51723351869, -0.73434299772});
    // Newton from every node of a coarse scan; keep the distinct roots.
    std::vector<Vec<double>> roots;
    for (double v1 = -2.0; v1 <= 2.0; v1 += 0.25) {
        for (double v2 = -2.0; v2 <= 2.0; v2 += 0.25) {
            try {
                const Vec<double> r = critical_manifold(sys, q, vec({v1, v2}), 1e-12);
                EXPECT_LE(sys.Y(q, r).norm(), 1e-12);
                bool seen = false;
                for (const auto& s : roots) seen = seen || (s - r).norm() < 1e-8;
                if (!seen) roots.push_back(r);
            } catch (const Error&) {
            }
        }
    }
    ASSERT_GE(roots.size(), 2u);
    double best = 1e9;
    for (const auto& r : roots) best = std::min(best, (r - vec({-0.2789, 1.7109})).norm());
    // The published on-manifold point differs from the eps = 0 root by O(eps).
    EXPECT_LT(best, 1e-2);
}

TEST(CriticalManifold, ResidualBelowTolerance) {
    auto sys = models::fitzhugh_nagumo<double>();
    for (double x : {-0.02, 0.05, 0.2}) {
        const auto y = critical_manifold(sys, vec({x}), vec({x, 0.0}), 1e-12);
        EXPECT_LE(sys.Y(vec({x}), y).norm(), 1e-12);
    }
}

TEST(CriticalManifold, NonConvergenceReported) {
    const auto sys = models::fitzhugh_nagumo<double>();
    RootOptions opts;
    opts.max_iter = 1;
    EXPECT_THROW(critical_manifold(sys, vec({0.05}), vec({3.0, 0.0}), 1e-14, opts), Error);
}

TEST(DEta0, ToyClosedForm) {
    auto sys = models::toy<double>();
    sys.d_eta0_hint = nullptr;
    const Vec<double> x = vec({0.3, -1.1});
    const Mat<double> d = d_eta0(sys, x, critical_manifold(sys, x, vec({0.0, 0.0}), 1e-12));
    Mat<double> expect(2, 2);
    expect << 0.0, -std::sin(x[1]), std::cos(x[0]), 0.0;
    EXPECT_LT((d - expect).norm(), 1e-14);
}

TEST(DEta0, LinearBvpIsZero) {
    const auto sys = models::linear_bvp<double>();
    EXPECT_EQ(d_eta0(sys, vec({0.4}), vec({1.0})).norm(), 0.0);
}

TEST(DEta0, LindemannCanonicalFormSlopeOne) {
    const auto sys = models::lindemann_wz<double>({{"epsilon", 1e-12}});
    const Vec<double> eta0 = critical_manifold(sys, vec({1.0}), vec({0.9}), 1e-13);
    EXPECT_NEAR(eta0[0], 1.0, 1e-10);
    EXPECT_NEAR(d_eta0(sys, vec({1.0}), eta0)(0, 0), 1.0, 1e-10);
}

TEST(DEta0, AgreesWithDifferencesOfRoot) {
    const auto sys = models::reciprocal_inhibition<double>();
    const Vec<double> q = vec({-0.51723351869, -0.73434299772});
    const Vec<double> g = vec({-0.2789, 1.7109});
    const Vec<double> e = critical_manifold(sys, q, g, 1e-13);
    const Mat<double> d = d_eta0(sys, q, e);
    double prev = 0.0;
    for (double step : {1e-2, 5e-3}) {
        Mat<double> fd(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vec<double> qp = q, qm = q;
            qp[j] += step;
            qm[j] -= step;
            fd.col(j) = (critical_manifold(sys, qp, e, 1e-14) - critical_manifold(sys, qm, e, 1e-14)) / (2 * step);
        }
        const double err = (fd - d).norm();
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 1.0);  // O(step^2)
        prev = err;
    }
}

TEST(DEta0, SingularAtFold) {
    const auto sys = models::fitzhugh_nagumo<double>();
    // f_a'(u) = 0 at the upper fold of the cubic.
    const double a = 0.1;
    const double u = ((1 + a) + std::sqrt((1 + a) * (1 + a) - 3 * a)) / 3;
    const double x = models::fhn_cubic(u, a);
    EXPECT_THROW(
        {
            try {
                d_eta0(sys, vec({x}), vec({u, 0.0}));
            } catch (const Error& e) {
                EXPECT_EQ(e.kind(), ErrorKind::SingularJacobian);
                throw;
            }
        },
        Error);
}

// --- Jacobian validation and the catalog -------------------------------------

TEST(Catalog, EveryModelPassesJacobianValidation) {
    for (const auto& entry : models::catalog()) {
        const auto sys = entry.builder({});
        const auto check = validate_jacobians(sys, Eigen::Map<const Vec<double>>(entry.probe_x.data(), sys.n_s),
                                              Eigen::Map<const Vec<double>>(entry.probe_y.data(), sys.n_f));
        EXPECT_TRUE(check.ok) << entry.name << " worst " << check.worst_block << " " << check.max_rel_error;
    }
}

TEST(Catalog, ValidationCatchesWrongJacobian) {
    auto sys = models::toy<double>();
    sys.dY_dy = [](const Vec<double>&, const Vec<double>&) { return Mat<double>(Mat<double>::Identity(2, 2)); };
    const auto check = validate_jacobians(sys, vec({-0.5, -0.7}), vec({0.7, -0.5}));
    EXPECT_FALSE(check.ok);
    EXPECT_EQ(check.worst_block, "dY_dy");
}

TEST(Catalog, ToyHintSolvesCriticalManifold) {
    const auto sys = models::toy<double>();
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 20; ++k) {
        const Vec<double> x = vec({u(rng), u(rng)});
        EXPECT_LE(sys.Y(x, sys.eta0_hint(x)).norm(), 1e-15);
    }
}

TEST(Catalog, UnknownModelAndBadParams) {
    EXPECT_THROW(models::build("van-der-pol"), Error);
    try {
        models::build("toy", {{"omega", 1.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BadParams);
    }
    EXPECT_THROW(models::fitzhugh_nagumo<double>({{"slow_over_c", 0.5}}), Error);
}

TEST(Catalog, ReciprocalInhibitionDefaults) {
    const auto p = models::reciprocal_inhibition_defaults();
    EXPECT_EQ(p.at("omega"), 0.03);
    EXPECT_EQ(p.at("gamma"), 10.0);
    EXPECT_EQ(p.at("r"), -4.0);
    EXPECT_EQ(p.at("theta"), 0.01333);
    EXPECT_EQ(p.at("a"), 1.0);
    EXPECT_EQ(p.at("s"), 1.0);
    EXPECT_EQ(p.at("sigma1"), 3.0);
    EXPECT_EQ(p.at("sigma2"), 1.2652372051);
}

TEST(Catalog, FitzHughNagumoDefaults) {
    const auto p = models::fhn_defaults();
    EXPECT_EQ(p.at("a"), 0.1);
    EXPECT_EQ(p.at("d"), 5.0);
    EXPECT_EQ(p.at("p"), 0.0);
}

TEST(Catalog, KnownValuesCarrySources) {
    const auto& ri = models::find_model("reciprocal-inhibition");
    int found = 0;
    for (const auto& kv : ri.known_values) {
        EXPECT_FALSE(kv.source.empty());
        if (kv.quantity == "v1(0)") {
            EXPECT_EQ(kv.value, -0.27894449516);
            ++found;
        }
        if (kv.quantity == "v1(T) exit pin") {
            EXPECT_EQ(kv.value, -0.025410414452);
            ++found;
        }
    }
    EXPECT_EQ(found, 2);
}

TEST(Models, FitzHughNagumoFolds) {
    const auto sys = models::fitzhugh_nagumo<double>();
    const auto folds = models::find_folds(sys, -0.05, vec({-0.05, 0.0}), 2e-3, 1500);
    ASSERT_EQ(folds.size(), 2u);
    const Vec<double> lm = folds[0][0] < folds[1][0] ? folds[0] : folds[1];
    const Vec<double> mr = folds[0][0] < folds[1][0] ? folds[1] : folds[0];
    EXPECT_NEAR(lm[0], -0.0024, 0.005);
    EXPECT_NEAR(lm[1], 0.049, 0.005);
    EXPECT_NEAR(lm[2], 0.0, 1e-12);
    EXPECT_NEAR(mr[0], 0.13, 0.005);
    EXPECT_NEAR(mr[1], 0.68, 0.005);
}

TEST(Models, FitzHughNagumoFoldsShiftWithP) {
    const double p = 0.02;
    const auto sys = models::fitzhugh_nagumo<double>({{"p", p}});
    const auto folds = models::find_folds(sys, -0.05 + p, vec({-0.05, 0.0}), 2e-3, 1500);
    ASSERT_EQ(folds.size(), 2u);
    EXPECT_NEAR(std::min(folds[0][0], folds[1][0]), -0.0024 + p, 0.005);
    EXPECT_NEAR(std::max(folds[0][0], folds[1][0]), 0.13 + p, 0.005);
}

TEST(Models, LindemannOriginEquilibrium) {
    const double eps = 0.1;
    const auto sys = models::lindemann<double>({{"epsilon", eps}});
    const Vec<double> z = Vec<double>::Zero(2);
    EXPECT_EQ(sys.full_field(z).norm(), 0.0);
    Eigen::EigenSolver<Mat<double>> es(sys.full_jacobian(z));
    std::vector<double> ev{es.eigenvalues()[0].real(), es.eigenvalues()[1].real()};
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], -eps, 1e-15);
    EXPECT_NEAR(ev[1], 0.0, 1e-15);
}

TEST(Models, LindemannChartsMapOntoEachOther) {
    const auto xy = models::lindemann<double>();
    const auto wz = models::lindemann_wz<double>();
    const RhsFn fxy = [&](double, const Vec<double>& z) { return xy.full_field(z); };
    const RhsFn fwz = [&](double, const Vec<double>& z) { return wz.full_field(z); };
    const Vec<double> z0 = vec({1.0, 0.3});
    const Vec<double> w0 = vec({z0[0] + z0[1], 2 * z0[1]});
    OdeOptions opts{1e-12, 1e-14};
    const auto a = integrate_adaptive(fxy, 0.0, z0, 5.0, opts);
    const auto b = integrate_adaptive(fwz, 0.0, w0, 5.0, opts);
    const Vec<double> za = a.back();
    EXPECT_LT((vec({za[0] + za[1], 2 * za[1]}) - b.back()).norm(), 1e-9);
}

// --- differencing -----------------------------------------------------------

TEST(LocalGrid, CountCenterAndOrder) {
    for (int n = 1; n <= 3; ++n) {
        const LocalGrid<double> g(Vec<double>::Zero(n), 0.1);
        EXPECT_EQ(g.size(), ipow3(n));
        EXPECT_EQ(g.offset(g.center_index()).norm(), 0.0);
    }
    const LocalGrid<double> g(vec({0.0, 0.0}), 0.5);
    // Lexicographic, axis 0 most significant, digits (-h, 0, +h).
    EXPECT_EQ(g.offset(0), vec({-0.5, -0.5}));
    EXPECT_EQ(g.offset(1), vec({-0.5, 0.0}));
    EXPECT_EQ(g.offset(3), vec({0.0, -0.5}));
    EXPECT_EQ(g.offset(8), vec({0.5, 0.5}));
}

TEST(LocalGrid, SpacingFloor) {
    const LocalGrid<double> g(vec({1.0}), 1e-20);
    EXPECT_DOUBLE_EQ(g.h(), 1000 * std::numeric_limits<double>::epsilon() * 2.0);
    EXPECT_THROW(LocalGrid<double>(vec({1.0}), 0.0), Error);
}

namespace {

template <typename F>
Mat<double> diff_of(F f, const Vec<double>& c, double h) {
    const LocalGrid<double> g(c, h);
    std::vector<Vec<double>> v;
    for (int k = 0; k < g.size(); ++k) v.push_back(f(g.point(k)));
    return central_diff<double>(g, v);
}

}  // namespace

TEST(CentralDiff, Examples) {
    EXPECT_NEAR(diff_of([](const Vec<double>& x) { return vec({x[0] * x[0]}); }, vec({1.0}), 0.1)(0, 0), 2.0, 1e-14);
    EXPECT_EQ(diff_of([](const Vec<double>& x) { return vec({std::cos(x[0])}); }, vec({0.0}), 0.37)(0, 0), 0.0);
    EXPECT_NEAR(diff_of([](const Vec<double>& x) { return vec({x[0] * x[0] * x[0]}); }, vec({0.0}), 0.1)(0, 0), 0.01,
                1e-16);
}

TEST(CentralDiff, ExactOnQuadratics) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng), f = u(rng);
        const auto q = [=](const Vec<double>& x) {
            return vec({a + b * x[0] + c * x[1] + d * x[0] * x[0] + e * x[0] * x[1] + f * x[1] * x[1]});
        };
        const Vec<double> x = vec({u(rng), u(rng)});
        const Mat<double> D = diff_of(q, x, 0.3);
        EXPECT_NEAR(D(0, 0), b + 2 * d * x[0] + e * x[1], 1e-13);
        EXPECT_NEAR(D(0, 1), c + e * x[0] + 2 * f * x[1], 1e-13);
    }
}

TEST(CentralDiff, SecondOrder) {
    const auto f = [](const Vec<double>& x) { return vec({std::sin(x[0]) * std::exp(x[1])}); };
    const Vec<double> x = vec({0.4, -0.3});
    const double exact = std::cos(x[0]) * std::exp(x[1]);
    double prev = 0.0;
    for (double h : {0.1, 0.05, 0.025}) {
        const double err = std::abs(diff_of(f, x, h)(0, 0) - exact);
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 1.0);
        prev = err;
    }
}

TEST(CentralDiff, MissingNeighbor) {
    const LocalGrid<double> g(vec({0.0, 0.0}), 0.1);
    std::vector<Vec<double>> v(static_cast<std::size_t>(g.size()), vec({1.0}));
    v[static_cast<std::size_t>(g.neighbor(g.center_index(), 1, 2))] = Vec<double>();
    try {
        central_diff<double>(g, v);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingNeighbor);
    }
    v.pop_back();
    EXPECT_THROW(central_diff<double>(g, v), Error);
}

TEST(ChooseH, Examples) {
    EXPECT_DOUBLE_EQ(choose_h(0.5, 1e-3), 1e-2);
    EXPECT_NEAR(choose_h(0.01, 1.0), 1e-11, 1e-24);
    EXPECT_DOUBLE_EQ(choose_h(0.1, 1e-2), 1e-2);
    EXPECT_THROW(choose_h(0.0, 1e-3), Error);
}
