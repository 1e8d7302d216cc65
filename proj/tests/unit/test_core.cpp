#include "../support/oracles.hpp"

#include "bsdekit/checks.hpp"
#include "bsdekit/errors.hpp"
#include "bsdekit/metrics.hpp"
#include "bsdekit/model.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/parallel.hpp"
#include "bsdekit/pde_suite.hpp"
#include "bsdekit/random.hpp"

#include <doctest.h>

#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <vector>

using namespace bsde;

TEST_CASE("time grid knots are exact at the ends") {
    const TimeGrid g(0.0, 0.7, 7);
    CHECK(g.tau() == doctest::Approx(0.1));
    CHECK(g.knot(0) == 0.0);
    CHECK(g.knot(7) == 0.7);
    CHECK(g.refined(4).n_steps() == 28);
    CHECK(g.refined(4).knot(28) == 0.7);
    CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 0), PreconditionError);
    CHECK_THROWS_AS(TimeGrid(1.0, 1.0, 3), PreconditionError);
}

TEST_CASE("stream rng is a pure function of seed and stream") {
    StreamRng a(5, 9), b(5, 9), c(5, 10), d(6, 9);
    for (int i = 0; i < 100; ++i) {
        const auto va = a();
        CHECK(va == b());
        CHECK(va != c());
        CHECK(va != d());
    }
}

TEST_CASE("standard normal fills have unit moments") {
    std::vector<double> v(200000);
    fill_standard_normal(3, 1, v);
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    var /= v.size() - 1;
    CHECK(std::abs(m) < 5.0 / std::sqrt(v.size()));
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gaussian increments keep paths stable as the batch grows") {
    const GaussianIncrements small(11, 3, 5, 2);
    const GaussianIncrements large(11, 8, 5, 2);
    for (int b = 0; b < 3; ++b) {
        for (int k = 0; k < 5; ++k) CHECK((small.at(b, k) - large.at(b, k)).norm() == 0.0);
    }
}

TEST_CASE("coarsened increments sum blocks of the fine path") {
    const GaussianIncrements fine(2, 2, 8, 1);
    const GaussianIncrements coarse = fine.coarsened(4);
    REQUIRE(coarse.steps() == 2);
    for (int b = 0; b < 2; ++b) {
        for (int k = 0; k < 2; ++k) {
            double s = 0.0;
            for (int j = 0; j < 4; ++j) s += fine.at(b, 4 * k + j)[0];
            CHECK(coarse.at(b, k)[0] == doctest::Approx(s / 2.0).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(fine.coarsened(3), PreconditionError);
}

TEST_CASE("feature linear model evaluates the documented basis") {
    const int d = 2;
    const double horizon = 1.5;
    const FeatureLinear m(d, horizon);
    REQUIRE(m.param_dim() == 4 * (d + 3));
    Vec theta = Vec::Zero(m.param_dim());
    theta[m.index_norm2(0)] = 2.0;      // 2 |x|^2
    theta[m.index_linear(1, 1)] = 3.0;  // 3 x_2 s
    theta[m.index_sine(2)] = -1.0;      // -(sin x_1 + sin x_2) s^2
    theta[FeatureLinear::index(0, 3)] = 0.5;  // 0.5 s^3
    Vec x(2);
    x << 0.3, -1.1;
    const double t = 0.4;
    const double s = horizon - t;
    const double expected = 2.0 * x.squaredNorm() + 3.0 * x[1] * s - (std::sin(x[0]) + std::sin(x[1])) * s * s +
                            0.5 * s * s * s;
    CHECK(m.value(theta, x, t) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("model derivatives match finite differences") {
    ProbeOptions o;
    o.probes = 40;
    o.seed = 4;
    for (const char* name : {"bsb", "hjb", "bz"}) {
        ProblemOptions po;
        po.dim = 3;
        const ProblemPtr p = make_problem(name, po);
        const FeatureLinear m(3, p->horizon());
        const Vec theta = 3.0 * initial_parameters(m.param_dim(), 9);
        const CheckResult r = check_model_derivatives(*p, m, theta, o);
        INFO(name << ": " << r.detail);
        CHECK(r.passed);
        CHECK(r.value <= 1e-6);
    }
    const ProblemPtr lqr = make_problem("lqr1d", {});
    const ScaledExact se(lqr);
    CHECK(check_model_derivatives(*lqr, se, Vec::Constant(1, 0.7), o).passed);
}

TEST_CASE("derivative check detects a wrong gradient") {
    // A problem whose terminal gradient is off by a factor must fail.
    ProblemFunctions f;
    f.x0 = Vec::Zero(1);
    f.drift = [](CVecRef, double, VecRef out) { out.setZero(); };
    f.diffusion = [](CVecRef, double, double, MatRef out) { out.setIdentity(); };
    f.nonlinearity = [](CVecRef, double, double, CVecRef, VecRef dz) {
        dz.setZero();
        return NonlinearityValue{};
    };
    f.terminal = [](CVecRef x) { return x.squaredNorm(); };
    f.terminal_grad = [](CVecRef x, VecRef out) { out = 2.1 * x; };
    const FunctionalProblem p(std::move(f));
    CHECK_FALSE(check_terminal_gradient(p, {}).passed);
}

TEST_CASE("residual vanishes at closed-form solutions") {
    ProbeOptions o;
    o.tolerance = 1e-8;
    for (const char* name : {"bsb", "bz", "lqr1d"}) {
        ProblemOptions po;
        if (std::string(name) != "lqr1d") po.dim = 4;
        const CheckResult r = check_residual_at_truth(*make_problem(name, po), o);
        INFO(name);
        CHECK(r.passed);
    }
}

TEST_CASE("residual of a shifted nonlinearity equals the shift") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const ResidualOffsetProblem shifted(bsb, 0.25);
    const ScaledExact m(bsb);
    Vec x(1);
    x << 0.8;
    CHECK(residual(shifted, m, Vec::Ones(1), x, 0.3) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("residual gradient matches finite differences") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const FeatureLinear m(1, 1.0);
    Vec theta = initial_parameters(m.param_dim(), 2);
    Vec x(1);
    x << 1.3;
    const ResidualValue rv = residual_with_gradient(*bsb, m, theta, x, 0.4);
    for (int i = 0; i < m.param_dim(); ++i) {
        Vec tp = theta, tm = theta;
        tp[i] += 1e-6;
        tm[i] -= 1e-6;
        const double fd = (residual(*bsb, m, tp, x, 0.4) - residual(*bsb, m, tm, x, 0.4)) / 2e-6;
        CHECK(mixed_error(rv.grad[i], fd) < 1e-7);
    }
}

TEST_CASE("rl2 matches its definition") {
    const std::vector<double> ref{1.0, 2.0, -2.0};
    const std::vector<double> pred{1.0, 2.5, -2.0};
    CHECK(rl2(ref, pred) == doctest::Approx(0.5 / 3.0));
    CHECK(rl2(ref, ref) == 0.0);
}

TEST_CASE("quadratic-form variance estimate agrees with 2 |Q|_F^2") {
    Mat q(2, 2);
    q << 1.0, 0.5, 0.5, -2.0;
    const QuadformVarianceCheck v = gaussian_quadform_variance_check(q, 400000, 8);
    CHECK(v.analytic == doctest::Approx(oracle::quadform_variance({1.0, 0.5, 0.5, -2.0})));
    CHECK(std::abs(v.mc_estimate - v.analytic) <= 4.0 * v.std_error);
    Mat bad = q;
    bad(0, 1) = 0.4;
    CHECK_THROWS_AS(gaussian_quadform_variance_check(bad, 10, 1), PreconditionError);
}

TEST_CASE("parallel loops give schedule-independent results") {
    std::vector<double> a(1000), b(1000);
    set_thread_count(1);
    parallel_for(1000, [&](int i) { a[i] = std::sin(i) * i; });
    set_thread_count(4);
    parallel_for(1000, [&](int i) { b[i] = std::sin(i) * i; });
    set_thread_count(0);
    CHECK(a == b);
    int covered = 0;
    std::mutex m;
    parallel_chunks(37, [&](int begin, int end) {
        std::lock_guard lock(m);
        covered += end - begin;
    });
    CHECK(covered == 37);
}

TEST_CASE("mixed error is relative for large values and absolute near zero") {
    CHECK(mixed_error(100.0, 101.0) == doctest::Approx(1.0 / 101.0));
    CHECK(mixed_error(1e-9, 2e-9) == doctest::Approx(1e-9));
}
