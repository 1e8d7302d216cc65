#include "bsdekit/checks.hpp"
#include "bsdekit/errors.hpp"
#include "bsdekit/integrators.hpp"
#include "bsdekit/losses.hpp"
#include "bsdekit/metrics.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/parallel.hpp"
#include "bsdekit/pde_suite.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace bsde;

namespace {

LossSpec small_spec(LossKind kind, int n = 10, int batch = 16, std::uint64_t seed = 3) {
    LossSpec s;
    s.kind = kind;
    s.grid = TimeGrid::over(1.0, n);
    s.batch = batch;
    s.seed = seed;
    return s;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("spec validation") {
    LossSpec s = small_spec(LossKind::EM);
    s.skip = 11;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.skip = 0;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.skip = 1;
    s.batch = 0;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    s.batch = 2;
    s.boundary_weight = -1.0;
    CHECK_THROWS_AS(s.validate(), PreconditionError);
    CHECK_THROWS_AS(loss_em_onestep(*make_problem("bsb", {}), FeatureLinear(1, 1.0), Vec::Zero(16),
                                    [] {
                                        LossSpec t = small_spec(LossKind::EM);
                                        t.skip = 2;
                                        return t;
                                    }()),
                    PreconditionError);
}

TEST_CASE("every loss kind has a correct analytic gradient") {
    ProblemOptions o;
    o.dim = 2;
    const ProblemPtr bsb = make_problem("bsb", o);
    const FeatureLinear m(2, 1.0);
    struct Case {
        LossKind kind;
        ResetPolicy reset;
        int skip;
    };
    for (const Case& c : {Case{LossKind::EM, ResetPolicy::Reset, 1}, Case{LossKind::EM, ResetPolicy::NoReset, 1},
                          Case{LossKind::EM, ResetPolicy::NoReset, 3}, Case{LossKind::Heun, ResetPolicy::Reset, 1},
                          Case{LossKind::Heun, ResetPolicy::Reset, 4}, Case{LossKind::PINNs, ResetPolicy::Reset, 1},
                          Case{LossKind::FSPINNs, ResetPolicy::Reset, 1}}) {
        LossSpec s = small_spec(c.kind, 8, 6);
        s.reset = c.reset;
        s.skip = c.skip;
        s.fit_paths = 100;
        const CheckResult r = check_loss_gradient(*bsb, m, s, 20, 1e-5, 17);
        INFO(r.name << " " << r.detail);
        CHECK(r.passed);
    }
}

TEST_CASE("gradient check refuses trajectory losses on coupled problems") {
    const ProblemPtr bz = make_problem("bz", {});
    const FeatureLinear m(1, 1.0);
    CHECK_THROWS_AS(check_loss_gradient(*bz, m, small_spec(LossKind::EM), 2, 1e-5, 1), PreconditionError);
    CHECK(check_loss_gradient(*bz, m, small_spec(LossKind::PINNs), 5, 1e-5, 1).passed);
}

TEST_CASE("skip length one reproduces the one-step losses bit for bit") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const FeatureLinear m(1, 1.0);
    const Vec theta = initial_parameters(m.param_dim(), 4);
    for (LossKind kind : {LossKind::EM, LossKind::Heun}) {
        for (ResetPolicy reset : {ResetPolicy::Reset, ResetPolicy::NoReset}) {
            LossSpec s = small_spec(kind, 12, 9);
            s.reset = reset;
            const LossValue multi = loss_multistep(*bsb, m, theta, s);
            const LossValue one =
                kind == LossKind::EM ? loss_em_onestep(*bsb, m, theta, s) : loss_heun_onestep(*bsb, m, theta, s);
            CHECK(same_bits(multi.value, one.value));
            CHECK(same_bits(multi.grad, one.grad));
        }
    }
}

TEST_CASE("full-horizon EM defect matches a hand-assembled trajectory") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const FeatureLinear m(1, 1.0);
    const Vec theta = initial_parameters(m.param_dim(), 6);
    LossSpec s = small_spec(LossKind::EM, 10, 5);
    s.skip = 10;
    s.boundary_weight = 0.0;
    s.reset = ResetPolicy::NoReset;
    const auto inc = std::make_shared<const GaussianIncrements>(s.seed, s.batch, 10, 1);
    const LossValue lv = loss_self_consistency(*bsb, m, theta, s, *inc);
    const TrajectoryBatch tb = em_backward(*bsb, m, theta, s.grid, inc, ResetPolicy::NoReset);
    double acc = 0.0;
    for (int b = 0; b < 5; ++b) {
        const double u0 = m.value(theta, tb.states[b].col(0), 0.0);
        const double un = m.value(theta, tb.states[b].col(10), 1.0);
        const double defect = un - u0 - (tb.values(b, 10) - tb.values(b, 0));
        acc += defect * defect;
    }
    CHECK(lv.value == doctest::Approx(acc / 5.0).epsilon(1e-12));
}

TEST_CASE("boundary penalty adds value and gradient mismatch at the terminal time") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const ScaledExact m(bsb);
    Mat pts(1, 3);
    pts << 0.5, 1.0, -2.0;
    // u_theta(x, T) = theta x^2: (theta - 1)^2 (x^4 + 4 x^2)
    const double th = 1.3;
    double expect = 0.0;
    for (int j = 0; j < 3; ++j) {
        const double x = pts(0, j);
        expect += (th - 1.0) * (th - 1.0) * (x * x * x * x + 4.0 * x * x);
    }
    CHECK(boundary_penalty(*bsb, m, Vec::Constant(1, th), pts).value == doctest::Approx(expect / 3.0));
    CHECK(boundary_penalty(*bsb, m, Vec::Ones(1), pts).value == 0.0);
}

TEST_CASE("Heun self-consistency vanishes at a quadratic exact solution") {
    const ProblemPtr lqr = make_problem("lqr1d", {});
    const ScaledExact m(lqr);
    for (int skip : {1, 5, 10}) {
        LossSpec s = small_spec(LossKind::Heun, 10, 32);
        s.skip = skip;
        CHECK(loss_self_consistency(*lqr, m, Vec::Ones(1), s).value < 1e-20);
    }
}

TEST_CASE("forward-SDE PINNs equals the mean squared residual along EM paths") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const FeatureLinear m(1, 1.0);
    const Vec theta = initial_parameters(m.param_dim(), 8);
    LossSpec s = small_spec(LossKind::FSPINNs, 6, 4);
    s.boundary_weight = 0.0;
    const auto inc = std::make_shared<const GaussianIncrements>(s.seed, 4, 6, 1);
    const TrajectoryBatch tb = em_forward(*bsb, s.grid, inc);
    double acc = 0.0;
    for (int b = 0; b < 4; ++b) {
        for (int k = 0; k < 6; ++k) {
            const double r = residual(*bsb, m, theta, tb.states[b].col(k), s.grid.knot(k));
            acc += r * r;
        }
    }
    CHECK(loss_pinns(*bsb, m, theta, s).value == doctest::Approx(acc / 24.0).epsilon(1e-12));
}

TEST_CASE("fitted collocation normal tracks the forward marginals") {
    const ProblemPtr hjb = make_problem("hjb", {});
    // X_t = sqrt(2) B_t pooled over uniform knots: mean 0, variance 2 * mean(t_k)
    const SpatialNormal fit = fit_spatial_normal(*hjb, TimeGrid::over(1.0, 20), 4000, 5);
    CHECK(std::abs(fit.mean[0]) < 0.05);
    CHECK(fit.stddev[0] * fit.stddev[0] == doctest::Approx(1.0).epsilon(0.05));

    ProblemFunctions f;
    f.x0 = Vec::Zero(1);
    f.drift = [](CVecRef, double, VecRef out) { out.setZero(); };
    f.diffusion = [](CVecRef, double, double, MatRef out) { out.setZero(); };
    f.nonlinearity = [](CVecRef, double, double, CVecRef, VecRef dz) {
        dz.setZero();
        return NonlinearityValue{};
    };
    f.terminal = [](CVecRef) { return 0.0; };
    f.terminal_grad = [](CVecRef, VecRef out) { out.setZero(); };
    const FunctionalProblem frozen(std::move(f));
    try {
        fit_spatial_normal(frozen, TimeGrid::over(1.0, 4), 10, 1);
        FAIL("expected a covariance failure");
    } catch (const NumericalDomainError& e) {
        CHECK(e.term() == "covariance");
    }
}

TEST_CASE("EM minus Heun one-step loss approaches the bias oracle") {
    const ProblemPtr lqr = make_problem("lqr1d", {});
    const ScaledExact m(lqr);
    const Vec theta = Vec::Constant(1, 0.8);
    LossSpec s = small_spec(LossKind::EM, 200, 4000);
    s.boundary_weight = 0.0;
    const double em = loss_em_onestep(*lqr, m, theta, s).value;
    s.kind = LossKind::Heun;
    const double he = loss_heun_onestep(*lqr, m, theta, s).value;
    const BiasEstimate b = bias_oracle(*lqr, m, theta, s.grid, 4000, 3);
    // 1/2 (2 * 2 * 0.8)^2 for the constant Hessian
    CHECK(b.value == doctest::Approx(5.12).epsilon(1e-12));
    CHECK(std::abs(em - he - b.value) <= 0.1 * b.value);
}

TEST_CASE("objective evaluations are reproducible per seed") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const auto m = std::make_shared<FeatureLinear>(1, 1.0);
    for (LossKind kind : {LossKind::EM, LossKind::Heun, LossKind::PINNs, LossKind::FSPINNs}) {
        const Objective obj(bsb, m, small_spec(kind));
        const Vec theta = initial_parameters(m->param_dim(), 1);
        const LossValue a = obj(theta, 7), b = obj(theta, 7), c = obj(theta, 8);
        CHECK(same_bits(a.value, b.value));
        CHECK(same_bits(a.grad, b.grad));
        CHECK_FALSE(same_bits(a.value, c.value));
    }
}

TEST_CASE("loss values do not depend on the worker count") {
    ProblemOptions o;
    o.dim = 3;
    const ProblemPtr bsb = make_problem("bsb", o);
    const auto m = std::make_shared<FeatureLinear>(3, 1.0);
    const Vec theta = initial_parameters(m->param_dim(), 2);
    for (LossKind kind : {LossKind::EM, LossKind::Heun, LossKind::FSPINNs}) {
        const Objective obj(bsb, m, small_spec(kind, 10, 13));
        set_thread_count(1);
        const LossValue a = obj(theta, 3);
        set_thread_count(4);
        const LossValue b = obj(theta, 3);
        set_thread_count(0);
        CHECK(same_bits(a.value, b.value));
        CHECK(same_bits(a.grad, b.grad));
    }
}
