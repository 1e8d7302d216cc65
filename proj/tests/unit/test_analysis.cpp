#include "../support/oracles.hpp"

#include "bsdekit/analysis.hpp"
#include "bsdekit/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace bsde;

TEST_CASE("tau scaling: EM minus Heun tends to the closed-form bias") {
    const ProblemPtr lqr = make_problem("lqr1d", {});
    const ScaledExact m(lqr);
    const Vec theta = Vec::Constant(1, 1.1);
    const SweepReport em = tau_scaling_study(*lqr, m, theta, Scheme::EulerMaruyama, {1e-2, 1e-3}, 200000, 5);
    const SweepReport he = tau_scaling_study(*lqr, m, theta, Scheme::Heun, {1e-2, 1e-3}, 200000, 5);
    CHECK(em.columns() ==
          std::vector<std::string>{"scheme", "tau", "normalized_loss", "std_error", "residual_sq", "bias_term", "em_limit"});
    // 1/2 (H * theta * 2a)^2 at x = 0 with H = 2, a = 1
    const double bias = oracle::lqr_em_bias(std::sqrt(2.0), 1.1 * oracle::riccati_a(1, 1, 1, 1, 0));
    CHECK(em.column_values("bias_term")[0] == doctest::Approx(bias).epsilon(1e-10));
    const auto le = em.column_values("normalized_loss");
    const auto lh = he.column_values("normalized_loss");
    const auto se = em.column_values("std_error");
    const auto sh = he.column_values("std_error");
    CHECK(std::abs(le[1] - lh[1] - bias) <= 3.0 * std::hypot(se[1], sh[1]));
}

TEST_CASE("landscape: one row per theta and step size, argmins recorded") {
    LandscapeOptions o;
    o.theta_grid = {0.8, 0.9, 1.0, 1.1, 1.2};
    o.em_taus = {1e-1};
    o.heun_taus = {1e-1, 5e-2};
    o.batch = 200;
    const SweepReport r = landscape_sweep(make_problem("lqr1d", {}), o);
    CHECK(r.row_count() == 15);
    CHECK(landscape_argmin(r, Scheme::Heun, 1e-1) == 2);
    CHECK(r.meta("argmin_heun_0.1") == "1");
    CHECK(landscape_argmin(r, Scheme::EulerMaruyama, 1e-1) < 2);
    CHECK_THROWS_AS(landscape_argmin(r, Scheme::EulerMaruyama, 0.3), PreconditionError);
    CHECK(LandscapeOptions::default_grid().size() == 101);
    CHECK(LandscapeOptions::default_grid()[50] == doctest::Approx(1.0));
}

TEST_CASE("landscape is reproducible bit for bit") {
    LandscapeOptions o;
    o.theta_grid = {0.9, 1.0, 1.1};
    o.em_taus = {1e-1};
    o.heun_taus = {1e-1};
    o.batch = 50;
    const ProblemPtr p = make_problem("lqr1d", {});
    CHECK(landscape_sweep(p, o).to_csv() == landscape_sweep(p, o).to_csv());
}

TEST_CASE("RL2 of the exact solution vanishes") {
    for (const char* name : {"bsb", "bz", "lqr1d"}) {
        ProblemOptions po;
        if (std::string(name) != "lqr1d") po.dim = 3;
        const ProblemPtr p = make_problem(name, po);
        const ScaledExact m(p);
        const Rl2Result r = evaluate_rl2(*p, m, Vec::Ones(1), TimeGrid::over(p->horizon(), 50));
        INFO(name);
        CHECK(r.overall <= 1e-10);
        CHECK(r.per_step.size() == 50);
    }
}

TEST_CASE("RL2 of a scaled solution is the scale error") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const ScaledExact m(bsb);
    Rl2Options o;
    o.include_terminal = true;
    const Rl2Result r = evaluate_rl2(*bsb, m, Vec::Constant(1, 1.25), TimeGrid::over(1.0, 20), o);
    CHECK(r.overall == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.per_step.size() == 21);
}

TEST_CASE("RL2 needs a reference when there is no closed form") {
    ProblemOptions po;
    po.dim = 2;
    auto hjb = std::static_pointer_cast<const HjbProblem>(make_problem("hjb", po));
    const FeatureLinear m(2, 1.0);
    const Vec theta = Vec::Zero(m.param_dim());
    CHECK_THROWS_AS(evaluate_rl2(*hjb, m, theta, TimeGrid::over(1.0, 10)), ConfigError);
    const Rl2Result r = evaluate_rl2(*hjb, m, theta, TimeGrid::over(1.0, 10), {}, hjb_reference_fn(hjb, 2000, 1));
    CHECK(r.overall == doctest::Approx(1.0));
}

TEST_CASE("HJB reference evaluated against itself is within Monte-Carlo error") {
    const auto hjb = std::static_pointer_cast<const HjbProblem>(make_problem("hjb", {}));
    const ReferenceFn a = hjb_reference_fn(hjb, 20000, 1);
    const ReferenceFn b = hjb_reference_fn(hjb, 20000, 2);
    Vec x(1);
    x << 0.3;
    const double se = hjb_reference(*hjb, x, 0.2, 20000, 1).std_error;
    CHECK(std::abs(a(x, 0.2) - b(x, 0.2)) <= 3.0 * std::sqrt(2.0) * se);
}

TEST_CASE("skip sweep rows, metadata and reproducibility") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const auto m = std::make_shared<FeatureLinear>(1, 1.0);
    TrainSetup s;
    s.loss.kind = LossKind::EM;
    s.loss.batch = 8;
    s.adam.total_iters = 20;
    s.adam.snapshot_every = 0;
    const SweepReport r = skip_sweep(bsb, m, s, {1, 2, 5}, {5, 10}, {0, 1});
    CHECK(r.row_count() == 12);
    CHECK(r.columns() == std::vector<std::string>{"skip", "n_steps", "seed", "rl2", "final_loss", "status"});
    CHECK_FALSE(r.meta("wall_seconds").empty());
    CHECK(r.to_csv() == skip_sweep(bsb, m, s, {1, 2, 5}, {5, 10}, {0, 1}).to_csv());
    CHECK_THROWS_AS(skip_sweep(bsb, m, s, {10}, {5}, {0}), PreconditionError);
}

TEST_CASE("training outcome carries the final RL2 snapshot") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const auto m = std::make_shared<FeatureLinear>(1, 1.0);
    TrainSetup s;
    s.loss.grid = TimeGrid::over(1.0, 10);
    s.adam.total_iters = 30;
    s.adam.snapshot_every = 10;
    const TrainOutcome o = train_and_evaluate(bsb, m, s, 4);
    CHECK(o.failure.empty());
    REQUIRE(o.trace.rl2.size() == 3);
    CHECK(o.rl2 == o.trace.rl2.back().rl2);
    CHECK(o.rl2 == doctest::Approx(evaluate_rl2(*bsb, *m, o.trace.final_theta, s.loss.grid).overall));
}

TEST_CASE("residual identity with a constant residual") {
    const ProblemPtr bsb = make_problem("bsb", {});
    const ResidualOffsetProblem shifted(bsb, -0.4);
    const ScaledExact m(bsb);
    const IdentityCheck ic = bsde_identity_check(shifted, m, Vec::Ones(1), TimeGrid::over(1.0, 200), 300, 2);
    CHECK(ic.rhs == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(ic.fs_pinns == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(std::abs(ic.lhs - 0.16) / 0.16 <= 0.1);
    CHECK(ic.lhs <= ic.fs_pinns + 3.0 * ic.jensen_gap_se + 1e-3);
}

TEST_CASE("log-log slope of an exact power law") {
    CHECK(loglog_slope({1.0, 2.0, 4.0, 8.0}, {3.0, 12.0, 48.0, 192.0}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), PreconditionError);
    CHECK_THROWS_AS(loglog_slope({1.0, 2.0}, {1.0, -1.0}), NumericalDomainError);
}

TEST_CASE("strong convergence study on an ODE recovers second order for Heun") {
    ProblemFunctions f;
    f.x0 = Vec::Ones(1);
    f.drift = [](CVecRef x, double, VecRef out) { out = 0.8 * x; };
    f.diffusion = [](CVecRef, double, double, MatRef out) { out.setZero(); };
    f.nonlinearity = [](CVecRef, double, double, CVecRef, VecRef dz) {
        dz.setZero();
        return NonlinearityValue{};
    };
    f.terminal = [](CVecRef) { return 0.0; };
    f.terminal_grad = [](CVecRef, VecRef out) { out.setZero(); };
    const FunctionalProblem ode(std::move(f));
    const SweepReport he = strong_convergence_study(ode, Scheme::Heun, 8, 3, 16, 2, 1);
    const SweepReport em = strong_convergence_study(ode, Scheme::EulerMaruyama, 8, 3, 16, 2, 1);
    CHECK(he.row_count() == 3);
    CHECK(std::stod(he.meta("slope")) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::stod(em.meta("slope")) == doctest::Approx(1.0).epsilon(0.15));
}
