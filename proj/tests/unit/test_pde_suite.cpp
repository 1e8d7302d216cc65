#include "../support/oracles.hpp"

#include "bsdekit/checks.hpp"
#include "bsdekit/errors.hpp"
#include "bsdekit/pde_suite.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace bsde;

TEST_CASE("Riccati closed form matches RK4 on several coefficient regimes") {
    struct Coeffs {
        double q, r, qt, horizon;
    };
    // below, above and at the equilibrium sqrt(q r), plus the q = 0 case
    for (const Coeffs& c : {Coeffs{2.0, 0.5, 0.3, 1.0}, Coeffs{2.0, 0.5, 3.0, 1.0}, Coeffs{1.5, 2.0, 0.7, 2.5},
                            Coeffs{1.0, 1.0, 1.0, 1.0}, Coeffs{0.0, 1.0, 0.4, 1.0}, Coeffs{0.5, 1.0, 0.0, 1.0}}) {
        Riccati1d ric;
        ric.q = c.q;
        ric.r_c = c.r;
        ric.q_terminal = c.qt;
        ric.sigma = 0.9;
        ric.horizon = c.horizon;
        for (double frac : {0.0, 0.25, 0.5, 0.9, 1.0}) {
            const double t = frac * c.horizon;
            INFO("q=" << c.q << " r=" << c.r << " qT=" << c.qt << " t=" << t);
            CHECK(ric.a(t) == doctest::Approx(oracle::riccati_a(c.q, c.r, c.qt, c.horizon, t)).epsilon(1e-8));
            CHECK(ric.c(t) ==
                  doctest::Approx(oracle::riccati_c(c.q, c.r, c.qt, 0.9, c.horizon, t)).epsilon(1e-8).scale(1.0));
        }
    }
}

TEST_CASE("LQR exact solution is a x^2 + c") {
    Lqr1dProblem::Params prm;
    prm.q = 2.0;
    prm.r_c = 0.5;
    prm.q_terminal = 0.3;
    prm.sigma = 0.7;
    const Lqr1dProblem p(prm);
    SolutionJet jet;
    Vec x(1);
    x << -0.6;
    p.exact_solution(x, 0.2, jet);
    const double a = oracle::riccati_a(2.0, 0.5, 0.3, 1.0, 0.2);
    const double c = oracle::riccati_c(2.0, 0.5, 0.3, 0.7, 1.0, 0.2);
    CHECK(jet.value == doctest::Approx(a * 0.36 + c).epsilon(1e-8));
    CHECK(jet.grad[0] == doctest::Approx(2.0 * a * -0.6).epsilon(1e-8));
    CHECK(jet.hess(0, 0) == doctest::Approx(2.0 * a).epsilon(1e-8));
    CHECK(check_residual_at_truth(p, {}).passed);
    CHECK(check_terminal_gradient(p, {}).passed);
}

TEST_CASE("default LQR coefficients give a constant Riccati solution") {
    const Lqr1dProblem p({});
    for (double t : {0.0, 0.3, 1.0}) {
        CHECK(p.riccati().a(t) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(p.riccati().c(t) == doctest::Approx(2.0 * (1.0 - t)).epsilon(1e-14).scale(1.0));
    }
    CHECK(p.initial_state()[0] == 0.0);
}

TEST_CASE("BSB and BZ closed forms agree with independent formulas") {
    BsbProblem::Params bp;
    bp.dim = 3;
    bp.rate = 0.07;
    bp.sigma = 0.3;
    bp.horizon = 2.0;
    const BsbProblem bsb(bp);
    BzProblem::Params zp;
    zp.dim = 3;
    zp.rate = 0.2;
    zp.amplitude = 0.4;
    const BzProblem bz(zp);
    const std::vector<double> xs{0.4, -1.2, 2.0};
    const Vec x = Eigen::Map<const Vec>(xs.data(), 3);
    SolutionJet jet;
    bsb.exact_solution(x, 0.5, jet);
    CHECK(jet.value == doctest::Approx(oracle::bsb_value(xs, 0.5, 2.0, 0.07, 0.3)).epsilon(1e-14));
    bz.exact_solution(x, 0.5, jet);
    CHECK(jet.value == doctest::Approx(oracle::bz_value(xs, 0.5, 1.0, 0.2, 0.4)).epsilon(1e-14));
    CHECK(bsb.terminal(x) == doctest::Approx(oracle::bsb_value(xs, 2.0, 2.0, 0.07, 0.3)));
    ProbeOptions o;
    o.tolerance = 1e-8;
    CHECK(check_residual_at_truth(bsb, o).passed);
    CHECK(check_residual_at_truth(bz, o).passed);
}

TEST_CASE("default initial states") {
    ProblemOptions o;
    o.dim = 4;
    const Vec bsb = make_problem("bsb", o)->initial_state();
    CHECK(bsb[0] == 1.0);
    CHECK(bsb[1] == 0.5);
    CHECK(bsb[2] == 1.0);
    CHECK(bsb[3] == 0.5);
    const Vec bz = make_problem("bz", o)->initial_state();
    CHECK(bz[2] == doctest::Approx(M_PI / 2.0));
    CHECK(make_problem("hjb", o)->initial_state().norm() == 0.0);
}

TEST_CASE("every problem passes the terminal-gradient and PSD checks") {
    for (const std::string& name : problem_names()) {
        ProblemOptions o;
        if (name != "lqr1d") o.dim = 3;
        const ProblemPtr p = make_problem(name, o);
        INFO(name);
        CHECK(check_terminal_gradient(*p, {}).passed);
        CHECK(check_diffusion_psd(*p, {}).passed);
    }
}

TEST_CASE("HJB Monte-Carlo reference agrees with quadrature in one dimension") {
    const HjbProblem p({});
    Vec x(1);
    x << 0.7;
    const double t = 0.4;
    // -ln E exp(-phi(x + sigma sqrt(T - t) xi)), trapezoid over xi in [-10, 10]
    const double s = std::sqrt(2.0) * std::sqrt(1.0 - t);
    double integral = 0.0;
    const int n = 20000;
    const double h = 20.0 / n;
    for (int i = 0; i <= n; ++i) {
        const double xi = -10.0 + i * h;
        const double y = x[0] + s * xi;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        integral += w * h * std::exp(-xi * xi / 2.0) / std::sqrt(2.0 * M_PI) / (0.5 * (1.0 + y * y));
    }
    const double expected = -std::log(integral);
    const HjbReference r = hjb_reference(p, x, t, 200000, 12);
    CHECK(std::abs(r.value - expected) <= 4.0 * r.std_error);
    CHECK(r.std_error < 0.01);
    const HjbReference at_t = hjb_reference(p, x, 1.0, 10, 1);
    CHECK(at_t.value == doctest::Approx(std::log(0.5 * (1.0 + 0.49))));
    CHECK(at_t.std_error == 0.0);
}

TEST_CASE("problem factory rejects unknown names and options") {
    CHECK_THROWS_AS(make_problem("heat", {}), ConfigError);
    ProblemOptions o;
    o.rate = 0.1;
    CHECK_THROWS_AS(make_problem("hjb", o), ConfigError);
    ProblemOptions two;
    two.dim = 2;
    CHECK_THROWS_AS(make_problem("lqr1d", two), ConfigError);
    ProblemOptions wrong_x0;
    wrong_x0.dim = 2;
    wrong_x0.x0 = Vec::Zero(3);
    CHECK_THROWS(make_problem("bsb", wrong_x0));
    CHECK(problem_names().size() == 4);
}
