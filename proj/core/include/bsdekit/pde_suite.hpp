#pragma once

#include "bsdekit/problem.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bsde {

/// u_t + Tr(grad^2 u) - |grad u|^2 = 0 with g = sigma I, sigma = sqrt(2),
/// u(x, T) = ln(0.5 (1 + |x|^2)), started at x0 = 0. No closed form; see
/// hjb_reference.
class HjbProblem final : public PdeProblem {
public:
    struct Params {
        int dim = 1;
        double horizon = 1.0;
        double sigma = 1.4142135623730951;
        std::optional<Vec> x0;
    };
    explicit HjbProblem(Params p);

    std::string name() const override { return "hjb"; }
    int dim() const override { return p_.dim; }
    double horizon() const override { return p_.horizon; }
    Vec initial_state() const override { return x0_; }
    void drift(CVecRef x, double t, VecRef out) const override;
    void diffusion(CVecRef x, double t, double y, MatRef out) const override;
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z, VecRef dz) const override;
    double terminal(CVecRef x) const override;
    void terminal_grad(CVecRef x, VecRef out) const override;

    double sigma() const { return p_.sigma; }

private:
    Params p_;
    Vec x0_;
};

/// Monte-Carlo value u(x, t) = -ln E exp(-phi(x + sigma sqrt(T - t) xi)),
/// xi ~ N(0, I), evaluated with a log-sum-exp. Sample i uses substream
/// (seed, i).
struct HjbReference {
    double value;
    /// Delta-method standard error of `value`.
    double std_error;
};
HjbReference hjb_reference(const HjbProblem& problem, CVecRef x, double t, std::int64_t n_mc,
                           std::uint64_t seed);

/// Black-Scholes-Barenblatt: f = 0, g = sigma diag(x), h = r (y - z^T x),
/// phi = |x|^2, exact u = exp((r + sigma^2)(T - t)) |x|^2.
class BsbProblem final : public PdeProblem {
public:
    struct Params {
        int dim = 1;
        double horizon = 1.0;
        double sigma = 0.4;
        double rate = 0.05;
        /// Defaults to alternating (1, 0.5, 1, 0.5, ...).
        std::optional<Vec> x0;
    };
    explicit BsbProblem(Params p);

    std::string name() const override { return "bsb"; }
    int dim() const override { return p_.dim; }
    double horizon() const override { return p_.horizon; }
    Vec initial_state() const override { return x0_; }
    void drift(CVecRef x, double t, VecRef out) const override;
    void diffusion(CVecRef x, double t, double y, MatRef out) const override;
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z, VecRef dz) const override;
    double terminal(CVecRef x) const override;
    void terminal_grad(CVecRef x, VecRef out) const override;
    bool has_exact_solution() const override { return true; }
    void exact_solution(CVecRef x, double t, SolutionJet& out) const override;

private:
    Params p_;
    Vec x0_;
};

/// Coupled problem with diffusion g = sigma y I, phi = D sum_j sin x_j and
/// exact u = exp(-r (T - t)) D sum_j sin x_j. The nonlinearity
/// h = r y - 1/2 sigma^2 exp(-3 r (T - t)) (D sum_j sin x_j)^3 makes that u
/// a solution of the quasilinear PDE.
class BzProblem final : public PdeProblem {
public:
    struct Params {
        int dim = 1;
        double horizon = 1.0;
        double rate = 0.1;
        double sigma = 0.3;
        double amplitude = 0.1;
        /// Defaults to pi/2 in every coordinate.
        std::optional<Vec> x0;
    };
    explicit BzProblem(Params p);

    std::string name() const override { return "bz"; }
    int dim() const override { return p_.dim; }
    double horizon() const override { return p_.horizon; }
    Vec initial_state() const override { return x0_; }
    bool coupled() const override { return true; }
    void drift(CVecRef x, double t, VecRef out) const override;
    void diffusion(CVecRef x, double t, double y, MatRef out) const override;
    void diffusion_dy(CVecRef x, double t, double y, MatRef out) const override;
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z, VecRef dz) const override;
    double terminal(CVecRef x) const override;
    void terminal_grad(CVecRef x, VecRef out) const override;
    bool has_exact_solution() const override { return true; }
    void exact_solution(CVecRef x, double t, SolutionJet& out) const override;

private:
    Params p_;
    Vec x0_;
};

/// Scalar Riccati equation a' = a^2 / r_c - q, a(T) = q_T.
struct Riccati1d {
    double q = 1.0;
    double r_c = 1.0;
    double q_terminal = 1.0;
    double sigma = 1.4142135623730951;
    double horizon = 1.0;

    /// a(t), closed form (tanh / coth branch or constant).
    double a(double t) const;
    /// c(t) = sigma^2 int_t^T a(s) ds, closed form.
    double c(double t) const;
};

/// 1D linear-quadratic control: f = 0, g = sigma, h = z^2 / (4 r_c) - q x^2,
/// phi = q_T x^2, exact u = a(t) x^2 + c(t) from Riccati1d.
class Lqr1dProblem final : public PdeProblem {
public:
    struct Params {
        double horizon = 1.0;
        double sigma = 1.4142135623730951;
        double q = 1.0;
        double r_c = 1.0;
        double q_terminal = 1.0;
        double x0 = 0.0;
    };
    explicit Lqr1dProblem(Params p);

    std::string name() const override { return "lqr1d"; }
    int dim() const override { return 1; }
    double horizon() const override { return p_.horizon; }
    Vec initial_state() const override { return Vec::Constant(1, p_.x0); }
    void drift(CVecRef x, double t, VecRef out) const override;
    void diffusion(CVecRef x, double t, double y, MatRef out) const override;
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z, VecRef dz) const override;
    double terminal(CVecRef x) const override;
    void terminal_grad(CVecRef x, VecRef out) const override;
    bool has_exact_solution() const override { return true; }
    void exact_solution(CVecRef x, double t, SolutionJet& out) const override;

    const Riccati1d& riccati() const { return riccati_; }
    double sigma() const { return p_.sigma; }

private:
    Params p_;
    Riccati1d riccati_;
};

/// Problem overrides by name; unset entries keep the problem defaults.
struct ProblemOptions {
    int dim = 1;
    std::optional<double> horizon;
    std::optional<double> sigma;
    std::optional<double> rate;
    std::optional<double> amplitude;
    std::optional<Vec> x0;
};

/// Builds "hjb", "bsb", "bz" or "lqr1d". Throws ConfigError for an unknown
/// name or an option the problem does not take.
ProblemPtr make_problem(const std::string& name, const ProblemOptions& options);

std::vector<std::string> problem_names();

}  // namespace bsde
