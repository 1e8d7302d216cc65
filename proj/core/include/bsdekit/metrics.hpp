#pragma once

#include "bsdekit/model.hpp"
#include "bsdekit/problem.hpp"

#include <cstdint>
#include <span>

namespace bsde {

/// PDE residual R[u_theta](x, t) = d_t u + 1/2 Tr(H grad^2 u) + <f, grad u> - h(x, t, u, grad u).
/// For coupled problems H is evaluated at y = u_theta(x, t).
/// Throws NumericalDomainError naming the first non-finite term.
double residual(const PdeProblem& problem, const ModelFamily& model, const Vec& theta, CVecRef x,
                double t);

/// Residual together with its theta-gradient (length P).
struct ResidualValue {
    double value;
    Vec grad;
};
ResidualValue residual_with_gradient(const PdeProblem& problem, const ModelFamily& model,
                                     const Vec& theta, CVecRef x, double t);

/// Relative L2 error sqrt(sum (ref - pred)^2 / sum ref^2).
double rl2(std::span<const double> reference, std::span<const double> predicted);

struct QuadformVarianceCheck {
    double mc_estimate;
    double analytic;
    /// Standard error of mc_estimate.
    double std_error;
};

/// Monte-Carlo estimate of E (Tr Q - w^T Q w)^2, w ~ N(0, I), against 2 |Q|_F^2.
QuadformVarianceCheck gaussian_quadform_variance_check(const Mat& q, std::int64_t n_samples,
                                                       std::uint64_t seed);

}  // namespace bsde
