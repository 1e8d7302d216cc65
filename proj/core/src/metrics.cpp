#include "bsdekit/metrics.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/random.hpp"

#include <cmath>
#include <random>
#include <string>

namespace bsde {

namespace {

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) {
        throw NumericalDomainError(term, std::string("residual: non-finite ") + term);
    }
}

struct ResidualParts {
    double value;
    double h_dy;
    Vec h_dz;
    Vec drift;
    Mat g;
    Mat metric;
};

}  // namespace

ResidualValue residual_with_gradient(const PdeProblem& problem, const ModelFamily& model,
                                     const Vec& theta, CVecRef x, double t) {
    const int d = problem.dim();
    const int m = problem.noise_dim();
    if (x.size() != d || model.dim() != d) throw PreconditionError("residual: dimension mismatch");

    ModelJet jet;
    EvalOptions plain;
    plain.hessian = false;
    double y = 0.0;
    if (problem.coupled()) {
        model.evaluate(theta, x, t, jet, nullptr, plain);
        y = jet.value;
    }
    Mat g(d, m);
    problem.diffusion(x, t, y, g);
    const Mat metric = g * g.transpose();

    ModelParamJet pj;
    EvalOptions opts;
    opts.metric = &metric;
    model.evaluate(theta, x, t, jet, &pj, opts);

    Vec f(d);
    problem.drift(x, t, f);
    Vec dz(d);
    const NonlinearityValue h = problem.nonlinearity(x, t, jet.value, jet.grad, dz);

    require_finite(jet.time_deriv, "time_derivative");
    require_finite(jet.trace_metric_hess, "diffusion_term");
    const double transport = f.dot(jet.grad);
    require_finite(transport, "drift_term");
    require_finite(h.value, "nonlinearity");

    ResidualValue out;
    out.value = jet.time_deriv + 0.5 * jet.trace_metric_hess + transport - h.value;
    require_finite(out.value, "residual");

    out.grad = pj.time_deriv + 0.5 * pj.trace_metric_hess + pj.grad.transpose() * (f - dz) -
               h.dy * pj.value;
    if (problem.coupled()) {
        // H depends on y = u_theta: d/dy 1/2 Tr(H hess) = Tr(g_y g^T hess).
        Mat g_dy(d, m);
        problem.diffusion_dy(x, t, y, g_dy);
        const double dtrace_dy = (g_dy * g.transpose()).cwiseProduct(jet.hess).sum();
        out.grad += dtrace_dy * pj.value;
    }
    return out;
}

double residual(const PdeProblem& problem, const ModelFamily& model, const Vec& theta, CVecRef x,
                double t) {
    const int d = problem.dim();
    if (x.size() != d || model.dim() != d) throw PreconditionError("residual: dimension mismatch");
    ModelJet jet;
    double y = 0.0;
    if (problem.coupled()) {
        EvalOptions plain;
        plain.hessian = false;
        model.evaluate(theta, x, t, jet, nullptr, plain);
        y = jet.value;
    }
    const Mat metric = diffusion_metric(problem, x, t, y);
    EvalOptions opts;
    opts.metric = &metric;
    opts.hessian = false;
    model.evaluate(theta, x, t, jet, nullptr, opts);
    Vec f(d);
    problem.drift(x, t, f);
    Vec dz(d);
    const NonlinearityValue h = problem.nonlinearity(x, t, jet.value, jet.grad, dz);

    require_finite(jet.time_deriv, "time_derivative");
    require_finite(jet.trace_metric_hess, "diffusion_term");
    const double transport = f.dot(jet.grad);
    require_finite(transport, "drift_term");
    require_finite(h.value, "nonlinearity");
    const double r = jet.time_deriv + 0.5 * jet.trace_metric_hess + transport - h.value;
    require_finite(r, "residual");
    return r;
}

double rl2(std::span<const double> reference, std::span<const double> predicted) {
    if (reference.size() != predicted.size()) throw PreconditionError("rl2: length mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double e = reference[i] - predicted[i];
        num += e * e;
        den += reference[i] * reference[i];
    }
    if (den == 0.0) throw NumericalDomainError("reference", "rl2: reference is identically zero");
    return std::sqrt(num / den);
}

QuadformVarianceCheck gaussian_quadform_variance_check(const Mat& q, std::int64_t n_samples,
                                                       std::uint64_t seed) {
    if (q.rows() != q.cols()) throw PreconditionError("quadform check: Q must be square");
    if ((q - q.transpose()).cwiseAbs().maxCoeff() > 0.0) {
        throw PreconditionError("quadform check: Q must be symmetric");
    }
    if (n_samples < 1) throw PreconditionError("quadform check: n_samples must be >= 1");

    const int d = static_cast<int>(q.rows());
    const double trace = q.trace();
    StreamRng rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec w(d);
    // Welford accumulation of (Tr Q - w^T Q w)^2.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t n = 0; n < n_samples; ++n) {
        for (int i = 0; i < d; ++i) w[i] = normal(rng);
        const double dev = trace - w.dot(q * w);
        const double sample = dev * dev;
        const double delta = sample - mean;
        mean += delta / static_cast<double>(n + 1);
        m2 += delta * (sample - mean);
    }
    QuadformVarianceCheck out;
    out.mc_estimate = mean;
    out.analytic = 2.0 * q.squaredNorm();
    out.std_error = n_samples > 1
                        ? std::sqrt(m2 / static_cast<double>(n_samples - 1) / static_cast<double>(n_samples))
                        : 0.0;
    return out;
}

}  // namespace bsde
