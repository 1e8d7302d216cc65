#include "bsdekit/checks.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/metrics.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace bsde {

double mixed_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

namespace {

struct Probe {
    Vec x;
    double t;
};

std::vector<Probe> make_probes(const PdeProblem& problem, const ProbeOptions& o) {
    StreamRng rng(o.seed, 0x9e0beULL);
    std::normal_distribution<double> normal;
    // Keep time strictly inside (0, T) so time differences stay in range.
    const double h = o.step;
    std::uniform_real_distribution<double> uniform(h, problem.horizon() - h);
    const Vec x0 = problem.initial_state();
    std::vector<Probe> out;
    out.reserve(o.probes);
    for (int i = 0; i < o.probes; ++i) {
        Vec x(problem.dim());
        for (int j = 0; j < x.size(); ++j) x[j] = x0[j] + o.spread * normal(rng);
        out.push_back({x, uniform(rng)});
    }
    return out;
}

// Tracks the worst error and where it happened.
struct Worst {
    double err = 0.0;
    std::string where;
    void see(double e, const std::string& what) {
        if (!(e <= err)) {  // also captures NaN
            err = std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
            where = what;
        }
    }
};

CheckResult finish(std::string name, const Worst& w, double tol) {
    CheckResult r;
    r.name = std::move(name);
    r.value = w.err;
    r.tolerance = tol;
    r.passed = w.err <= tol;
    r.detail = w.where.empty() ? "ok" : "worst at " + w.where;
    return r;
}

}  // namespace

CheckResult check_model_derivatives(const PdeProblem& problem, const ModelFamily& model,
                                    const Vec& theta, const ProbeOptions& o) {
    const int d = model.dim();
    const int p = model.param_dim();
    const double h = o.step;
    Worst worst;
    ModelJet jet, jp, jm;
    ModelParamJet pj, pp, pm;
    EvalOptions full;
    full.param_hessians = true;
    Mat g(d, problem.noise_dim());

    for (const Probe& pr : make_probes(problem, o)) {
        problem.diffusion(pr.x, pr.t, 0.0, g);
        const Mat metric = g * g.transpose();
        full.metric = &metric;
        model.evaluate(theta, pr.x, pr.t, jet, &pj, full);
        worst.see((jet.hess - jet.hess.transpose()).cwiseAbs().maxCoeff(), "hessian symmetry");
        worst.see(mixed_error(jet.trace_metric_hess, metric.cwiseProduct(jet.hess).sum()),
                  "metric trace");
        Vec dtr;
        const double tr = model.diffusion_trace(theta, pr.x, pr.t, g, &dtr);
        worst.see(mixed_error(tr, jet.trace_metric_hess), "diffusion_trace");
        for (int k = 0; k < p; ++k) {
            worst.see(mixed_error(dtr[k], pj.trace_metric_hess[k]), "d diffusion_trace / d theta");
        }

        // Spatial derivatives.
        for (int i = 0; i < d; ++i) {
            Vec xp = pr.x, xm = pr.x;
            xp[i] += h;
            xm[i] -= h;
            model.evaluate(theta, xp, pr.t, jp);
            model.evaluate(theta, xm, pr.t, jm);
            worst.see(mixed_error(jet.grad[i], (jp.value - jm.value) / (2 * h)), "grad");
            for (int j = 0; j < d; ++j) {
                worst.see(mixed_error(jet.hess(j, i), (jp.grad[j] - jm.grad[j]) / (2 * h)), "hessian");
            }
        }
        // Time derivative.
        model.evaluate(theta, pr.x, pr.t + h, jp);
        model.evaluate(theta, pr.x, pr.t - h, jm);
        worst.see(mixed_error(jet.time_deriv, (jp.value - jm.value) / (2 * h)), "time derivative");

        // Parameter derivatives of every jet entry.
        for (int k = 0; k < p; ++k) {
            Vec tp = theta, tm = theta;
            tp[k] += h;
            tm[k] -= h;
            model.evaluate(tp, pr.x, pr.t, jp, nullptr, full);
            model.evaluate(tm, pr.x, pr.t, jm, nullptr, full);
            const double inv = 1.0 / (2 * h);
            worst.see(mixed_error(pj.value[k], (jp.value - jm.value) * inv), "d value / d theta");
            worst.see(mixed_error(pj.time_deriv[k], (jp.time_deriv - jm.time_deriv) * inv),
                      "d time_deriv / d theta");
            worst.see(mixed_error(pj.trace_metric_hess[k],
                                  (jp.trace_metric_hess - jm.trace_metric_hess) * inv),
                      "d trace / d theta");
            for (int i = 0; i < d; ++i) {
                worst.see(mixed_error(pj.grad(i, k), (jp.grad[i] - jm.grad[i]) * inv), "d grad / d theta");
                for (int j = 0; j < d; ++j) {
                    worst.see(mixed_error(pj.hess[k](i, j), (jp.hess(i, j) - jm.hess(i, j)) * inv),
                              "d hessian / d theta");
                }
            }
        }
    }
    return finish("model_derivatives:" + problem.name() + ":" + model.name(), worst, o.tolerance);
}

CheckResult check_terminal_gradient(const PdeProblem& problem, const ProbeOptions& o) {
    const int d = problem.dim();
    const double h = o.step;
    Worst worst;
    Vec grad(d);
    for (const Probe& pr : make_probes(problem, o)) {
        problem.terminal_grad(pr.x, grad);
        for (int i = 0; i < d; ++i) {
            Vec xp = pr.x, xm = pr.x;
            xp[i] += h;
            xm[i] -= h;
            worst.see(mixed_error(grad[i], (problem.terminal(xp) - problem.terminal(xm)) / (2 * h)),
                      "coordinate " + std::to_string(i));
        }
    }
    return finish("terminal_gradient:" + problem.name(), worst, o.tolerance);
}

CheckResult check_diffusion_psd(const PdeProblem& problem, const ProbeOptions& o) {
    const int d = problem.dim();
    Worst worst;
    Mat g(d, problem.noise_dim());
    for (const Probe& pr : make_probes(problem, o)) {
        // Coupled problems get a probe value for y as well.
        const double y = problem.coupled() ? pr.x.sum() : 0.0;
        problem.diffusion(pr.x, pr.t, y, g);
        const Mat hm = g * g.transpose();
        const double scale = std::max(1.0, hm.cwiseAbs().maxCoeff());
        worst.see((hm - hm.transpose()).cwiseAbs().maxCoeff() / scale, "symmetry");
        const Eigen::SelfAdjointEigenSolver<Mat> es(hm, Eigen::EigenvaluesOnly);
        worst.see(std::max(0.0, -es.eigenvalues().minCoeff()) / scale, "negative eigenvalue");
    }
    return finish("diffusion_psd:" + problem.name(), worst, o.tolerance);
}

CheckResult check_residual_at_truth(const PdeProblem& problem, const ProbeOptions& o) {
    if (!problem.has_exact_solution()) {
        throw PreconditionError("check_residual_at_truth: '" + problem.name() + "' has no closed form");
    }
    // ScaledExact needs shared ownership; wrap without taking it.
    const ProblemPtr view(std::shared_ptr<const PdeProblem>{}, &problem);
    const ScaledExact model(view);
    const Vec one = Vec::Ones(1);
    Worst worst;
    for (const Probe& pr : make_probes(problem, o)) {
        worst.see(std::abs(residual(problem, model, one, pr.x, pr.t)), "t=" + std::to_string(pr.t));
    }
    return finish("residual_at_truth:" + problem.name(), worst, o.tolerance);
}

CheckResult check_loss_gradient(const PdeProblem& problem, const ModelFamily& model,
                                const LossSpec& spec, int n_theta, double tolerance,
                                std::uint64_t seed, double step) {
    const bool trajectory = spec.kind == LossKind::EM || spec.kind == LossKind::Heun;
    if (trajectory && problem.coupled()) {
        throw PreconditionError("check_loss_gradient: trajectory losses of coupled problems "
                                "use a stop-gradient through the forward path");
    }
    const ProblemPtr view(std::shared_ptr<const PdeProblem>{}, &problem);
    const ModelPtr mview(std::shared_ptr<const ModelFamily>{}, &model);
    const Objective objective(view, mview, spec);
    const int p = model.param_dim();
    Worst worst;
    for (int i = 0; i < n_theta; ++i) {
        const Vec theta = initial_parameters(p, mix_seed(seed, static_cast<std::uint64_t>(i))) * 5.0;
        const LossValue v = objective(theta, spec.seed);
        Vec fd(p);
        for (int k = 0; k < p; ++k) {
            const double hk = step * std::max(1.0, std::abs(theta[k]));
            Vec tp = theta, tm = theta;
            tp[k] += hk;
            tm[k] -= hk;
            fd[k] = (objective(tp, spec.seed).value - objective(tm, spec.seed).value) / (2 * hk);
        }
        const double denom = std::max({fd.norm(), v.grad.norm(), 1e-12});
        worst.see((v.grad - fd).norm() / denom, "theta sample " + std::to_string(i));
    }
    std::string name = std::string("loss_gradient:") + to_string(spec.kind);
    if (spec.kind == LossKind::EM) name += std::string(":") + to_string(spec.reset);
    if (trajectory) name += ":k" + std::to_string(spec.skip);
    return finish(name + ":" + problem.name(), worst, tolerance);
}

}  // namespace bsde
