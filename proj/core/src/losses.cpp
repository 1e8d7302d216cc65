#include "bsdekit/losses.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/metrics.hpp"
#include "bsdekit/parallel.hpp"
#include "stepping.hpp"

#include <cmath>
#include <random>
#include <string>

namespace bsde {

const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::EM: return "em";
        case LossKind::Heun: return "heun";
        case LossKind::PINNs: return "pinns";
        case LossKind::FSPINNs: return "fs_pinns";
    }
    return "unknown";
}

const char* to_string(PinnsSampling s) {
    return s == PinnsSampling::FittedNormal ? "fitted_normal" : "forward_sde";
}

void LossSpec::validate() const {
    if (batch < 1) throw PreconditionError("loss spec: batch must be at least 1");
    if (!(boundary_weight >= 0.0)) throw PreconditionError("loss spec: boundary weight must be >= 0");
    if (kind == LossKind::EM || kind == LossKind::Heun) {
        if (skip < 1 || skip > grid.n_steps()) {
            throw PreconditionError("loss spec: skip length " + std::to_string(skip) +
                                    " outside [1, " + std::to_string(grid.n_steps()) + "]");
        }
    }
    if (kind == LossKind::PINNs && sampling == PinnsSampling::FittedNormal && fit_paths < 2) {
        throw PreconditionError("loss spec: fitted-normal sampling needs at least 2 paths");
    }
}

namespace {

// Mean and standard error of per-path contributions, reduced in index order.
void finish_mean(const std::vector<double>& per_path, double& mean, double& std_error) {
    const auto n = static_cast<double>(per_path.size());
    double s = 0.0;
    for (double v : per_path) s += v;
    mean = s / n;
    if (per_path.size() < 2) {
        std_error = 0.0;
        return;
    }
    double ss = 0.0;
    for (double v : per_path) ss += (v - mean) * (v - mean);
    std_error = std::sqrt(ss / (n - 1.0) / n);
}

void add_boundary(LossValue& out, const PdeProblem& problem, const ModelFamily& model,
                  const Vec& theta, const Mat& terminal, double weight) {
    if (weight == 0.0) return;
    const LossValue b = boundary_penalty(problem, model, theta, terminal);
    out.boundary = b.value;
    out.value += weight * b.value;
    out.grad += weight * b.grad;
}

}  // namespace

LossValue loss_self_consistency(const PdeProblem& problem, const ModelFamily& model,
                                const Vec& theta, const LossSpec& spec,
                                const GaussianIncrements& increments) {
    spec.validate();
    if (spec.kind != LossKind::EM && spec.kind != LossKind::Heun) {
        throw PreconditionError("loss_self_consistency: kind must be em or heun");
    }
    const TimeGrid& grid = spec.grid;
    const int n = grid.n_steps();
    const int k_skip = spec.skip;
    const int n_seg = (n + k_skip - 1) / k_skip;
    const int batch = increments.batch();
    const int p = model.param_dim();
    if (increments.steps() != n || increments.channels() != problem.noise_dim()) {
        throw PreconditionError("loss_self_consistency: increments do not match grid/problem");
    }
    if (theta.size() != p) throw PreconditionError("loss_self_consistency: theta has wrong length");

    const bool heun = spec.kind == LossKind::Heun;
    const bool no_reset = !heun && spec.reset == ResetPolicy::NoReset;
    const Vec x0 = problem.initial_state();

    std::vector<double> per_path(batch, 0.0);
    Mat per_seg(batch, n_seg);
    Mat grads(p, batch);
    Mat terminal(problem.dim(), batch);

    parallel_chunks(batch, [&](int begin, int end) {
        detail::PathStepper st(problem, &model, &theta, true);
        Vec du_s(p), dsum(p), g(p);
        for (int b = begin; b < end; ++b) {
            g.setZero();
            double acc = 0.0;
            st.x = x0;
            st.evaluate_current(grid.knot(0));
            st.reset_backward();
            for (int seg = 0; seg < n_seg; ++seg) {
                const int s = seg * k_skip;
                const int f = std::min(s + k_skip, n);
                const double u_s = st.cur.jet.value;
                du_s = st.cur.params.value;
                if (!no_reset) st.reset_backward();
                double sum = 0.0;
                dsum.setZero();
                for (int k = s; k < f; ++k) {
                    if (k > s) st.evaluate_current(grid.knot(k));
                    const double incr =
                        heun ? st.heun_joint_step(grid.knot(k), grid.tau(), increments.at(b, k))
                             : st.em_joint_step(grid.knot(k), grid.tau(), increments.at(b, k),
                                                !no_reset);
                    st.require_finite(k);
                    sum += incr;
                    dsum += st.dincr;
                }
                st.evaluate_current(grid.knot(f));
                const double dt = grid.knot(f) - grid.knot(s);
                const double inv = 1.0 / (dt * dt);
                const double defect = st.cur.jet.value - u_s - sum;
                const double contrib = defect * defect * inv;
                per_seg(b, seg) = contrib;
                acc += contrib;
                g += (2.0 * defect * inv) * (st.cur.params.value - du_s - dsum);
            }
            per_path[b] = acc / n_seg;
            grads.col(b) = g / n_seg;
            terminal.col(b) = st.x;
        }
    });

    LossValue out;
    finish_mean(per_path, out.self_consistency, out.std_error);
    out.value = out.self_consistency;
    out.grad = Vec::Zero(p);
    for (int b = 0; b < batch; ++b) out.grad += grads.col(b);
    out.grad /= batch;
    out.diagnostics.resize(n_seg);
    for (int seg = 0; seg < n_seg; ++seg) {
        double s = 0.0;
        for (int b = 0; b < batch; ++b) s += per_seg(b, seg);
        out.diagnostics[seg] = s / batch;
    }
    add_boundary(out, problem, model, theta, terminal, spec.boundary_weight);
    return out;
}

LossValue loss_self_consistency(const PdeProblem& problem, const ModelFamily& model,
                                const Vec& theta, const LossSpec& spec) {
    const GaussianIncrements inc(spec.seed, spec.batch, spec.grid.n_steps(), problem.noise_dim());
    return loss_self_consistency(problem, model, theta, spec, inc);
}

LossValue loss_em_onestep(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                          const LossSpec& spec) {
    if (spec.skip != 1) throw PreconditionError("loss_em_onestep: skip length must be 1");
    LossSpec s = spec;
    s.kind = LossKind::EM;
    return loss_self_consistency(problem, model, theta, s);
}

LossValue loss_heun_onestep(const PdeProblem& problem, const ModelFamily& model,
                            const Vec& theta, const LossSpec& spec) {
    if (spec.skip != 1) throw PreconditionError("loss_heun_onestep: skip length must be 1");
    LossSpec s = spec;
    s.kind = LossKind::Heun;
    return loss_self_consistency(problem, model, theta, s);
}

LossValue loss_multistep(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                         const LossSpec& spec) {
    return loss_self_consistency(problem, model, theta, spec);
}

SpatialNormal fit_spatial_normal(const PdeProblem& problem, const TimeGrid& grid, int n_paths,
                                 std::uint64_t seed) {
    if (n_paths < 1) throw PreconditionError("fit_spatial_normal: n_paths must be positive");
    const int d = problem.dim();
    const GaussianIncrements inc(seed, n_paths, grid.n_steps(), problem.noise_dim());
    std::vector<Mat> paths(n_paths, Mat(d, grid.n_steps() + 1));
    parallel_chunks(n_paths, [&](int begin, int end) {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        SolutionJet scratch;
        for (int b = begin; b < end; ++b) {
            detail::sample_em_path(problem, grid, inc, b, nullptr, nullptr, st, paths[b], scratch);
        }
    });
    // Two-pass moments in path order.
    Vec mean = Vec::Zero(d);
    double count = 0.0;
    for (const Mat& p : paths) {
        mean += p.rowwise().sum();
        count += static_cast<double>(p.cols());
    }
    mean /= count;
    Vec var = Vec::Zero(d);
    for (const Mat& p : paths) var += (p.colwise() - mean).rowwise().squaredNorm();
    var /= (count - 1.0);
    SpatialNormal out{mean, var.cwiseSqrt()};
    for (int i = 0; i < d; ++i) {
        if (!(out.stddev[i] > 0.0) || !std::isfinite(out.stddev[i])) {
            throw NumericalDomainError("covariance", "fit_spatial_normal: degenerate spread in coordinate " +
                                                         std::to_string(i));
        }
    }
    return out;
}

LossValue loss_pinns(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                     const LossSpec& spec, const SpatialNormal* fit) {
    spec.validate();
    const TimeGrid& grid = spec.grid;
    const int n = grid.n_steps();
    const int batch = spec.batch;
    const int d = problem.dim();
    const int p = model.param_dim();
    const bool along_paths =
        spec.kind == LossKind::FSPINNs ||
        (spec.kind == LossKind::PINNs && spec.sampling == PinnsSampling::ForwardSde);
    if (spec.kind != LossKind::PINNs && spec.kind != LossKind::FSPINNs) {
        throw PreconditionError("loss_pinns: kind must be pinns or fs_pinns");
    }
    std::optional<SpatialNormal> own_fit;
    if (!along_paths && fit == nullptr) {
        own_fit = fit_spatial_normal(problem, grid, spec.fit_paths, mix_seed(spec.seed, 0x5eedf17ULL));
        fit = &*own_fit;
    }

    // Per path b: N collocation points and one terminal sample.
    std::vector<double> per_path(batch, 0.0);
    Mat per_knot(batch, n);
    Mat grads(p, batch);
    Mat terminal(d, batch);
    std::optional<GaussianIncrements> inc;
    if (along_paths) inc.emplace(spec.seed, batch, n, problem.noise_dim());

    parallel_chunks(batch, [&](int begin, int end) {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        SolutionJet scratch;
        Mat path(d, n + 1);
        Vec times(n), g(p);
        for (int b = begin; b < end; ++b) {
            g.setZero();
            double acc = 0.0;
            if (along_paths) {
                detail::sample_em_path(problem, grid, *inc, b, &model, &theta, st, path, scratch);
                terminal.col(b) = path.col(n);
            } else {
                StreamRng rng(spec.seed, static_cast<std::uint64_t>(b));
                std::normal_distribution<double> normal;
                std::uniform_real_distribution<double> uniform(grid.t_start(), grid.t_end());
                for (int k = 0; k <= n; ++k) {
                    for (int i = 0; i < d; ++i) path(i, k) = fit->mean[i] + fit->stddev[i] * normal(rng);
                    // Column n is the terminal sample and has no time.
                    if (k < n) times[k] = uniform(rng);
                }
                terminal.col(b) = path.col(n);
            }
            for (int k = 0; k < n; ++k) {
                const double t = along_paths ? grid.knot(k) : times[k];
                const ResidualValue r = residual_with_gradient(problem, model, theta, path.col(k), t);
                per_knot(b, k) = r.value * r.value;
                acc += per_knot(b, k);
                g += (2.0 * r.value) * r.grad;
            }
            per_path[b] = acc / n;
            grads.col(b) = g / n;
        }
    });

    LossValue out;
    finish_mean(per_path, out.self_consistency, out.std_error);
    out.value = out.self_consistency;
    out.grad = Vec::Zero(p);
    for (int b = 0; b < batch; ++b) out.grad += grads.col(b);
    out.grad /= batch;
    if (along_paths) {
        out.diagnostics.resize(n);
        for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int b = 0; b < batch; ++b) s += per_knot(b, k);
            out.diagnostics[k] = s / batch;
        }
    }
    add_boundary(out, problem, model, theta, terminal, spec.boundary_weight);
    return out;
}

LossValue boundary_penalty(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                           const Mat& terminal_samples) {
    const int n = static_cast<int>(terminal_samples.cols());
    if (n == 0) throw PreconditionError("boundary_penalty: empty sample set");
    const int d = problem.dim();
    if (terminal_samples.rows() != d) throw PreconditionError("boundary_penalty: sample dimension mismatch");
    const int p = model.param_dim();
    const double t_end = problem.horizon();

    std::vector<double> per(n);
    Mat grads(p, n);
    parallel_chunks(n, [&](int begin, int end) {
        ModelJet jet;
        ModelParamJet pj;
        prepare_jet(model, jet, &pj);
        EvalOptions opts;
        opts.hessian = false;
        Vec phi_grad(d), diff(d);
        for (int i = begin; i < end; ++i) {
            const auto x = terminal_samples.col(i);
            model.evaluate(theta, x, t_end, jet, &pj, opts);
            const double e0 = jet.value - problem.terminal(x);
            problem.terminal_grad(x, phi_grad);
            diff = jet.grad - phi_grad;
            per[i] = e0 * e0 + diff.squaredNorm();
            grads.col(i).noalias() = 2.0 * e0 * pj.value;
            grads.col(i).noalias() += 2.0 * (pj.grad.transpose() * diff);
        }
    });
    LossValue out;
    finish_mean(per, out.value, out.std_error);
    out.boundary = out.value;
    out.grad = grads.rowwise().sum() / n;
    return out;
}

BiasEstimate bias_oracle(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                         const TimeGrid& grid, int n_paths, std::uint64_t seed) {
    if (problem.coupled()) throw PreconditionError("bias_oracle: problem must be uncoupled");
    if (n_paths < 1) throw PreconditionError("bias_oracle: n_paths must be positive");
    const int d = problem.dim();
    const int n = grid.n_steps();
    const GaussianIncrements inc(seed, n_paths, n, problem.noise_dim());
    std::vector<double> per(n_paths);
    parallel_chunks(n_paths, [&](int begin, int end) {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        ModelJet jet;
        prepare_jet(model, jet, nullptr);
        Mat g(d, problem.noise_dim()), h(d, d), a(d, d);
        for (int b = begin; b < end; ++b) {
            st.x = problem.initial_state();
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                const double t = grid.knot(k);
                model.evaluate(theta, st.x, t, jet);
                problem.diffusion(st.x, t, 0.0, g);
                h.noalias() = g * g.transpose();
                a.noalias() = h * jet.hess;
                acc += 0.5 * a.cwiseProduct(a.transpose()).sum();
                st.em_forward_step(t, grid.tau(), inc.at(b, k));
                st.require_finite(k);
            }
            per[b] = acc / n;
        }
    });
    BiasEstimate out{};
    finish_mean(per, out.value, out.std_error);
    return out;
}

Objective::Objective(ProblemPtr problem, ModelPtr model, LossSpec spec)
    : problem_(std::move(problem)), model_(std::move(model)), spec_(spec) {
    spec_.validate();
    if (model_->dim() != problem_->dim()) throw PreconditionError("objective: model/problem dimension mismatch");
    if (spec_.kind == LossKind::PINNs && spec_.sampling == PinnsSampling::FittedNormal) {
        fit_ = fit_spatial_normal(*problem_, spec_.grid, spec_.fit_paths,
                                  mix_seed(spec_.seed, 0x5eedf17ULL));
    }
}

LossValue Objective::operator()(const Vec& theta, std::uint64_t seed) const {
    LossSpec s = spec_;
    s.seed = seed;
    switch (s.kind) {
        case LossKind::EM:
        case LossKind::Heun: return loss_self_consistency(*problem_, *model_, theta, s);
        case LossKind::PINNs:
        case LossKind::FSPINNs: return loss_pinns(*problem_, *model_, theta, s, fit_ ? &*fit_ : nullptr);
    }
    throw PreconditionError("objective: unknown loss kind");
}

}  // namespace bsde
