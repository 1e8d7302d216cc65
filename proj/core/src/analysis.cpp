#include "bsdekit/analysis.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/integrators.hpp"
#include "bsdekit/metrics.hpp"
#include "bsdekit/parallel.hpp"
#include "bsdekit/random.hpp"
#include "stepping.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bsde {

namespace {

struct MeanSe {
    double mean;
    double se;
};

MeanSe mean_se(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += x;
    const double mean = s / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

int steps_for(double horizon, double tau) {
    const double raw = horizon / tau;
    const auto n = static_cast<int>(std::llround(raw));
    if (n < 1 || std::abs(raw - n) > 1e-9 * raw) {
        throw PreconditionError("tau " + format_double(tau) + " does not divide the horizon");
    }
    return n;
}

}  // namespace

ReferenceFn hjb_reference_fn(std::shared_ptr<const HjbProblem> problem, std::int64_t n_mc,
                             std::uint64_t seed) {
    return [problem = std::move(problem), n_mc, seed](CVecRef x, double t) {
        return hjb_reference(*problem, x, t, n_mc, seed).value;
    };
}

OneStepEstimate one_step_normalized_loss(const PdeProblem& problem, const ModelFamily& model,
                                         const Vec& theta, Scheme scheme, CVecRef x, double t,
                                         double tau, std::int64_t n_mc, std::uint64_t seed) {
    if (n_mc < 1) throw PreconditionError("one_step_normalized_loss: n_mc must be positive");
    if (!(tau > 0.0)) throw PreconditionError("one_step_normalized_loss: tau must be positive");
    const int m = problem.noise_dim();
    const Vec start = x;
    std::vector<double> per(static_cast<std::size_t>(n_mc));
    constexpr std::int64_t kChunk = 4096;
    const int n_chunks = static_cast<int>((n_mc + kChunk - 1) / kChunk);
    parallel_chunks(n_chunks, [&](int c0, int c1) {
        detail::PathStepper st(problem, &model, &theta, false);
        std::vector<double> w(m);
        const Eigen::Map<const Vec> wmap(w.data(), m);
        for (int c = c0; c < c1; ++c) {
            const std::int64_t i1 = std::min<std::int64_t>(n_mc, (c + 1) * kChunk);
            for (std::int64_t i = c * kChunk; i < i1; ++i) {
                fill_standard_normal(seed, static_cast<std::uint64_t>(i), w);
                st.x = start;
                st.evaluate_current(t);
                st.reset_backward();
                const double u0 = st.cur.jet.value;
                const double incr = scheme == Scheme::Heun ? st.heun_joint_step(t, tau, wmap)
                                                           : st.em_joint_step(t, tau, wmap, true);
                st.require_finite(0);
                st.evaluate_current(t + tau);
                const double defect = st.cur.jet.value - u0 - incr;
                per[static_cast<std::size_t>(i)] = defect * defect / (tau * tau);
            }
        }
    });
    const MeanSe ms = mean_se(per);
    return {ms.mean, ms.se};
}

SweepReport tau_scaling_study(const PdeProblem& problem, const ModelFamily& model,
                              const Vec& theta, Scheme scheme, const std::vector<double>& taus,
                              std::int64_t n_mc, std::uint64_t seed, std::optional<Vec> x,
                              double t) {
    const Vec start = x ? *x : problem.initial_state();
    const int d = problem.dim();

    // Analytic targets at the start point.
    const double r = residual(problem, model, theta, start, t);
    ModelJet jet;
    model.evaluate(theta, start, t, jet);
    Mat g(d, problem.noise_dim());
    problem.diffusion(start, t, jet.value, g);
    const Mat a = (g * g.transpose()) * jet.hess;
    const double bias = 0.5 * a.cwiseProduct(a.transpose()).sum();

    SweepReport rep("tau", {"scheme", "tau", "normalized_loss", "std_error", "residual_sq",
                            "bias_term", "em_limit"});
    for (double tau : taus) {
        const OneStepEstimate e =
            one_step_normalized_loss(problem, model, theta, scheme, start, t, tau, n_mc, seed);
        rep.add_row({std::string(to_string(scheme)), tau, e.normalized_loss, e.std_error, r * r,
                     bias, r * r + bias});
    }
    rep.set_meta("problem", problem.name());
    rep.set_meta("model", model.name());
    rep.set_meta("scheme", to_string(scheme));
    rep.set_meta("n_mc", std::to_string(n_mc));
    rep.set_meta("seed", std::to_string(seed));
    rep.set_meta("t", format_double(t));
    return rep;
}

std::vector<double> LandscapeOptions::default_grid() {
    std::vector<double> g(101);
    for (int i = 0; i <= 100; ++i) g[i] = 0.5 + 0.01 * i;
    return g;
}

SweepReport landscape_sweep(ProblemPtr problem, const LandscapeOptions& options) {
    if (!problem->has_exact_solution()) {
        throw PreconditionError("landscape_sweep: problem needs a closed-form solution");
    }
    const std::vector<double> grid_theta =
        options.theta_grid.empty() ? LandscapeOptions::default_grid() : options.theta_grid;
    const ScaledExact model(problem);
    SweepReport rep("theta", {"scheme", "tau", "theta", "loss", "std_error"});

    auto run = [&](Scheme scheme, double tau) {
        const int n = steps_for(problem->horizon(), tau);
        LossSpec spec;
        spec.kind = scheme == Scheme::Heun ? LossKind::Heun : LossKind::EM;
        spec.grid = TimeGrid::over(problem->horizon(), n);
        spec.batch = options.batch;
        spec.boundary_weight = 0.0;
        spec.seed = options.seed;
        const GaussianIncrements inc(options.seed, options.batch, n, problem->noise_dim());
        double best = std::numeric_limits<double>::infinity();
        double best_theta = grid_theta.front();
        for (double th : grid_theta) {
            const Vec theta = Vec::Constant(1, th);
            const LossValue v = loss_self_consistency(*problem, model, theta, spec, inc);
            rep.add_row({std::string(to_string(scheme)), tau, th, v.value, v.std_error});
            if (v.value < best) {
                best = v.value;
                best_theta = th;
            }
        }
        rep.set_meta(std::string("argmin_") + to_string(scheme) + "_" + format_double(tau),
                     format_double(best_theta));
    };
    for (double tau : options.em_taus) run(Scheme::EulerMaruyama, tau);
    for (double tau : options.heun_taus) run(Scheme::Heun, tau);
    rep.set_meta("problem", problem->name());
    rep.set_meta("model", model.name());
    rep.set_meta("batch", std::to_string(options.batch));
    rep.set_meta("seed", std::to_string(options.seed));
    return rep;
}

std::size_t landscape_argmin(const SweepReport& report, Scheme scheme, double tau) {
    const std::size_t cs = report.column_index("scheme");
    const std::size_t ct = report.column_index("tau");
    const std::size_t cl = report.column_index("loss");
    const std::string name = to_string(scheme);
    std::size_t idx = 0;
    std::size_t best_idx = 0;
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const auto& row : report.rows()) {
        if (std::get<std::string>(row[cs]) != name || std::get<double>(row[ct]) != tau) continue;
        const double v = std::get<double>(row[cl]);
        if (v < best) {
            best = v;
            best_idx = idx;
        }
        found = true;
        ++idx;
    }
    if (!found) throw PreconditionError("landscape_argmin: no rows for the requested scheme/tau");
    return best_idx;
}

Rl2Result evaluate_rl2(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                       const TimeGrid& grid, const Rl2Options& options,
                       const ReferenceFn& reference) {
    if (!problem.has_exact_solution() && !reference) {
        throw ConfigError("evaluate_rl2: problem '" + problem.name() +
                          "' has no closed form and no reference was supplied");
    }
    if (options.n_paths < 1) throw PreconditionError("evaluate_rl2: n_paths must be positive");
    const int n = grid.n_steps();
    const int knots = options.include_terminal ? n + 1 : n;
    const int d = problem.dim();
    const GaussianIncrements inc(options.seed, options.n_paths, n, problem.noise_dim());

    Mat ref(options.n_paths, knots);
    Mat pred(options.n_paths, knots);
    std::vector<Mat> paths(options.n_paths, Mat(d, n + 1));
    {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        SolutionJet scratch;
        for (int b = 0; b < options.n_paths; ++b) {
            detail::sample_em_path(problem, grid, inc, b, &model, &theta, st, paths[b], scratch);
        }
    }
    // Reference evaluations may be expensive (Monte Carlo); spread them.
    parallel_for(options.n_paths * knots, [&](int idx) {
        const int b = idx / knots;
        const int k = idx % knots;
        const auto x = paths[b].col(k);
        const double t = grid.knot(k);
        if (problem.has_exact_solution()) {
            SolutionJet jet;
            problem.exact_solution(x, t, jet);
            ref(b, k) = jet.value;
        } else {
            ref(b, k) = reference(x, t);
        }
        pred(b, k) = model.value(theta, x, t);
    });

    Rl2Result out;
    std::vector<double> rv, pv;
    for (int b = 0; b < options.n_paths; ++b) {
        for (int k = 0; k < knots; ++k) {
            rv.push_back(ref(b, k));
            pv.push_back(pred(b, k));
        }
    }
    out.overall = rl2(rv, pv);
    out.per_step.resize(knots);
    for (int k = 0; k < knots; ++k) {
        const Vec r = ref.col(k);
        const Vec p = pred.col(k);
        out.per_step[k] = rl2({r.data(), static_cast<std::size_t>(r.size())},
                              {p.data(), static_cast<std::size_t>(p.size())});
    }
    return out;
}

TrainOutcome train_and_evaluate(ProblemPtr problem, ModelPtr model, const TrainSetup& setup,
                                std::uint64_t seed, const ReferenceFn& reference) {
    LossSpec spec = setup.loss;
    spec.seed = seed;
    AdamConfig adam = setup.adam;
    adam.seed = seed;
    const Objective objective(problem, model, spec);
    const Vec theta0 = initial_parameters(model->param_dim(), seed);
    const TimeGrid eval_grid = spec.grid;
    const SnapshotEvaluator evaluator = [&](const Vec& theta) {
        return evaluate_rl2(*problem, *model, theta, eval_grid, setup.eval, reference).overall;
    };

    TrainOutcome out;
    out.trace = train(objective, theta0, adam, evaluator);
    if (out.trace.blew_up) {
        out.failure = out.trace.failure;
        out.rl2 = std::numeric_limits<double>::quiet_NaN();
    } else {
        out.rl2 = out.trace.rl2.back().rl2;
    }
    return out;
}

SweepReport skip_sweep(ProblemPtr problem, ModelPtr model, const TrainSetup& base,
                       const std::vector<int>& skips, const std::vector<int>& n_steps,
                       const std::vector<std::uint64_t>& seeds, const ReferenceFn& reference) {
    for (int n : n_steps) {
        for (int k : skips) {
            if (k < 1 || k > n) {
                throw PreconditionError("skip_sweep: skip length " + std::to_string(k) +
                                        " invalid for N = " + std::to_string(n));
            }
        }
    }
    SweepReport rep("skip", {"skip", "n_steps", "seed", "rl2", "final_loss", "status"});
    double wall = 0.0;
    for (int n : n_steps) {
        for (int k : skips) {
            for (std::uint64_t seed : seeds) {
                TrainSetup setup = base;
                setup.loss.grid = TimeGrid::over(problem->horizon(), n);
                setup.loss.skip = k;
                std::vector<Cell> row{static_cast<std::int64_t>(k), static_cast<std::int64_t>(n),
                                      static_cast<std::int64_t>(seed)};
                try {
                    const TrainOutcome o = train_and_evaluate(problem, model, setup, seed, reference);
                    const double last = o.trace.loss.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                             : o.trace.loss.back();
                    wall += o.trace.wall_seconds;
                    row.insert(row.end(), {o.rl2, last,
                                           o.failure.empty() ? std::string("ok") : "failed: " + o.failure});
                } catch (const Error& e) {
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    row.insert(row.end(), {nan, nan, std::string("failed: ") + e.what()});
                }
                rep.add_row(std::move(row));
            }
        }
    }
    rep.set_meta("problem", problem->name());
    rep.set_meta("model", model->name());
    rep.set_meta("loss", to_string(base.loss.kind));
    rep.set_meta("reset", to_string(base.loss.reset));
    rep.set_meta("batch", std::to_string(base.loss.batch));
    rep.set_meta("iterations", std::to_string(base.adam.total_iters));
    rep.set_meta("wall_seconds", format_double(wall));
    return rep;
}

IdentityCheck bsde_identity_check(const PdeProblem& problem, const ModelFamily& model,
                                  const Vec& theta, const TimeGrid& grid, int n_paths,
                                  std::uint64_t seed) {
    if (n_paths < 2) throw PreconditionError("bsde_identity_check: need at least 2 paths");
    const int n = grid.n_steps();
    const double tau = grid.tau();
    const double horizon = grid.length();
    const GaussianIncrements inc(seed, n_paths, n, problem.noise_dim());
    std::vector<double> lhs(n_paths), rhs(n_paths), fs(n_paths), gap(n_paths);

    parallel_chunks(n_paths, [&](int begin, int end) {
        detail::PathStepper st(problem, &model, &theta, false);
        for (int b = begin; b < end; ++b) {
            st.x = problem.initial_state();
            st.evaluate_current(grid.knot(0));
            st.reset_backward();
            const double u0 = st.cur.jet.value;
            double r_prev = residual(problem, model, theta, st.x, grid.knot(0));
            double int_r = 0.0;
            double int_r2 = 0.0;
            double sum = 0.0;
            for (int k = 0; k < n; ++k) {
                if (k > 0) st.evaluate_current(grid.knot(k));
                sum += st.heun_joint_step(grid.knot(k), tau, inc.at(b, k));
                st.require_finite(k);
                const double r_next = residual(problem, model, theta, st.x, grid.knot(k + 1));
                int_r += 0.5 * (r_prev + r_next) * tau;
                int_r2 += 0.5 * (r_prev * r_prev + r_next * r_next) * tau;
                r_prev = r_next;
            }
            st.evaluate_current(grid.knot(n));
            const double defect = st.cur.jet.value - u0 - sum;
            lhs[b] = (defect / horizon) * (defect / horizon);
            rhs[b] = (int_r / horizon) * (int_r / horizon);
            fs[b] = int_r2 / horizon;
            gap[b] = fs[b] - lhs[b];
        }
    });
    const MeanSe l = mean_se(lhs), r = mean_se(rhs), f = mean_se(fs), g = mean_se(gap);
    return {l.mean, l.se, r.mean, r.se, f.mean, f.se, g.se};
}

SweepReport strong_convergence_study(const PdeProblem& problem, Scheme scheme, int base_steps,
                                     int levels, int reference_factor, int n_paths,
                                     std::uint64_t seed, const ModelFamily* model,
                                     const Vec* theta) {
    if (levels < 2) throw PreconditionError("strong_convergence_study: need at least 2 levels");
    if (base_steps < 1) throw PreconditionError("strong_convergence_study: base_steps must be positive");
    if (reference_factor < 1 || (reference_factor & (reference_factor - 1)) != 0) {
        throw PreconditionError("strong_convergence_study: reference factor must be a power of two");
    }
    const int finest = base_steps << (levels - 1);
    const int ref_steps = finest * reference_factor;
    const GaussianIncrements fine(seed, n_paths, ref_steps, problem.noise_dim());
    SweepReport rep("n_steps", {"n_steps", "tau", "strong_error"});
    std::vector<double> taus, errs;
    for (int l = 0; l < levels; ++l) {
        const int n = base_steps << l;
        const int factor = ref_steps / n;
        const TimeGrid grid = TimeGrid::over(problem.horizon(), n);
        const GaussianIncrements coarse = fine.coarsened(factor);
        const double e = strong_error(problem, scheme, grid, factor, coarse, fine, model, theta);
        rep.add_row({static_cast<std::int64_t>(n), grid.tau(), e});
        taus.push_back(grid.tau());
        errs.push_back(e);
    }
    rep.set_meta("problem", problem.name());
    rep.set_meta("scheme", to_string(scheme));
    rep.set_meta("reference_steps", std::to_string(ref_steps));
    rep.set_meta("n_paths", std::to_string(n_paths));
    rep.set_meta("seed", std::to_string(seed));
    rep.set_meta("slope", format_double(loglog_slope(taus, errs)));
    return rep;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw PreconditionError("loglog_slope: need at least two paired points");
    }
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw NumericalDomainError("log", "loglog_slope: non-positive value");
        }
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace bsde
