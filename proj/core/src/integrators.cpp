#include "bsdekit/integrators.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/parallel.hpp"
#include "stepping.hpp"

#include <cmath>

namespace bsde {

namespace {

void check_increments(const PdeProblem& problem, const TimeGrid& grid, const GaussianIncrements& inc) {
    if (inc.steps() != grid.n_steps()) {
        throw PreconditionError("increments have " + std::to_string(inc.steps()) +
                                " steps, grid has " + std::to_string(grid.n_steps()));
    }
    if (inc.channels() != problem.noise_dim()) {
        throw PreconditionError("increments channel count does not match the problem noise dimension");
    }
}

TrajectoryBatch make_batch(const PdeProblem& problem, const TimeGrid& grid, IncrementsPtr inc,
                           Scheme scheme, ResetPolicy policy, bool with_values) {
    TrajectoryBatch out{grid, scheme, policy, {}, {}, inc};
    out.states.assign(inc->batch(), Mat(problem.dim(), grid.n_steps() + 1));
    if (with_values) out.values.resize(inc->batch(), grid.n_steps() + 1);
    return out;
}

}  // namespace

TrajectoryBatch em_forward(const PdeProblem& problem, const TimeGrid& grid, IncrementsPtr increments) {
    if (problem.coupled()) {
        throw PreconditionError("em_forward: problem '" + problem.name() +
                                "' is coupled; use em_backward for joint integration");
    }
    check_increments(problem, grid, *increments);
    TrajectoryBatch out = make_batch(problem, grid, increments, Scheme::EulerMaruyama,
                                     ResetPolicy::Reset, false);
    const Vec x0 = problem.initial_state();
    parallel_for(increments->batch(), [&](int b) {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        st.x = x0;
        Mat& path = out.states[b];
        path.col(0) = st.x;
        for (int k = 0; k < grid.n_steps(); ++k) {
            st.em_forward_step(grid.knot(k), grid.tau(), increments->at(b, k));
            st.require_finite(k);
            path.col(k + 1) = st.x;
        }
    });
    return out;
}

TrajectoryBatch heun_forward(const PdeProblem& problem, const TimeGrid& grid, IncrementsPtr increments) {
    if (problem.coupled()) {
        throw PreconditionError("heun_forward: coupled problems need heun_augmented");
    }
    check_increments(problem, grid, *increments);
    TrajectoryBatch out =
        make_batch(problem, grid, increments, Scheme::Heun, ResetPolicy::Reset, false);
    const Vec x0 = problem.initial_state();
    parallel_for(increments->batch(), [&](int b) {
        detail::PathStepper st(problem, nullptr, nullptr, false);
        st.x = x0;
        Mat& path = out.states[b];
        path.col(0) = st.x;
        for (int k = 0; k < grid.n_steps(); ++k) {
            st.heun_forward_step(grid.knot(k), grid.tau(), increments->at(b, k));
            st.require_finite(k);
            path.col(k + 1) = st.x;
        }
    });
    return out;
}

TrajectoryBatch em_backward(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                            const TimeGrid& grid, IncrementsPtr increments, ResetPolicy policy) {
    check_increments(problem, grid, *increments);
    TrajectoryBatch out =
        make_batch(problem, grid, increments, Scheme::EulerMaruyama, policy, true);
    const Vec x0 = problem.initial_state();
    const bool h_reads_model = policy == ResetPolicy::Reset;
    parallel_for(increments->batch(), [&](int b) {
        detail::PathStepper st(problem, &model, &theta, false);
        st.x = x0;
        st.evaluate_current(grid.knot(0));
        st.reset_backward();
        Mat& path = out.states[b];
        path.col(0) = st.x;
        out.values(b, 0) = st.y;
        for (int k = 0; k < grid.n_steps(); ++k) {
            if (k > 0) st.evaluate_current(grid.knot(k));
            st.em_joint_step(grid.knot(k), grid.tau(), increments->at(b, k), h_reads_model);
            st.require_finite(k);
            path.col(k + 1) = st.x;
            out.values(b, k + 1) = st.y;
        }
    });
    return out;
}

TrajectoryBatch heun_augmented(const PdeProblem& problem, const ModelFamily& model,
                               const Vec& theta, const TimeGrid& grid, IncrementsPtr increments) {
    check_increments(problem, grid, *increments);
    TrajectoryBatch out =
        make_batch(problem, grid, increments, Scheme::Heun, ResetPolicy::NoReset, true);
    const Vec x0 = problem.initial_state();
    parallel_for(increments->batch(), [&](int b) {
        detail::PathStepper st(problem, &model, &theta, false);
        st.x = x0;
        st.evaluate_current(grid.knot(0));
        st.reset_backward();
        Mat& path = out.states[b];
        path.col(0) = st.x;
        out.values(b, 0) = st.y;
        for (int k = 0; k < grid.n_steps(); ++k) {
            if (k > 0) st.evaluate_current(grid.knot(k));
            st.heun_joint_step(grid.knot(k), grid.tau(), increments->at(b, k));
            st.require_finite(k);
            path.col(k + 1) = st.x;
            out.values(b, k + 1) = st.y;
        }
    });
    return out;
}

TrajectoryBatch simulate_forward(const PdeProblem& problem, Scheme scheme, const TimeGrid& grid,
                                 IncrementsPtr increments, const ModelFamily* model,
                                 const Vec* theta) {
    if (!problem.coupled()) {
        return scheme == Scheme::EulerMaruyama ? em_forward(problem, grid, std::move(increments))
                                               : heun_forward(problem, grid, std::move(increments));
    }
    if (model == nullptr || theta == nullptr) {
        throw PreconditionError("simulate_forward: coupled problem '" + problem.name() +
                                "' needs a model for its backward value");
    }
    return scheme == Scheme::EulerMaruyama
               ? em_backward(problem, *model, *theta, grid, std::move(increments), ResetPolicy::Reset)
               : heun_augmented(problem, *model, *theta, grid, std::move(increments));
}

double strong_error(const PdeProblem& problem, Scheme scheme, const TimeGrid& coarse_grid,
                    int refinement, const GaussianIncrements& coarse_increments,
                    const GaussianIncrements& fine_increments, const ModelFamily* model,
                    const Vec* theta) {
    if (refinement < 1) throw PreconditionError("strong_error: refinement must be positive");
    if (fine_increments.steps() != coarse_grid.n_steps() * refinement) {
        throw PreconditionError("strong_error: fine increments do not match the refined grid");
    }
    const GaussianIncrements expected = fine_increments.coarsened(refinement);
    if (coarse_increments.batch() != expected.batch() ||
        coarse_increments.steps() != expected.steps() ||
        coarse_increments.channels() != expected.channels()) {
        throw PreconditionError("strong_error: coarse and fine increments have different shapes");
    }
    for (int b = 0; b < expected.batch(); ++b) {
        const auto want = expected.path(b);
        const auto got = coarse_increments.path(b);
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (std::abs(want[i] - got[i]) > 1e-12 * (1.0 + std::abs(want[i]))) {
                throw PreconditionError(
                    "strong_error: coarse increments are not sums of the fine increments");
            }
        }
    }
    const TimeGrid fine_grid = coarse_grid.refined(refinement);
    auto coarse_ptr = std::make_shared<const GaussianIncrements>(coarse_increments);
    auto fine_ptr = std::make_shared<const GaussianIncrements>(fine_increments);
    const TrajectoryBatch coarse =
        simulate_forward(problem, scheme, coarse_grid, coarse_ptr, model, theta);
    const TrajectoryBatch fine = simulate_forward(problem, scheme, fine_grid, fine_ptr, model, theta);

    double acc = 0.0;
    for (int b = 0; b < coarse.batch(); ++b) {
        double worst = 0.0;
        for (int k = 0; k <= coarse_grid.n_steps(); ++k) {
            const double e = (coarse.states[b].col(k) - fine.states[b].col(k * refinement)).squaredNorm();
            worst = std::max(worst, e);
        }
        acc += worst;
    }
    return std::sqrt(acc / static_cast<double>(coarse.batch()));
}

double strong_error(const PdeProblem& problem, Scheme scheme, const TimeGrid& coarse_grid,
                    int refinement, int n_paths, std::uint64_t seed, const ModelFamily* model,
                    const Vec* theta) {
    if (refinement < 1 || (refinement & (refinement - 1)) != 0) {
        throw PreconditionError("strong_error: refinement must be a positive power of two");
    }
    const GaussianIncrements fine(seed, n_paths, coarse_grid.n_steps() * refinement,
                                  problem.noise_dim());
    const GaussianIncrements coarse = fine.coarsened(refinement);
    return strong_error(problem, scheme, coarse_grid, refinement, coarse, fine, model, theta);
}

}  // namespace bsde
