#pragma once

#include "bsdekit/model.hpp"
#include "bsdekit/problem.hpp"
#include "bsdekit/random.hpp"
#include "bsdekit/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bsde {

/// Simulated discrete paths (X_k, Y_k), k = 0..N.
struct TrajectoryBatch {
    TimeGrid grid;
    Scheme scheme = Scheme::EulerMaruyama;
    ResetPolicy reset = ResetPolicy::Reset;
    /// states[b] is d x (N + 1).
    std::vector<Mat> states;
    /// B x (N + 1); empty for forward-only simulations.
    Mat values;
    IncrementsPtr increments;

    int batch() const { return static_cast<int>(states.size()); }
    bool has_values() const { return values.size() > 0; }
};

/// Euler-Maruyama forward recursion X_{k+1} = X_k + f tau + sqrt(tau) g w_k.
/// Rejects coupled problems. Throws BlowUpError on a non-finite state.
TrajectoryBatch em_forward(const PdeProblem& problem, const TimeGrid& grid, IncrementsPtr increments);

/// Stochastic Heun forward recursion for an uncoupled problem (converges to
/// the Stratonovich solution).
TrajectoryBatch heun_forward(const PdeProblem& problem, const TimeGrid& grid, IncrementsPtr increments);

/// Joint Euler-Maruyama integration of the forward and backward SDEs from
/// Y_0 = u_theta(x0, t_0). With ResetPolicy::Reset the nonlinearity reads
/// y = u_theta(X_k, t_k); with NoReset it reads the propagated Y_k. Coupled
/// problems use the propagated Y_k in the forward diffusion.
TrajectoryBatch em_backward(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                            const TimeGrid& grid, IncrementsPtr increments, ResetPolicy policy);

/// Stochastic Heun integration of the augmented state Z = (X, Y) with
/// drift (f, h_theta - 1/2 Tr(H grad^2 u_theta)) and diffusion
/// (g, grad u_theta^T g), predictor then trapezoidal corrector.
TrajectoryBatch heun_augmented(const PdeProblem& problem, const ModelFamily& model,
                               const Vec& theta, const TimeGrid& grid, IncrementsPtr increments);

/// Convenience: forward paths under either scheme. For coupled problems a
/// model and theta must be supplied; Y then follows the joint scheme.
TrajectoryBatch simulate_forward(const PdeProblem& problem, Scheme scheme, const TimeGrid& grid,
                                 IncrementsPtr increments, const ModelFamily* model = nullptr,
                                 const Vec* theta = nullptr);

/// (E[max_k |X_k - X_ref(t_k)|^2])^{1/2} between a coarse simulation and a
/// reference on the grid refined by `refinement`, both driven by the same
/// Brownian path. `fine_increments` must have refinement * N steps and
/// `coarse_increments` must equal fine_increments.coarsened(refinement).
double strong_error(const PdeProblem& problem, Scheme scheme, const TimeGrid& coarse_grid,
                    int refinement, const GaussianIncrements& coarse_increments,
                    const GaussianIncrements& fine_increments, const ModelFamily* model = nullptr,
                    const Vec* theta = nullptr);

/// Same, drawing n_paths fine increments from `seed`. refinement must be a
/// positive power of two.
double strong_error(const PdeProblem& problem, Scheme scheme, const TimeGrid& coarse_grid,
                    int refinement, int n_paths, std::uint64_t seed,
                    const ModelFamily* model = nullptr, const Vec* theta = nullptr);

}  // namespace bsde
