#pragma once

#include "bsdekit/losses.hpp"
#include "bsdekit/model.hpp"
#include "bsdekit/optimizer.hpp"
#include "bsdekit/pde_suite.hpp"
#include "bsdekit/problem.hpp"
#include "bsdekit/report.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace bsde {

/// Reference solution u(x, t) used for RL2 when no closed form exists.
using ReferenceFn = std::function<double(CVecRef x, double t)>;

/// Monte-Carlo reference for the HJB problem with n_mc samples per point.
ReferenceFn hjb_reference_fn(std::shared_ptr<const HjbProblem> problem, std::int64_t n_mc,
                             std::uint64_t seed);

/// One-step defect statistics at a fixed start point (x, t).
struct OneStepEstimate {
    /// Mean of (u(X_1, t + tau) - u(x, t) - (Y_1 - Y_0))^2 / tau^2.
    double normalized_loss;
    double std_error;
};

/// tau^-2-normalized one-step loss from (x, t) under `scheme` with Y_0 =
/// u_theta(x, t), over n_mc draws of w from `seed` (shared across tau).
OneStepEstimate one_step_normalized_loss(const PdeProblem& problem, const ModelFamily& model,
                                         const Vec& theta, Scheme scheme, CVecRef x, double t,
                                         double tau, std::int64_t n_mc, std::uint64_t seed);

/// Rows (scheme, tau, normalized_loss, std_error, residual_sq, bias_term,
/// em_limit) for each tau. residual_sq = R^2 and bias_term =
/// 1/2 Tr[(H grad^2 u)^2] at the start point; em_limit is their sum.
/// The start point defaults to (x0, 0).
SweepReport tau_scaling_study(const PdeProblem& problem, const ModelFamily& model,
                              const Vec& theta, Scheme scheme, const std::vector<double>& taus,
                              std::int64_t n_mc, std::uint64_t seed,
                              std::optional<Vec> x = std::nullopt, double t = 0.0);

struct LandscapeOptions {
    std::vector<double> theta_grid;  ///< defaults to 101 points on [0.5, 1.5]
    std::vector<double> em_taus{1e-1, 1e-2, 1e-3};
    std::vector<double> heun_taus{5e-1, 1e-1, 5e-2};
    int batch = 1000;
    std::uint64_t seed = 0;

    static std::vector<double> default_grid();
};

/// Full-horizon one-step loss of u_theta = theta * u* (boundary weight 0)
/// for every (scheme, tau, theta), all thetas sharing the same increments.
/// Rows (scheme, tau, theta, loss, std_error); metadata records the argmin
/// per (scheme, tau).
SweepReport landscape_sweep(ProblemPtr problem, const LandscapeOptions& options);

/// argmin over theta for rows of one (scheme, tau); returns the grid index.
std::size_t landscape_argmin(const SweepReport& report, Scheme scheme, double tau);

struct Rl2Result {
    double overall;
    std::vector<double> per_step;
};

struct Rl2Options {
    int n_paths = 5;
    std::uint64_t seed = 0xe7a1ULL;
    bool include_terminal = false;
};

/// RL2 of u_theta against the reference along n_paths EM forward paths,
/// pooled over knots 0..N-1 (0..N with include_terminal) and per knot.
/// Coupled problems drive the paths with the exact solution. Throws
/// ConfigError without a closed form or `reference`.
Rl2Result evaluate_rl2(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                       const TimeGrid& grid, const Rl2Options& options = {},
                       const ReferenceFn& reference = {});

/// Everything needed to train and score one configuration.
struct TrainSetup {
    LossSpec loss;
    AdamConfig adam;
    Rl2Options eval;
};

struct TrainOutcome {
    TrainingTrace trace;
    double rl2 = 0.0;
    /// Empty on success.
    std::string failure;
};

/// Trains from initial_parameters(P, seed) with loss and optimizer seeds
/// derived from `seed`, then scores the final theta on the loss grid.
TrainOutcome train_and_evaluate(ProblemPtr problem, ModelPtr model, const TrainSetup& setup,
                                std::uint64_t seed, const ReferenceFn& reference = {});

/// Trains a fresh model per (k, N, seed) and records the final RL2. Rows
/// (skip, n_steps, seed, rl2, final_loss, status); failed runs keep an
/// empty rl2 and the failure reason in status. Total training time goes to
/// the "wall_seconds" metadata so the table itself is reproducible. Throws
/// PreconditionError when some k exceeds some N.
SweepReport skip_sweep(ProblemPtr problem, ModelPtr model, const TrainSetup& base,
                       const std::vector<int>& skips, const std::vector<int>& n_steps,
                       const std::vector<std::uint64_t>& seeds, const ReferenceFn& reference = {});

/// Full-horizon Heun defect against the path-integrated residual on the same
/// paths.
struct IdentityCheck {
    /// mean of (defect / T)^2
    double lhs;
    double lhs_se;
    /// mean of ((1/T) int R dt)^2, trapezoid rule on the knots
    double rhs;
    double rhs_se;
    /// mean of (1/T) int R^2 dt (FS-PINNs target), trapezoid rule
    double fs_pinns;
    double fs_pinns_se;
    /// Standard error of the per-path difference fs_pinns - lhs.
    double jensen_gap_se;
};
IdentityCheck bsde_identity_check(const PdeProblem& problem, const ModelFamily& model,
                                  const Vec& theta, const TimeGrid& grid, int n_paths,
                                  std::uint64_t seed);

/// Strong error of `scheme` on grids N0, 2 N0, ..., 2^(levels-1) N0 against a
/// shared reference with reference_factor times the finest step count.
/// Rows (n_steps, tau, strong_error); metadata "slope" is the least-squares
/// log-log slope of error against tau.
SweepReport strong_convergence_study(const PdeProblem& problem, Scheme scheme, int base_steps,
                                     int levels, int reference_factor, int n_paths,
                                     std::uint64_t seed, const ModelFamily* model = nullptr,
                                     const Vec* theta = nullptr);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace bsde
