#pragma once

#include "bsdekit/losses.hpp"
#include "bsdekit/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bsde {

/// Piecewise-constant schedule entry: `rate` applies to every iteration
/// below `until` (and at or above the previous entry's `until`).
struct LrStage {
    std::int64_t until;
    double rate;
    bool operator==(const LrStage&) const = default;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<LrStage> schedule{{10000, 1e-3}, {15000, 1e-4}, {20000, 1e-5}};
    std::int64_t total_iters = 20000;
    std::uint64_t seed = 0;
    /// RL2 snapshot period in iterations (0 disables periodic snapshots;
    /// the final snapshot is always taken when an evaluator is supplied).
    std::int64_t snapshot_every = 1000;

    /// Throws PreconditionError unless thresholds strictly increase, rates
    /// are positive and the betas lie in [0, 1).
    void validate() const;
};

/// Learning rate at iteration `iter` (0-based). Past the last threshold the
/// last rate stays in force.
double learning_rate(const AdamConfig& config, std::int64_t iter);

/// Adam with bias correction.
class Adam {
public:
    Adam(const AdamConfig& config, int param_dim);

    /// One update at 0-based iteration `iter` with step size `lr`.
    void step(Vec& theta, const Vec& grad, double lr);
    std::int64_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    Vec m_, v_;
    std::int64_t t_ = 0;
    double beta1_pow_ = 1.0;
    double beta2_pow_ = 1.0;
};

/// i.i.d. N(0, 0.1^2) entries drawn from `seed`.
Vec initial_parameters(int param_dim, std::uint64_t seed);

struct Rl2Snapshot {
    std::int64_t iter;
    double rl2;
};

struct TrainingTrace {
    std::vector<double> loss;
    std::vector<double> lr;
    std::vector<Rl2Snapshot> rl2;
    Vec final_theta;
    double wall_seconds = 0.0;
    /// Set when a trajectory or loss went non-finite; the trace stops at the
    /// last completed iteration.
    bool blew_up = false;
    std::int64_t failed_iter = -1;
    std::string failure;
};

/// Value and gradient of a stochastic objective at iteration `iter`.
using StochasticObjective = std::function<std::pair<double, Vec>(const Vec& theta, std::int64_t iter)>;
/// RL2 (or any scalar score) of a parameter vector.
using SnapshotEvaluator = std::function<double(const Vec& theta)>;

/// Runs Adam on `objective` under `config`.
TrainingTrace minimize(const StochasticObjective& objective, Vec theta0, const AdamConfig& config,
                       const SnapshotEvaluator& evaluator = {});

/// Trains with fresh increments each iteration, drawn from
/// mix_seed(config.seed, iter).
TrainingTrace train(const Objective& objective, Vec theta0, const AdamConfig& config,
                    const SnapshotEvaluator& evaluator = {});

TrainingTrace train(ProblemPtr problem, ModelPtr model, Vec theta0, const LossSpec& spec,
                    const AdamConfig& config, const SnapshotEvaluator& evaluator = {});

}  // namespace bsde
