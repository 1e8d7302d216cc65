#include "bsdekit/optimizer.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/random.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace bsde {

void AdamConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw PreconditionError("adam: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw PreconditionError("adam: eps must be positive");
    if (schedule.empty()) throw PreconditionError("adam: schedule is empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (!(schedule[i].rate > 0.0)) throw PreconditionError("adam: learning rates must be positive");
        if (schedule[i].until <= 0) throw PreconditionError("adam: thresholds must be positive");
        if (i > 0 && schedule[i].until <= schedule[i - 1].until) {
            throw PreconditionError("adam: schedule thresholds must strictly increase");
        }
    }
    if (total_iters < 0) throw PreconditionError("adam: total_iters must be non-negative");
    if (snapshot_every < 0) throw PreconditionError("adam: snapshot_every must be non-negative");
}

double learning_rate(const AdamConfig& config, std::int64_t iter) {
    for (const LrStage& s : config.schedule) {
        if (iter < s.until) return s.rate;
    }
    return config.schedule.back().rate;
}

Adam::Adam(const AdamConfig& config, int param_dim)
    : beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.eps),
      m_(Vec::Zero(param_dim)),
      v_(Vec::Zero(param_dim)) {}

void Adam::step(Vec& theta, const Vec& grad, double lr) {
    if (grad.size() != m_.size() || theta.size() != m_.size()) {
        throw PreconditionError("adam: gradient length does not match the parameters");
    }
    ++t_;
    beta1_pow_ *= beta1_;
    beta2_pow_ *= beta2_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 / (1.0 - beta1_pow_);
    const double c2 = 1.0 / (1.0 - beta2_pow_);
    theta.array() -= lr * (m_.array() * c1) / ((v_.array() * c2).sqrt() + eps_);
}

Vec initial_parameters(int param_dim, std::uint64_t seed) {
    StreamRng rng(seed, 0x1a17ULL);
    std::normal_distribution<double> normal(0.0, 0.1);
    Vec out(param_dim);
    for (int i = 0; i < param_dim; ++i) out[i] = normal(rng);
    return out;
}

TrainingTrace minimize(const StochasticObjective& objective, Vec theta0, const AdamConfig& config,
                       const SnapshotEvaluator& evaluator) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    TrainingTrace trace;
    trace.loss.reserve(static_cast<std::size_t>(config.total_iters));
    trace.lr.reserve(static_cast<std::size_t>(config.total_iters));
    Adam adam(config, static_cast<int>(theta0.size()));
    Vec theta = std::move(theta0);

    for (std::int64_t it = 0; it < config.total_iters; ++it) {
        std::pair<double, Vec> lg;
        try {
            lg = objective(theta, it);
        } catch (const BlowUpError& e) {
            trace.blew_up = true;
            trace.failed_iter = it;
            trace.failure = e.what();
            break;
        } catch (const NumericalDomainError& e) {
            trace.blew_up = true;
            trace.failed_iter = it;
            trace.failure = e.what();
            break;
        }
        if (!std::isfinite(lg.first) || !lg.second.allFinite()) {
            trace.blew_up = true;
            trace.failed_iter = it;
            trace.failure = "non-finite loss or gradient at iteration " + std::to_string(it);
            break;
        }
        const double lr = learning_rate(config, it);
        trace.loss.push_back(lg.first);
        trace.lr.push_back(lr);
        adam.step(theta, lg.second, lr);
        if (evaluator && config.snapshot_every > 0 && (it + 1) % config.snapshot_every == 0 &&
            it + 1 < config.total_iters) {
            trace.rl2.push_back({it + 1, evaluator(theta)});
        }
    }
    if (evaluator && !trace.blew_up) {
        trace.rl2.push_back({static_cast<std::int64_t>(trace.loss.size()), evaluator(theta)});
    }
    trace.final_theta = std::move(theta);
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return trace;
}

TrainingTrace train(const Objective& objective, Vec theta0, const AdamConfig& config,
                    const SnapshotEvaluator& evaluator) {
    if (theta0.size() != objective.model().param_dim()) {
        throw PreconditionError("train: theta0 has wrong length");
    }
    const std::uint64_t seed = config.seed;
    return minimize(
        [&](const Vec& theta, std::int64_t it) {
            LossValue v = objective(theta, mix_seed(seed, static_cast<std::uint64_t>(it)));
            return std::pair<double, Vec>{v.value, std::move(v.grad)};
        },
        std::move(theta0), config, evaluator);
}

TrainingTrace train(ProblemPtr problem, ModelPtr model, Vec theta0, const LossSpec& spec,
                    const AdamConfig& config, const SnapshotEvaluator& evaluator) {
    const Objective objective(std::move(problem), std::move(model), spec);
    return train(objective, std::move(theta0), config, evaluator);
}

}  // namespace bsde
