#pragma once

#include "bsdekit/losses.hpp"
#include "bsdekit/model.hpp"
#include "bsdekit/problem.hpp"

#include <cstdint>
#include <string>

namespace bsde {

/// Outcome of one numerical self-check: `value` is the worst observed error
/// and the check passes when value <= tolerance.
struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

/// |a - b| / max(|a|, |b|, 1): relative for large magnitudes, absolute near 0.
double mixed_error(double a, double b);

struct ProbeOptions {
    int probes = 100;
    /// Central-difference step.
    double step = 1e-5;
    double tolerance = 1e-6;
    std::uint64_t seed = 0;
    /// Probe points are x0 + spread * N(0, I), t ~ U[0, T].
    double spread = 1.0;
};

/// Spatial gradient, Hessian (and its symmetry), time derivative, metric
/// trace and every theta-derivative against central differences.
CheckResult check_model_derivatives(const PdeProblem& problem, const ModelFamily& model,
                                    const Vec& theta, const ProbeOptions& options);

/// terminal_grad against central differences of terminal.
CheckResult check_terminal_gradient(const PdeProblem& problem, const ProbeOptions& options);

/// H = g g^T symmetric with eigenvalues >= -tolerance * max(1, |H|).
CheckResult check_diffusion_psd(const PdeProblem& problem, const ProbeOptions& options);

/// |R[u*]| at probe points; requires a closed-form solution.
CheckResult check_residual_at_truth(const PdeProblem& problem, const ProbeOptions& options);

/// |R|-gradient and loss gradient checks: for `n_theta` random parameter
/// vectors, |grad - fd| / max(|fd|, |grad|, 1e-12) over the whole vector.
/// Forward paths of coupled problems are treated as constants by the
/// analytic gradient, so trajectory losses are only checked on uncoupled
/// problems (PreconditionError otherwise).
CheckResult check_loss_gradient(const PdeProblem& problem, const ModelFamily& model,
                                const LossSpec& spec, int n_theta, double tolerance,
                                std::uint64_t seed, double step = 1e-5);

}  // namespace bsde
