#pragma once

#include "bsdekit/model.hpp"
#include "bsdekit/problem.hpp"
#include "bsdekit/random.hpp"
#include "bsdekit/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace bsde {

enum class LossKind { EM, Heun, PINNs, FSPINNs };

/// Collocation sampling for the plain PINNs loss.
enum class PinnsSampling {
    FittedNormal,  ///< diagonal Gaussian fitted to pre-simulated forward paths, t ~ U[0, T]
    ForwardSde,    ///< points along freshly simulated EM paths (same as FS-PINNs)
};

const char* to_string(LossKind k);
const char* to_string(PinnsSampling s);

struct LossSpec {
    LossKind kind = LossKind::EM;
    /// EM only; Heun always re-anchors Y at each segment start.
    ResetPolicy reset = ResetPolicy::Reset;
    /// Skip length k for the self-consistency kinds.
    int skip = 1;
    TimeGrid grid = TimeGrid::over(1.0, 50);
    int batch = 64;
    double boundary_weight = 1.0;
    std::uint64_t seed = 0;
    PinnsSampling sampling = PinnsSampling::FittedNormal;
    /// Paths used to fit the PINNs collocation Gaussian.
    int fit_paths = 1000;

    /// Throws PreconditionError on k outside [1, N], B < 1 or negative weight.
    void validate() const;
};

struct LossValue {
    /// Self-consistency (or residual) part plus boundary_weight * boundary.
    double value = 0.0;
    Vec grad;
    /// Self-consistency kinds: mean normalized squared defect per segment.
    /// Residual kinds: mean squared residual per time knot (FS-PINNs only).
    std::vector<double> diagnostics;
    double self_consistency = 0.0;
    double boundary = 0.0;
    /// Standard error of the self-consistency part across paths.
    double std_error = 0.0;
};

/// Skip-k self-consistency loss on EM (spec.reset) or Heun trajectories
/// driven by `increments`. Segments start at 0, k, 2k, ... and end at
/// min(s + k, N); each squared defect is normalized by (t_f - t_s)^2 and
/// the result is averaged over all segments and paths. The boundary penalty
/// is taken at the simulated X_N.
LossValue loss_self_consistency(const PdeProblem& problem, const ModelFamily& model,
                                const Vec& theta, const LossSpec& spec,
                                const GaussianIncrements& increments);

/// Same, drawing increments from spec.seed.
LossValue loss_self_consistency(const PdeProblem& problem, const ModelFamily& model,
                                const Vec& theta, const LossSpec& spec);

/// One-step EM loss (requires spec.skip == 1).
LossValue loss_em_onestep(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                          const LossSpec& spec);
/// One-step Heun loss (requires spec.skip == 1).
LossValue loss_heun_onestep(const PdeProblem& problem, const ModelFamily& model,
                            const Vec& theta, const LossSpec& spec);
/// Skip-k loss for spec.kind in {EM, Heun}.
LossValue loss_multistep(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                         const LossSpec& spec);

/// Diagonal Gaussian over the spatial coordinates of forward paths.
struct SpatialNormal {
    Vec mean;
    Vec stddev;
};

/// Fits a SpatialNormal to n_paths EM paths pooled over all knots. Coupled
/// problems are simulated with Y taken from the exact solution. Throws
/// NumericalDomainError("covariance") when a coordinate has zero spread.
SpatialNormal fit_spatial_normal(const PdeProblem& problem, const TimeGrid& grid, int n_paths,
                                 std::uint64_t seed);

/// Mean squared residual over B * N collocation points plus the boundary
/// penalty. kind PINNs samples per spec.sampling (FittedNormal needs `fit`);
/// kind FSPINNs uses the knots 0..N-1 of B EM paths.
LossValue loss_pinns(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                     const LossSpec& spec, const SpatialNormal* fit = nullptr);

/// Mean over samples (columns) of (u_theta(x, T) - phi(x))^2 + |grad u_theta(x, T) - grad phi(x)|^2.
LossValue boundary_penalty(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                           const Mat& terminal_samples);

/// Time average of 1/2 Tr[(H hess u_theta)^2] over EM forward paths (left
/// Riemann sum over knots 0..N-1).
struct BiasEstimate {
    double value;
    double std_error;
};
BiasEstimate bias_oracle(const PdeProblem& problem, const ModelFamily& model, const Vec& theta,
                         const TimeGrid& grid, int n_paths, std::uint64_t seed);

/// Stateful objective for training: binds (problem, model, spec), fits the
/// PINNs collocation Gaussian once, and evaluates with a per-call seed.
class Objective {
public:
    Objective(ProblemPtr problem, ModelPtr model, LossSpec spec);

    LossValue operator()(const Vec& theta, std::uint64_t seed) const;

    const LossSpec& spec() const { return spec_; }
    const PdeProblem& problem() const { return *problem_; }
    const ModelFamily& model() const { return *model_; }

private:
    ProblemPtr problem_;
    ModelPtr model_;
    LossSpec spec_;
    std::optional<SpatialNormal> fit_;
};

}  // namespace bsde
