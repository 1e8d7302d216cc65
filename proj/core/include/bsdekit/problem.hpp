#pragma once

#include "bsdekit/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace bsde {

/// Value of the nonlinearity h(x, t, y, z) and its partial derivative in y.
/// The z-gradient is written to the caller's buffer.
struct NonlinearityValue {
    double value = 0.0;
    double dy = 0.0;
};

/// Value, spatial gradient, Hessian and time derivative of a scalar field.
struct SolutionJet {
    double value = 0.0;
    double time_deriv = 0.0;
    Vec grad;
    Mat hess;
};

/// Parabolic PDE
///   d_t u + 1/2 Tr(H grad^2 u) + <f, grad u> - h(x, t, u, grad u) = 0,  u(., T) = phi,
/// with H = g g^T, together with the forward SDE dX = f dt + g dB started at
/// the point mass x0.
///
/// For coupled problems the diffusion also reads the backward value y.
class PdeProblem {
public:
    virtual ~PdeProblem() = default;

    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    /// Number of Brownian channels m (columns of g).
    virtual int noise_dim() const { return dim(); }
    virtual double horizon() const = 0;
    virtual Vec initial_state() const = 0;
    /// True when g depends on y.
    virtual bool coupled() const { return false; }

    virtual void drift(CVecRef x, double t, VecRef out) const = 0;
    /// out is d x m. `y` is ignored unless coupled().
    virtual void diffusion(CVecRef x, double t, double y, MatRef out) const = 0;
    /// d g / d y, d x m. Zero for uncoupled problems.
    virtual void diffusion_dy(CVecRef x, double t, double y, MatRef out) const;
    /// h(x, t, y, z); writes dh/dz into `dz`.
    virtual NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z,
                                           VecRef dz) const = 0;
    virtual double terminal(CVecRef x) const = 0;
    virtual void terminal_grad(CVecRef x, VecRef out) const = 0;

    virtual bool has_exact_solution() const { return false; }
    /// Closed-form solution jet at (x, t). Throws PreconditionError when
    /// has_exact_solution() is false.
    virtual void exact_solution(CVecRef x, double t, SolutionJet& out) const;
};

using ProblemPtr = std::shared_ptr<const PdeProblem>;

/// Problem assembled from callables. Used for ad-hoc test problems and for
/// user-defined equations that do not warrant their own class.
struct ProblemFunctions {
    std::string name = "custom";
    int dim = 1;
    int noise_dim = 1;
    double horizon = 1.0;
    Vec x0;
    bool coupled = false;
    std::function<void(CVecRef, double, VecRef)> drift;
    std::function<void(CVecRef, double, double, MatRef)> diffusion;
    std::function<void(CVecRef, double, double, MatRef)> diffusion_dy;  // optional
    std::function<NonlinearityValue(CVecRef, double, double, CVecRef, VecRef)> nonlinearity;
    std::function<double(CVecRef)> terminal;
    std::function<void(CVecRef, VecRef)> terminal_grad;
    std::function<void(CVecRef, double, SolutionJet&)> exact;  // optional
};

class FunctionalProblem final : public PdeProblem {
public:
    explicit FunctionalProblem(ProblemFunctions fns);

    std::string name() const override { return fns_.name; }
    int dim() const override { return fns_.dim; }
    int noise_dim() const override { return fns_.noise_dim; }
    double horizon() const override { return fns_.horizon; }
    Vec initial_state() const override { return fns_.x0; }
    bool coupled() const override { return fns_.coupled; }
    void drift(CVecRef x, double t, VecRef out) const override { fns_.drift(x, t, out); }
    void diffusion(CVecRef x, double t, double y, MatRef out) const override {
        fns_.diffusion(x, t, y, out);
    }
    void diffusion_dy(CVecRef x, double t, double y, MatRef out) const override;
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z,
                                   VecRef dz) const override {
        return fns_.nonlinearity(x, t, y, z, dz);
    }
    double terminal(CVecRef x) const override { return fns_.terminal(x); }
    void terminal_grad(CVecRef x, VecRef out) const override { fns_.terminal_grad(x, out); }
    bool has_exact_solution() const override { return static_cast<bool>(fns_.exact); }
    void exact_solution(CVecRef x, double t, SolutionJet& out) const override;

private:
    ProblemFunctions fns_;
};

/// Wraps a problem and replaces h by h - offset. Any u then has residual
/// R[u] + offset under the wrapped problem; applied to the exact solution this
/// gives a field with constant residual `offset`.
class ResidualOffsetProblem final : public PdeProblem {
public:
    ResidualOffsetProblem(ProblemPtr base, double offset);

    std::string name() const override;
    int dim() const override { return base_->dim(); }
    int noise_dim() const override { return base_->noise_dim(); }
    double horizon() const override { return base_->horizon(); }
    Vec initial_state() const override { return base_->initial_state(); }
    bool coupled() const override { return base_->coupled(); }
    void drift(CVecRef x, double t, VecRef out) const override { base_->drift(x, t, out); }
    void diffusion(CVecRef x, double t, double y, MatRef out) const override {
        base_->diffusion(x, t, y, out);
    }
    void diffusion_dy(CVecRef x, double t, double y, MatRef out) const override {
        base_->diffusion_dy(x, t, y, out);
    }
    NonlinearityValue nonlinearity(CVecRef x, double t, double y, CVecRef z,
                                   VecRef dz) const override;
    double terminal(CVecRef x) const override { return base_->terminal(x); }
    void terminal_grad(CVecRef x, VecRef out) const override { base_->terminal_grad(x, out); }
    // The exact solution of the base problem is no longer a solution here.
    bool has_exact_solution() const override { return false; }

    const PdeProblem& base() const { return *base_; }
    double offset() const { return offset_; }

private:
    ProblemPtr base_;
    double offset_;
};

/// H = g g^T at (x, t, y).
Mat diffusion_metric(const PdeProblem& problem, CVecRef x, double t, double y = 0.0);

/// Exact value and gradient at (x, t).
struct ExactValue {
    double value;
    Vec grad;
};
ExactValue exact_solution(const PdeProblem& problem, CVecRef x, double t);

}  // namespace bsde
