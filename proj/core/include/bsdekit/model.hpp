#pragma once

#include "bsdekit/problem.hpp"
#include "bsdekit/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace bsde {

/// Candidate solution u_theta at one (x, t).
struct ModelJet {
    double value = 0.0;
    double time_deriv = 0.0;
    /// Tr(H grad^2 u); only filled when a metric H is supplied.
    double trace_metric_hess = 0.0;
    Vec grad;
    Mat hess;
};

/// Derivatives of every ModelJet entry with respect to theta (length P).
struct ModelParamJet {
    Vec value;
    Vec time_deriv;
    Vec trace_metric_hess;
    Mat grad;               ///< d x P
    std::vector<Mat> hess;  ///< P matrices d x d, only with EvalOptions::param_hessians
};

struct EvalOptions {
    /// When set, trace_metric_hess (and its theta-gradient) use this H.
    const Mat* metric = nullptr;
    /// Fill ModelJet::hess.
    bool hessian = true;
    /// Fill ModelParamJet::hess (expensive; diagnostics only).
    bool param_hessians = false;
};

/// Parametric family u_theta(x, t) with closed-form spatial/temporal
/// derivatives and their theta-derivatives.
class ModelFamily {
public:
    virtual ~ModelFamily() = default;

    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual int param_dim() const = 0;

    /// Evaluates u_theta at (x, t). Buffers in `jet` / `params` are resized on
    /// first use and reused afterwards, so a caller that keeps them alive
    /// across calls does not allocate.
    virtual void evaluate(const Vec& theta, CVecRef x, double t, ModelJet& jet,
                          ModelParamJet* params = nullptr, const EvalOptions& opts = {}) const = 0;

    double value(const Vec& theta, CVecRef x, double t) const;

    /// Tr(g g^T grad^2 u_theta) at (x, t) for a diffusion matrix g (d x m)
    /// and, when `param_grad` is non-null, its theta-gradient. The default
    /// goes through evaluate(); families with cheap Hessians override it.
    virtual double diffusion_trace(const Vec& theta, CVecRef x, double t, const Mat& g,
                                   Vec* param_grad) const;

    /// out = params.grad^T v (length P). Families with a sparse parameter
    /// gradient override it.
    virtual void param_grad_transpose(const ModelParamJet& params, CVecRef v, VecRef out) const;
};

using ModelPtr = std::shared_ptr<const ModelFamily>;

/// u_theta(x, t) = sum_{j,m} theta_{j,m} S_j(x) b_m(T - t) with spatial
/// features S = {1, |x|^2, x_1, ..., x_d, sum_i sin(x_i)} and temporal basis
/// b = {1, s, s^2, s^3}. Parameter index is 4 * j + m.
class FeatureLinear final : public ModelFamily {
public:
    static constexpr int kTemporal = 4;

    FeatureLinear(int dim, double horizon);

    std::string name() const override { return "feature_linear"; }
    int dim() const override { return dim_; }
    int param_dim() const override { return kTemporal * spatial_count(); }
    int spatial_count() const { return dim_ + 3; }
    double horizon() const { return horizon_; }

    void evaluate(const Vec& theta, CVecRef x, double t, ModelJet& jet,
                  ModelParamJet* params = nullptr, const EvalOptions& opts = {}) const override;

    double diffusion_trace(const Vec& theta, CVecRef x, double t, const Mat& g,
                           Vec* param_grad) const override;
    void param_grad_transpose(const ModelParamJet& params, CVecRef v, VecRef out) const override;

    /// Index of parameter (spatial feature j, temporal power m).
    static int index(int j, int m) { return kTemporal * j + m; }
    int index_norm2(int m) const { return index(1, m); }
    int index_linear(int i, int m) const { return index(2 + i, m); }
    int index_sine(int m) const { return index(dim_ + 2, m); }

private:
    int dim_;
    double horizon_;
};

/// u_theta(x, t) = theta * u*(x, t) for the problem's closed-form solution u*.
class ScaledExact final : public ModelFamily {
public:
    explicit ScaledExact(ProblemPtr problem);

    std::string name() const override { return "scaled_exact"; }
    int dim() const override { return problem_->dim(); }
    int param_dim() const override { return 1; }

    void evaluate(const Vec& theta, CVecRef x, double t, ModelJet& jet,
                  ModelParamJet* params = nullptr, const EvalOptions& opts = {}) const override;

private:
    ProblemPtr problem_;
};

/// Resizes jet buffers for a model (no-op when already sized). Buffers are
/// zero-filled when (re)allocated; families with a fixed sparsity pattern
/// only write their structural nonzeros afterwards.
void prepare_jet(const ModelFamily& model, ModelJet& jet, ModelParamJet* params);

}  // namespace bsde
