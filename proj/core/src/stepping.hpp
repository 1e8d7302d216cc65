#pragma once

// Single-path stepping kernels shared by the integrators and the losses.
// Every buffer lives in the stepper, so the inner loop does not allocate.

#include "bsdekit/errors.hpp"
#include "bsdekit/model.hpp"
#include "bsdekit/problem.hpp"
#include "bsdekit/random.hpp"

#include <cmath>
#include <string>

namespace bsde::detail {

/// Model value, gradient and their theta-derivatives at one point.
struct PointEval {
    ModelJet jet;
    ModelParamJet params;
};

class PathStepper {
public:
    PathStepper(const PdeProblem& problem, const ModelFamily* model, const Vec* theta,
                bool want_grad)
        : problem_(problem),
          model_(model),
          theta_(theta),
          want_grad_(want_grad && model != nullptr),
          d_(problem.dim()),
          m_(problem.noise_dim()),
          p_(model != nullptr ? model->param_dim() : 0) {
        x.resize(d_);
        dy = Vec::Zero(p_);
        x_pred_.resize(d_);
        f0_.resize(d_);
        f1_.resize(d_);
        gw0_.resize(d_);
        gw1_.resize(d_);
        dz_.resize(d_);
        g0_.resize(d_, m_);
        g1_.resize(d_, m_);
        dtrace_ = Vec::Zero(p_);
        dscratch_.resize(p_);
        dterm_.resize(p_);
        dincr.resize(p_);
        if (model_ != nullptr) {
            prepare_jet(*model_, cur.jet, &cur.params);
            prepare_jet(*model_, pred_.jet, &pred_.params);
        }
    }

    // Path state.
    Vec x;
    double y = 0.0;
    Vec dy;       ///< dY/dtheta
    PointEval cur;  ///< model at (x, t) after evaluate_current()
    Vec dincr;    ///< theta-gradient of the last backward increment

    void evaluate_current(double t) { evaluate_at(x, t, cur); }

    /// Sets Y to u_theta at the current point (requires evaluate_current).
    void reset_backward() {
        y = cur.jet.value;
        if (want_grad_) dy = cur.params.value;
    }

    /// Forward-only Euler-Maruyama step; y feeds the diffusion of coupled problems.
    void em_forward_step(double t, double tau, const Eigen::Map<const Vec>& w) {
        const double sq = std::sqrt(tau);
        problem_.drift(x, t, f0_);
        problem_.diffusion(x, t, y, g0_);
        gw0_.noalias() = g0_ * w;
        x += f0_ * tau + gw0_ * sq;
    }

    /// Forward-only Heun step (uncoupled problems).
    void heun_forward_step(double t, double tau, const Eigen::Map<const Vec>& w) {
        const double sq = std::sqrt(tau);
        problem_.drift(x, t, f0_);
        problem_.diffusion(x, t, 0.0, g0_);
        gw0_.noalias() = g0_ * w;
        x_pred_ = x + f0_ * tau + gw0_ * sq;
        problem_.drift(x_pred_, t + tau, f1_);
        problem_.diffusion(x_pred_, t + tau, 0.0, g1_);
        gw1_.noalias() = g1_ * w;
        x += 0.5 * (f0_ + f1_) * tau + 0.5 * (gw0_ + gw1_) * sq;
    }

    /// Joint Euler-Maruyama step of (X, Y). Requires evaluate_current(t).
    /// With `h_reads_model` the nonlinearity sees y = u_theta(X_k, t_k)
    /// (reset form); otherwise it sees the propagated Y_k (no-reset form).
    /// Returns the backward increment Y_{k+1} - Y_k.
    double em_joint_step(double t, double tau, const Eigen::Map<const Vec>& w, bool h_reads_model) {
        const double sq = std::sqrt(tau);
        const ModelJet& u = cur.jet;
        problem_.drift(x, t, f0_);
        problem_.diffusion(x, t, y, g0_);
        gw0_.noalias() = g0_ * w;
        const double y_arg = h_reads_model ? u.value : y;
        const NonlinearityValue h = problem_.nonlinearity(x, t, y_arg, u.grad, dz_);
        const double incr = h.value * tau + sq * u.grad.dot(gw0_);
        if (want_grad_) {
            const ModelParamJet& pu = cur.params;
            // d(incr) = (h_y dy_arg + dgrad^T h_z) tau + sqrt(tau) dgrad^T (g w)
            dz_ = dz_ * tau + gw0_ * sq;
            model_->param_grad_transpose(pu, dz_, dincr);
            dincr += (h.dy * tau) * (h_reads_model ? pu.value : dy);
            dy += dincr;
        }
        x += f0_ * tau + gw0_ * sq;
        y += incr;
        return incr;
    }

    /// Stochastic Heun step of the augmented state (X, Y) with backward drift
    /// h_theta - 1/2 Tr(H grad^2 u_theta) and diffusion grad u_theta^T g.
    /// Requires evaluate_current(t). Returns Y_{k+1} - Y_k.
    double heun_joint_step(double t, double tau, const Eigen::Map<const Vec>& w) {
        const double sq = std::sqrt(tau);
        const double t1 = t + tau;

        // Stage at the current point.
        problem_.drift(x, t, f0_);
        problem_.diffusion(x, t, y, g0_);
        gw0_.noalias() = g0_ * w;
        const double fy0 = backward_drift(cur, x, t, g0_, dterm_);
        const double gy0 = cur.jet.grad.dot(gw0_);
        if (want_grad_) {
            model_->param_grad_transpose(cur.params, gw0_, dscratch_);
            dincr = dterm_ * (0.5 * tau) + dscratch_ * (0.5 * sq);
        }

        // Predictor.
        x_pred_ = x + f0_ * tau + gw0_ * sq;
        const double y_pred = y + fy0 * tau + gy0 * sq;

        // Stage at the predicted point.
        evaluate_at(x_pred_, t1, pred_);
        problem_.drift(x_pred_, t1, f1_);
        problem_.diffusion(x_pred_, t1, y_pred, g1_);
        gw1_.noalias() = g1_ * w;
        const double fy1 = backward_drift(pred_, x_pred_, t1, g1_, dterm_);
        const double gy1 = pred_.jet.grad.dot(gw1_);
        if (want_grad_) {
            model_->param_grad_transpose(pred_.params, gw1_, dscratch_);
            dincr += dterm_ * (0.5 * tau) + dscratch_ * (0.5 * sq);
            dy += dincr;
        }

        // Corrector.
        const double incr = 0.5 * (fy0 + fy1) * tau + 0.5 * (gy0 + gy1) * sq;
        x += 0.5 * (f0_ + f1_) * tau + 0.5 * (gw0_ + gw1_) * sq;
        y += incr;
        return incr;
    }

    bool state_finite() const { return x.allFinite() && std::isfinite(y); }

    void require_finite(int step) const {
        if (!state_finite()) {
            throw BlowUpError(step, "trajectory blow-up at step " + std::to_string(step));
        }
    }

    const Mat& last_diffusion() const { return g0_; }

private:
    void evaluate_at(const Vec& point, double t, PointEval& out) {
        EvalOptions opts;
        opts.hessian = false;
        model_->evaluate(*theta_, point, t, out.jet, want_grad_ ? &out.params : nullptr, opts);
    }

    // h_theta(x, t) - 1/2 Tr(H grad^2 u_theta); gradient written to `grad_out`.
    double backward_drift(const PointEval& e, const Vec& point, double t, const Mat& g,
                          Vec& grad_out) {
        const double trace =
            model_->diffusion_trace(*theta_, point, t, g, want_grad_ ? &dtrace_ : nullptr);
        const NonlinearityValue h = problem_.nonlinearity(point, t, e.jet.value, e.jet.grad, dz_);
        if (want_grad_) {
            model_->param_grad_transpose(e.params, dz_, grad_out);
            grad_out += h.dy * e.params.value - 0.5 * dtrace_;
        }
        return h.value - 0.5 * trace;
    }

    const PdeProblem& problem_;
    const ModelFamily* model_;
    const Vec* theta_;
    bool want_grad_;
    int d_;
    int m_;
    int p_;

    PointEval pred_;
    Vec x_pred_, f0_, f1_, gw0_, gw1_, dz_, dtrace_, dterm_, dscratch_;
    Mat g0_, g1_;
};

// Exact value when available, else the model's own value; used as the y
// argument of a coupled diffusion on forward-only paths.
inline double coupled_anchor(const PdeProblem& problem, const ModelFamily* model,
                             const Vec* theta, const Vec& x, double t, SolutionJet& scratch) {
    if (problem.has_exact_solution()) {
        problem.exact_solution(x, t, scratch);
        return scratch.value;
    }
    if (model == nullptr) {
        throw PreconditionError("coupled problem '" + problem.name() +
                                "' without exact solution needs a model to drive its forward paths");
    }
    return model->value(*theta, x, t);
}

// EM forward path used for sampling; y follows coupled_anchor.
inline void sample_em_path(const PdeProblem& problem, const TimeGrid& grid,
                           const GaussianIncrements& inc, int b, const ModelFamily* model,
                           const Vec* theta, PathStepper& st, Mat& path, SolutionJet& scratch) {
    st.x = problem.initial_state();
    path.col(0) = st.x;
    for (int k = 0; k < grid.n_steps(); ++k) {
        const double t = grid.knot(k);
        if (problem.coupled()) st.y = coupled_anchor(problem, model, theta, st.x, t, scratch);
        st.em_forward_step(t, grid.tau(), inc.at(b, k));
        st.require_finite(k);
        path.col(k + 1) = st.x;
    }
}

}  // namespace bsde::detail
