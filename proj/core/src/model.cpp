#include "bsdekit/model.hpp"

#include "bsdekit/errors.hpp"

#include <array>
#include <cmath>

namespace bsde {

double ModelFamily::value(const Vec& theta, CVecRef x, double t) const {
    ModelJet jet;
    EvalOptions opts;
    opts.hessian = false;
    evaluate(theta, x, t, jet, nullptr, opts);
    return jet.value;
}

double ModelFamily::diffusion_trace(const Vec& theta, CVecRef x, double t, const Mat& g,
                                    Vec* param_grad) const {
    const Mat metric = g * g.transpose();
    ModelJet jet;
    EvalOptions opts;
    opts.metric = &metric;
    opts.hessian = false;
    if (param_grad == nullptr) {
        evaluate(theta, x, t, jet, nullptr, opts);
    } else {
        ModelParamJet pj;
        evaluate(theta, x, t, jet, &pj, opts);
        *param_grad = pj.trace_metric_hess;
    }
    return jet.trace_metric_hess;
}

void ModelFamily::param_grad_transpose(const ModelParamJet& params, CVecRef v, VecRef out) const {
    out.noalias() = params.grad.transpose() * v;
}

void prepare_jet(const ModelFamily& model, ModelJet& jet, ModelParamJet* params) {
    const int d = model.dim();
    const int p = model.param_dim();
    if (jet.grad.size() != d) jet.grad = Vec::Zero(d);
    if (jet.hess.rows() != d || jet.hess.cols() != d) jet.hess = Mat::Zero(d, d);
    if (params != nullptr) {
        if (params->value.size() != p) params->value = Vec::Zero(p);
        if (params->time_deriv.size() != p) params->time_deriv = Vec::Zero(p);
        if (params->trace_metric_hess.size() != p) params->trace_metric_hess = Vec::Zero(p);
        if (params->grad.rows() != d || params->grad.cols() != p) params->grad = Mat::Zero(d, p);
    }
}

FeatureLinear::FeatureLinear(int dim, double horizon) : dim_(dim), horizon_(horizon) {
    if (dim < 1) throw PreconditionError("FeatureLinear: dim must be positive");
    if (!(horizon > 0.0)) throw PreconditionError("FeatureLinear: horizon must be positive");
}

namespace {

// sin and cos of every coordinate, on the stack for the usual small d.
class SinCos {
public:
    explicit SinCos(CVecRef x) : n_(static_cast<int>(x.size())) {
        if (n_ > kSmall) heap_.resize(2 * static_cast<std::size_t>(n_));
        double* p = data();
        for (int i = 0; i < n_; ++i) {
            p[i] = std::sin(x[i]);
            p[n_ + i] = std::cos(x[i]);
        }
    }
    double sin(int i) const { return data()[i]; }
    double cos(int i) const { return data()[n_ + i]; }

private:
    static constexpr int kSmall = 32;
    const double* data() const { return n_ > kSmall ? heap_.data() : small_.data(); }
    double* data() { return n_ > kSmall ? heap_.data() : small_.data(); }
    int n_;
    std::array<double, 2 * kSmall> small_{};
    std::vector<double> heap_;
};

}  // namespace

void FeatureLinear::evaluate(const Vec& theta, CVecRef x, double t, ModelJet& jet,
                             ModelParamJet* params, const EvalOptions& opts) const {
    const int d = dim_;
    if (theta.size() != param_dim() || x.size() != d) {
        throw PreconditionError("FeatureLinear::evaluate: dimension mismatch");
    }
    prepare_jet(*this, jet, params);

    const double s = horizon_ - t;
    const std::array<double, kTemporal> b = {1.0, s, s * s, s * s * s};
    // d/dt b_m(T - t) = -b_m'(s)
    const std::array<double, kTemporal> bt = {0.0, -1.0, -2.0 * s, -3.0 * s * s};

    // Effective spatial coefficients c_j(t) and their time derivatives.
    auto coeff = [&](int j, const std::array<double, kTemporal>& basis) {
        const double* th = theta.data() + kTemporal * j;
        return th[0] * basis[0] + th[1] * basis[1] + th[2] * basis[2] + th[3] * basis[3];
    };

    const SinCos sc(x);
    double norm2 = 0.0;
    double sine_sum = 0.0;
    for (int i = 0; i < d; ++i) {
        norm2 += x[i] * x[i];
        sine_sum += sc.sin(i);
    }

    const double c_const = coeff(0, b);
    const double c_norm = coeff(1, b);
    const double c_sine = coeff(d + 2, b);

    double value = c_const + c_norm * norm2 + c_sine * sine_sum;
    double time_deriv = coeff(0, bt) + coeff(1, bt) * norm2 + coeff(d + 2, bt) * sine_sum;
    for (int i = 0; i < d; ++i) {
        const double c_lin = coeff(2 + i, b);
        value += c_lin * x[i];
        time_deriv += coeff(2 + i, bt) * x[i];
        jet.grad[i] = 2.0 * c_norm * x[i] + c_lin + c_sine * sc.cos(i);
    }
    jet.value = value;
    jet.time_deriv = time_deriv;

    if (opts.hessian) {
        jet.hess.setZero();
        for (int i = 0; i < d; ++i) jet.hess(i, i) = 2.0 * c_norm - c_sine * sc.sin(i);
    }

    // The Hessian is diagonal, so only diag(H) enters Tr(H grad^2 u), and only
    // |x|^2 and the sine sum have curvature.
    double tr_norm = 0.0;
    double tr_sine = 0.0;
    if (opts.metric != nullptr) {
        const Mat& h = *opts.metric;
        for (int i = 0; i < d; ++i) {
            tr_norm += 2.0 * h(i, i);
            tr_sine -= h(i, i) * sc.sin(i);
        }
        jet.trace_metric_hess = c_norm * tr_norm + c_sine * tr_sine;
    }

    if (params == nullptr) return;

    // Entries outside the pattern below stay at the zeros prepare_jet wrote.
    for (int m = 0; m < kTemporal; ++m) {
        params->value[index(0, m)] = b[m];
        params->value[index(1, m)] = norm2 * b[m];
        params->value[index(d + 2, m)] = sine_sum * b[m];
        params->time_deriv[index(0, m)] = bt[m];
        params->time_deriv[index(1, m)] = norm2 * bt[m];
        params->time_deriv[index(d + 2, m)] = sine_sum * bt[m];
        params->trace_metric_hess[index(1, m)] = tr_norm * b[m];
        params->trace_metric_hess[index(d + 2, m)] = tr_sine * b[m];
        for (int i = 0; i < d; ++i) {
            params->value[index(2 + i, m)] = x[i] * b[m];
            params->time_deriv[index(2 + i, m)] = x[i] * bt[m];
            params->grad(i, index(1, m)) = 2.0 * x[i] * b[m];
            params->grad(i, index(2 + i, m)) = b[m];
            params->grad(i, index(d + 2, m)) = sc.cos(i) * b[m];
        }
    }

    if (opts.param_hessians) {
        params->hess.assign(param_dim(), Mat::Zero(d, d));
        for (int m = 0; m < kTemporal; ++m) {
            for (int i = 0; i < d; ++i) {
                params->hess[index(1, m)](i, i) = 2.0 * b[m];
                params->hess[index(d + 2, m)](i, i) = -sc.sin(i) * b[m];
            }
        }
    }
}

double FeatureLinear::diffusion_trace(const Vec& theta, CVecRef x, double t, const Mat& g,
                                      Vec* param_grad) const {
    const int d = dim_;
    if (theta.size() != param_dim() || x.size() != d || g.rows() != d) {
        throw PreconditionError("FeatureLinear::diffusion_trace: dimension mismatch");
    }
    const double s = horizon_ - t;
    const std::array<double, kTemporal> b = {1.0, s, s * s, s * s * s};
    double tr_norm = 0.0;
    double tr_sine = 0.0;
    for (int i = 0; i < d; ++i) {
        const double h_ii = g.row(i).squaredNorm();
        tr_norm += 2.0 * h_ii;
        tr_sine -= h_ii * std::sin(x[i]);
    }
    double c_norm = 0.0;
    double c_sine = 0.0;
    for (int m = 0; m < kTemporal; ++m) {
        c_norm += theta[index(1, m)] * b[m];
        c_sine += theta[index(d + 2, m)] * b[m];
    }
    if (param_grad != nullptr) {
        if (param_grad->size() != param_dim()) param_grad->resize(param_dim());
        param_grad->setZero();
        for (int m = 0; m < kTemporal; ++m) {
            (*param_grad)[index(1, m)] = tr_norm * b[m];
            (*param_grad)[index(d + 2, m)] = tr_sine * b[m];
        }
    }
    return c_norm * tr_norm + c_sine * tr_sine;
}

void FeatureLinear::param_grad_transpose(const ModelParamJet& params, CVecRef v, VecRef out) const {
    const int d = dim_;
    const Mat& g = params.grad;
    for (int m = 0; m < kTemporal; ++m) {
        const int kn = index(1, m);
        const int ks = index(d + 2, m);
        double an = 0.0;
        double as = 0.0;
        for (int i = 0; i < d; ++i) {
            an += g(i, kn) * v[i];
            as += g(i, ks) * v[i];
            out[index(2 + i, m)] = g(i, index(2 + i, m)) * v[i];
        }
        out[index(0, m)] = 0.0;
        out[kn] = an;
        out[ks] = as;
    }
}

ScaledExact::ScaledExact(ProblemPtr problem) : problem_(std::move(problem)) {
    if (!problem_ || !problem_->has_exact_solution()) {
        throw PreconditionError("ScaledExact: problem must provide a closed-form solution");
    }
}

void ScaledExact::evaluate(const Vec& theta, CVecRef x, double t, ModelJet& jet,
                           ModelParamJet* params, const EvalOptions& opts) const {
    if (theta.size() != 1 || x.size() != dim()) {
        throw PreconditionError("ScaledExact::evaluate: dimension mismatch");
    }
    prepare_jet(*this, jet, params);
    SolutionJet exact;
    exact.grad.resize(dim());
    exact.hess.resize(dim(), dim());
    problem_->exact_solution(x, t, exact);

    const double scale = theta[0];
    jet.value = scale * exact.value;
    jet.time_deriv = scale * exact.time_deriv;
    jet.grad = scale * exact.grad;
    if (opts.hessian) jet.hess = scale * exact.hess;
    double trace = 0.0;
    if (opts.metric != nullptr) {
        trace = (opts.metric->cwiseProduct(exact.hess)).sum();
        jet.trace_metric_hess = scale * trace;
    }
    if (params == nullptr) return;
    params->value[0] = exact.value;
    params->time_deriv[0] = exact.time_deriv;
    params->grad.col(0) = exact.grad;
    params->trace_metric_hess[0] = opts.metric != nullptr ? trace : 0.0;
    if (opts.param_hessians) params->hess.assign(1, exact.hess);
}

}  // namespace bsde
