#include "bsdekit/pde_suite.hpp"

#include "bsdekit/errors.hpp"
#include "bsdekit/parallel.hpp"
#include "bsdekit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace bsde {

namespace {

Vec resolve_x0(const std::optional<Vec>& given, int dim, const Vec& fallback, const char* who) {
    if (!given) return fallback;
    if (given->size() != dim) {
        throw ConfigError(std::string(who) + ": x0 has length " + std::to_string(given->size()) +
                          ", expected " + std::to_string(dim));
    }
    return *given;
}

void require_positive_dim(int dim, const char* who) {
    if (dim < 1) throw ConfigError(std::string(who) + ": dimension must be positive");
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

double log_cosh(double v) {
    const double a = std::abs(v);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double log_abs_sinh(double v) {
    const double a = std::abs(v);
    return a + std::log1p(-std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

// ---------------------------------------------------------------- HJB

HjbProblem::HjbProblem(Params p) : p_(std::move(p)) {
    require_positive_dim(p_.dim, "hjb");
    require_positive(p_.horizon, "hjb: horizon");
    require_positive(p_.sigma, "hjb: sigma");
    x0_ = resolve_x0(p_.x0, p_.dim, Vec::Zero(p_.dim), "hjb");
}

void HjbProblem::drift(CVecRef, double, VecRef out) const { out.setZero(); }

void HjbProblem::diffusion(CVecRef, double, double, MatRef out) const {
    out.setZero();
    out.diagonal().setConstant(p_.sigma);
}

NonlinearityValue HjbProblem::nonlinearity(CVecRef, double, double, CVecRef z, VecRef dz) const {
    dz = 2.0 * z;
    return {z.squaredNorm(), 0.0};
}

double HjbProblem::terminal(CVecRef x) const { return std::log(0.5 * (1.0 + x.squaredNorm())); }

void HjbProblem::terminal_grad(CVecRef x, VecRef out) const {
    out = (2.0 / (1.0 + x.squaredNorm())) * x;
}

HjbReference hjb_reference(const HjbProblem& problem, CVecRef x, double t, std::int64_t n_mc,
                           std::uint64_t seed) {
    if (n_mc < 1) throw PreconditionError("hjb_reference: n_mc must be positive");
    if (x.size() != problem.dim()) throw PreconditionError("hjb_reference: dimension mismatch");
    const double remaining = problem.horizon() - t;
    if (remaining < 0.0) throw PreconditionError("hjb_reference: t beyond the horizon");
    if (remaining == 0.0) return {problem.terminal(x), 0.0};

    const double scale = problem.sigma() * std::sqrt(remaining);
    const int d = problem.dim();
    const auto n = static_cast<std::size_t>(n_mc);
    std::vector<double> expo(n);
    // Chunk over samples; each sample owns its substream so the result does
    // not depend on the thread count.
    constexpr std::int64_t kChunk = 4096;
    const int n_chunks = static_cast<int>((n_mc + kChunk - 1) / kChunk);
    parallel_chunks(n_chunks, [&](int c0, int c1) {
        Vec xi(d), point(d);
        std::vector<double> draws(d);
        for (int c = c0; c < c1; ++c) {
            const std::int64_t i0 = c * kChunk;
            const std::int64_t i1 = std::min<std::int64_t>(n_mc, i0 + kChunk);
            for (std::int64_t i = i0; i < i1; ++i) {
                fill_standard_normal(seed, static_cast<std::uint64_t>(i), draws);
                for (int j = 0; j < d; ++j) point[j] = x[j] + scale * draws[j];
                expo[static_cast<std::size_t>(i)] = -problem.terminal(point);
            }
        }
    });
    const double mx = *std::max_element(expo.begin(), expo.end());
    double s = 0.0;
    double s2 = 0.0;
    for (double e : expo) {
        const double w = std::exp(e - mx);
        s += w;
        s2 += w * w;
    }
    const double nn = static_cast<double>(n);
    const double mean = s / nn;
    const double var = n > 1 ? std::max(0.0, (s2 - nn * mean * mean) / (nn - 1.0)) : 0.0;
    const double value = -(mx + std::log(mean));
    if (!std::isfinite(value)) throw NumericalDomainError("reference", "hjb_reference: non-finite value");
    return {value, std::sqrt(var / nn) / mean};
}

// ---------------------------------------------------------------- BSB

BsbProblem::BsbProblem(Params p) : p_(std::move(p)) {
    require_positive_dim(p_.dim, "bsb");
    require_positive(p_.horizon, "bsb: horizon");
    require_positive(p_.sigma, "bsb: sigma");
    Vec fallback(p_.dim);
    for (int i = 0; i < p_.dim; ++i) fallback[i] = (i % 2 == 0) ? 1.0 : 0.5;
    x0_ = resolve_x0(p_.x0, p_.dim, fallback, "bsb");
}

void BsbProblem::drift(CVecRef, double, VecRef out) const { out.setZero(); }

void BsbProblem::diffusion(CVecRef x, double, double, MatRef out) const {
    out.setZero();
    out.diagonal() = p_.sigma * x;
}

NonlinearityValue BsbProblem::nonlinearity(CVecRef x, double, double y, CVecRef z, VecRef dz) const {
    dz = -p_.rate * x;
    return {p_.rate * (y - z.dot(x)), p_.rate};
}

double BsbProblem::terminal(CVecRef x) const { return x.squaredNorm(); }

void BsbProblem::terminal_grad(CVecRef x, VecRef out) const { out = 2.0 * x; }

void BsbProblem::exact_solution(CVecRef x, double t, SolutionJet& out) const {
    const double k = p_.rate + p_.sigma * p_.sigma;
    const double e = std::exp(k * (p_.horizon - t));
    const int d = p_.dim;
    out.value = e * x.squaredNorm();
    out.time_deriv = -k * out.value;
    out.grad = 2.0 * e * x;
    out.hess = Mat::Identity(d, d) * (2.0 * e);
}

// ---------------------------------------------------------------- BZ

BzProblem::BzProblem(Params p) : p_(std::move(p)) {
    require_positive_dim(p_.dim, "bz");
    require_positive(p_.horizon, "bz: horizon");
    require_positive(p_.sigma, "bz: sigma");
    x0_ = resolve_x0(p_.x0, p_.dim, Vec::Constant(p_.dim, std::numbers::pi / 2.0), "bz");
}

void BzProblem::drift(CVecRef, double, VecRef out) const { out.setZero(); }

void BzProblem::diffusion(CVecRef, double, double y, MatRef out) const {
    out.setZero();
    out.diagonal().setConstant(p_.sigma * y);
}

void BzProblem::diffusion_dy(CVecRef, double, double, MatRef out) const {
    out.setZero();
    out.diagonal().setConstant(p_.sigma);
}

NonlinearityValue BzProblem::nonlinearity(CVecRef x, double t, double y, CVecRef, VecRef dz) const {
    dz.setZero();
    const double s = p_.amplitude * x.array().sin().sum();
    const double decay = std::exp(-3.0 * p_.rate * (p_.horizon - t));
    return {p_.rate * y - 0.5 * p_.sigma * p_.sigma * decay * s * s * s, p_.rate};
}

double BzProblem::terminal(CVecRef x) const { return p_.amplitude * x.array().sin().sum(); }

void BzProblem::terminal_grad(CVecRef x, VecRef out) const {
    out = p_.amplitude * x.array().cos().matrix();
}

void BzProblem::exact_solution(CVecRef x, double t, SolutionJet& out) const {
    const double e = std::exp(-p_.rate * (p_.horizon - t)) * p_.amplitude;
    out.value = e * x.array().sin().sum();
    out.time_deriv = p_.rate * out.value;
    out.grad = e * x.array().cos().matrix();
    out.hess = Mat::Zero(p_.dim, p_.dim);
    out.hess.diagonal() = -e * x.array().sin().matrix();
}

// ---------------------------------------------------------------- LQR

double Riccati1d::a(double t) const {
    const double s = horizon - t;
    if (q == 0.0) {
        if (q_terminal == 0.0) return 0.0;
        return 1.0 / (1.0 / q_terminal + s / r_c);
    }
    const double alpha = std::sqrt(q * r_c);
    const double ratio = q_terminal / alpha;
    if (std::abs(ratio - 1.0) <= 1e-15) return alpha;
    if (std::abs(ratio) < 1.0) return alpha * std::tanh(alpha * s / r_c + std::atanh(ratio));
    return alpha / std::tanh(alpha * s / r_c + std::atanh(1.0 / ratio));
}

double Riccati1d::c(double t) const {
    const double s = horizon - t;
    const double sig2 = sigma * sigma;
    if (q == 0.0) {
        if (q_terminal == 0.0) return 0.0;
        return sig2 * r_c * std::log1p(s * q_terminal / r_c);
    }
    const double alpha = std::sqrt(q * r_c);
    const double ratio = q_terminal / alpha;
    if (std::abs(ratio - 1.0) <= 1e-15) return sig2 * alpha * s;
    if (std::abs(ratio) < 1.0) {
        const double v0 = std::atanh(ratio);
        return sig2 * r_c * (log_cosh(alpha * s / r_c + v0) - log_cosh(v0));
    }
    const double v0 = std::atanh(1.0 / ratio);
    return sig2 * r_c * (log_abs_sinh(alpha * s / r_c + v0) - log_abs_sinh(v0));
}

Lqr1dProblem::Lqr1dProblem(Params p) : p_(p) {
    require_positive(p_.horizon, "lqr1d: horizon");
    require_positive(p_.sigma, "lqr1d: sigma");
    require_positive(p_.r_c, "lqr1d: r_c");
    if (p_.q < 0.0) throw ConfigError("lqr1d: q must be non-negative");
    if (p_.q_terminal < 0.0) throw ConfigError("lqr1d: q_terminal must be non-negative");
    riccati_ = Riccati1d{p_.q, p_.r_c, p_.q_terminal, p_.sigma, p_.horizon};
}

void Lqr1dProblem::drift(CVecRef, double, VecRef out) const { out.setZero(); }

void Lqr1dProblem::diffusion(CVecRef, double, double, MatRef out) const { out(0, 0) = p_.sigma; }

NonlinearityValue Lqr1dProblem::nonlinearity(CVecRef x, double, double, CVecRef z, VecRef dz) const {
    dz[0] = z[0] / (2.0 * p_.r_c);
    return {z[0] * z[0] / (4.0 * p_.r_c) - p_.q * x[0] * x[0], 0.0};
}

double Lqr1dProblem::terminal(CVecRef x) const { return p_.q_terminal * x[0] * x[0]; }

void Lqr1dProblem::terminal_grad(CVecRef x, VecRef out) const { out[0] = 2.0 * p_.q_terminal * x[0]; }

void Lqr1dProblem::exact_solution(CVecRef x, double t, SolutionJet& out) const {
    const double a = riccati_.a(t);
    const double a_dot = a * a / p_.r_c - p_.q;
    const double x2 = x[0] * x[0];
    out.value = a * x2 + riccati_.c(t);
    out.time_deriv = a_dot * x2 - p_.sigma * p_.sigma * a;
    out.grad = Vec::Constant(1, 2.0 * a * x[0]);
    out.hess = Mat::Constant(1, 1, 2.0 * a);
}

// ---------------------------------------------------------------- factory

std::vector<std::string> problem_names() { return {"hjb", "bsb", "bz", "lqr1d"}; }

ProblemPtr make_problem(const std::string& name, const ProblemOptions& o) {
    auto reject = [&](bool present, const char* key) {
        if (present) throw ConfigError("problem '" + name + "' does not take option '" + key + "'");
    };
    if (name == "hjb") {
        reject(o.rate.has_value(), "rate");
        reject(o.amplitude.has_value(), "amplitude");
        HjbProblem::Params p;
        p.dim = o.dim;
        if (o.horizon) p.horizon = *o.horizon;
        if (o.sigma) p.sigma = *o.sigma;
        p.x0 = o.x0;
        return std::make_shared<HjbProblem>(p);
    }
    if (name == "bsb") {
        reject(o.amplitude.has_value(), "amplitude");
        BsbProblem::Params p;
        p.dim = o.dim;
        if (o.horizon) p.horizon = *o.horizon;
        if (o.sigma) p.sigma = *o.sigma;
        if (o.rate) p.rate = *o.rate;
        p.x0 = o.x0;
        return std::make_shared<BsbProblem>(p);
    }
    if (name == "bz") {
        BzProblem::Params p;
        p.dim = o.dim;
        if (o.horizon) p.horizon = *o.horizon;
        if (o.sigma) p.sigma = *o.sigma;
        if (o.rate) p.rate = *o.rate;
        if (o.amplitude) p.amplitude = *o.amplitude;
        p.x0 = o.x0;
        return std::make_shared<BzProblem>(p);
    }
    if (name == "lqr1d") {
        reject(o.rate.has_value(), "rate");
        reject(o.amplitude.has_value(), "amplitude");
        if (o.dim != 1) throw ConfigError("problem 'lqr1d' is one-dimensional");
        Lqr1dProblem::Params p;
        if (o.horizon) p.horizon = *o.horizon;
        if (o.sigma) p.sigma = *o.sigma;
        if (o.x0) {
            if (o.x0->size() != 1) throw ConfigError("lqr1d: x0 must have length 1");
            p.x0 = (*o.x0)[0];
        }
        return std::make_shared<Lqr1dProblem>(p);
    }
    throw ConfigError("unknown problem '" + name + "' (expected hjb, bsb, bz or lqr1d)");
}

}  // namespace bsde
