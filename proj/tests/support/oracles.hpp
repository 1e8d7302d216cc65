#pragma once

/// Independent reference computations for the test suites. Nothing here
/// calls into the library's own closed forms.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Classic RK4 from t = T backwards to `t` for y' = f(t, y), y(T) = yT.
inline double rk4_backward(const std::function<double(double, double)>& f, double horizon, double y_terminal,
                           double t, int steps) {
    const double h = (t - horizon) / steps;
    double s = horizon;
    double y = y_terminal;
    for (int i = 0; i < steps; ++i) {
        const double k1 = f(s, y);
        const double k2 = f(s + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = f(s + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = f(s + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    return y;
}

/// a(t) for a' = a^2 / r - q, a(T) = qT by RK4.
inline double riccati_a(double q, double r, double q_terminal, double horizon, double t, int steps = 20000) {
    return rk4_backward([&](double, double a) { return a * a / r - q; }, horizon, q_terminal, t, steps);
}

/// c(t) = sigma^2 int_t^T a(s) ds by composite Simpson over RK4 values.
inline double riccati_c(double q, double r, double q_terminal, double sigma, double horizon, double t,
                        int panels = 400) {
    if (t >= horizon) return 0.0;
    const int n = 2 * panels;
    const double h = (horizon - t) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * riccati_a(q, r, q_terminal, horizon, t + i * h, 2000);
    }
    return sigma * sigma * sum * h / 3.0;
}

/// Limit of the tau^-2 one-step EM loss for u = a x^2 + c with g = sigma:
/// 1/2 (sigma^2 * 2a)^2 = 2 sigma^4 a^2.
inline double lqr_em_bias(double sigma, double a) { return 2.0 * std::pow(sigma, 4) * a * a; }

/// Black-Scholes-Barenblatt value exp((r + sigma^2)(T - t)) |x|^2.
inline double bsb_value(const std::vector<double>& x, double t, double horizon, double rate, double sigma) {
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    return std::exp((rate + sigma * sigma) * (horizon - t)) * n2;
}

/// Coupled benchmark value exp(-r (T - t)) D sum sin x_j.
inline double bz_value(const std::vector<double>& x, double t, double horizon, double rate, double amplitude) {
    double s = 0.0;
    for (double v : x) s += std::sin(v);
    return std::exp(-rate * (horizon - t)) * amplitude * s;
}

/// 2 |Q|_F^2 for a row-major square matrix.
inline double quadform_variance(const std::vector<double>& q) {
    double s = 0.0;
    for (double v : q) s += v * v;
    return 2.0 * s;
}

}  // namespace oracle
