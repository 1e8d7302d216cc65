#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace bsde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<Vec>;
using MatRef = Eigen::Ref<Mat>;
using CVecRef = Eigen::Ref<const Vec>;
using CMatRef = Eigen::Ref<const Mat>;

enum class Scheme { EulerMaruyama, Heun };

/// How the backward value is re-anchored during EM integration.
enum class ResetPolicy {
    Reset,    ///< h is evaluated with y = u_theta(X_k, t_k)
    NoReset,  ///< h is evaluated with the propagated Y_k
};

const char* to_string(Scheme s);
const char* to_string(ResetPolicy p);

/// Uniform time discretization of [t_start, t_end] into n_steps intervals.
/// Knots are computed by index, never accumulated, and the last knot is
/// exactly t_end.
class TimeGrid {
public:
    TimeGrid(double t_start, double t_end, int n_steps);

    /// Grid on [0, horizon].
    static TimeGrid over(double horizon, int n_steps) { return {0.0, horizon, n_steps}; }

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    int n_steps() const noexcept { return n_steps_; }
    double tau() const noexcept { return tau_; }
    double knot(int k) const noexcept {
        return k == n_steps_ ? t_end_ : t_start_ + static_cast<double>(k) * tau_;
    }
    double length() const noexcept { return t_end_ - t_start_; }

    /// Same interval with n_steps * factor steps.
    TimeGrid refined(int factor) const;

    bool operator==(const TimeGrid&) const = default;

private:
    double t_start_;
    double t_end_;
    int n_steps_;
    double tau_;
};

}  // namespace bsde
