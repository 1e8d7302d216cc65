#include "bsdekit/random.hpp"

#include "bsdekit/errors.hpp"

#include <cmath>
#include <random>

namespace bsde {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

const char* to_string(Scheme s) {
    return s == Scheme::EulerMaruyama ? "em" : "heun";
}

const char* to_string(ResetPolicy p) {
    return p == ResetPolicy::Reset ? "reset" : "no-reset";
}

TimeGrid::TimeGrid(double t_start, double t_end, int n_steps)
    : t_start_(t_start), t_end_(t_end), n_steps_(n_steps), tau_(0.0) {
    if (!(t_start >= 0.0) || !std::isfinite(t_end) || !(t_end > t_start)) {
        throw PreconditionError("TimeGrid: require 0 <= t_start < t_end");
    }
    if (n_steps < 1) throw PreconditionError("TimeGrid: n_steps must be >= 1");
    tau_ = (t_end - t_start) / static_cast<double>(n_steps);
}

TimeGrid TimeGrid::refined(int factor) const {
    if (factor < 1) throw PreconditionError("TimeGrid::refined: factor must be >= 1");
    return {t_start_, t_end_, n_steps_ * factor};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

StreamRng::result_type StreamRng::operator()() noexcept {
    return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

void fill_standard_normal(std::uint64_t seed, std::uint64_t stream, std::span<double> out) {
    StreamRng rng(seed, stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : out) v = normal(rng);
}

GaussianIncrements::GaussianIncrements(std::uint64_t seed, int batch, int steps, int channels)
    : seed_(seed), batch_(batch), steps_(steps), channels_(channels) {
    if (batch < 1 || steps < 1 || channels < 1) {
        throw PreconditionError("GaussianIncrements: batch, steps and channels must be positive");
    }
    data_.resize(static_cast<std::size_t>(batch) * steps * channels);
    const std::size_t per_path = static_cast<std::size_t>(steps) * channels;
    for (int b = 0; b < batch; ++b) {
        fill_standard_normal(seed, static_cast<std::uint64_t>(b),
                             std::span<double>(data_.data() + b * per_path, per_path));
    }
}

GaussianIncrements GaussianIncrements::coarsened(int factor) const {
    if (factor < 1 || steps_ % factor != 0) {
        throw PreconditionError("GaussianIncrements::coarsened: factor must divide the step count");
    }
    GaussianIncrements out;
    out.seed_ = seed_;
    out.batch_ = batch_;
    out.steps_ = steps_ / factor;
    out.channels_ = channels_;
    out.data_.assign(static_cast<std::size_t>(out.batch_) * out.steps_ * channels_, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(factor));
    for (int b = 0; b < batch_; ++b) {
        for (int k = 0; k < out.steps_; ++k) {
            double* dst = out.data_.data() + out.offset(b, k);
            for (int j = 0; j < factor; ++j) {
                const double* src = data_.data() + offset(b, k * factor + j);
                for (int c = 0; c < channels_; ++c) dst[c] += src[c];
            }
            for (int c = 0; c < channels_; ++c) dst[c] *= scale;
        }
    }
    return out;
}

GaussianIncrements GaussianIncrements::from_values(int batch, int steps, int channels,
                                                   std::vector<double> values) {
    if (batch < 1 || steps < 1 || channels < 1 ||
        values.size() != static_cast<std::size_t>(batch) * steps * channels) {
        throw PreconditionError("GaussianIncrements::from_values: shape mismatch");
    }
    GaussianIncrements out;
    out.batch_ = batch;
    out.steps_ = steps;
    out.channels_ = channels;
    out.data_ = std::move(values);
    return out;
}

}  // namespace bsde
