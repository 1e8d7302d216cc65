#pragma once

#include "bsdekit/types.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace bsde {

/// Mixes two 64-bit words into a well-distributed key.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Counter-based 64-bit generator: the n-th output is a pure function of
/// (key, n). Satisfies UniformRandomBitGenerator, so it plugs into the
/// <random> distributions.
class StreamRng {
public:
    using result_type = std::uint64_t;

    StreamRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix_seed(seed, stream)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Fills `out` with i.i.d. standard normals drawn from the substream
/// (seed, stream).
void fill_standard_normal(std::uint64_t seed, std::uint64_t stream, std::span<double> out);

/// i.i.d. N(0, I_m) increments w_k for a batch of paths. Path b is drawn from
/// its own substream (seed, b), so growing the batch never reshuffles the
/// paths that were already there.
class GaussianIncrements {
public:
    GaussianIncrements(std::uint64_t seed, int batch, int steps, int channels);

    std::uint64_t seed() const noexcept { return seed_; }
    int batch() const noexcept { return batch_; }
    int steps() const noexcept { return steps_; }
    int channels() const noexcept { return channels_; }

    /// w_k for path b, length `channels()`.
    Eigen::Map<const Vec> at(int b, int k) const {
        return {data_.data() + offset(b, k), channels_};
    }

    /// All N * m draws of path b, step-major.
    std::span<const double> path(int b) const {
        return {data_.data() + offset(b, 0), static_cast<std::size_t>(steps_) * channels_};
    }

    /// Increments for the grid with steps / factor steps driven by the same
    /// Brownian path: consecutive blocks of `factor` draws are summed and
    /// rescaled by 1/sqrt(factor).
    GaussianIncrements coarsened(int factor) const;

    /// Constructs increments from explicit values (tests, replay).
    static GaussianIncrements from_values(int batch, int steps, int channels, std::vector<double> values);

private:
    GaussianIncrements() = default;
    std::size_t offset(int b, int k) const noexcept {
        return (static_cast<std::size_t>(b) * steps_ + k) * channels_;
    }

    std::uint64_t seed_ = 0;
    int batch_ = 0;
    int steps_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

using IncrementsPtr = std::shared_ptr<const GaussianIncrements>;

}  // namespace bsde
