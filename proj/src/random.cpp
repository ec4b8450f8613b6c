#include "caution/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace caution {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0x632be59bd9b4e019ULL;
constexpr double kPoissonChunk = 30.0;

std::uint64_t poisson_small(RngStream& rng, double mean) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double product = rng.uniform_open_zero();
    while (product > limit) {
        ++k;
        product *= rng.uniform_open_zero();
    }
    return k;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
    : master_seed_(master_seed),
      stream_index_(stream_index),
      key_(mix64(mix64(master_seed) ^ mix64(stream_index + kStreamSalt))) {}

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open_zero() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("uniform_below: bound must be positive");
    }
    // Rejection keeps the result exactly uniform.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= threshold) {
            return x % bound;
        }
    }
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = uniform_open_zero();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

void RngStream::fill_normal(std::span<double> out, double stddev) {
    for (double& x : out) {
        x = stddev * normal();
    }
}

std::uint64_t RngStream::poisson(double mean) {
    if (!(mean > 0.0) || !std::isfinite(mean)) {
        throw std::invalid_argument("poisson: mean must be positive and finite");
    }
    const auto pieces = static_cast<std::uint64_t>(std::ceil(mean / kPoissonChunk));
    const double piece_mean = mean / static_cast<double>(pieces);
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < pieces; ++i) {
        total += poisson_small(*this, piece_mean);
    }
    return total;
}

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(key_, child);
}

RngStream derive_stream(std::uint64_t master_seed, std::uint64_t index) {
    return RngStream(master_seed, index);
}

}  // namespace caution
