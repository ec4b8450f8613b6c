#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace caution {

// Counter-based splittable stream.
//
// A stream is identified by (master_seed, stream_index). Its key is
//   key = mix64(mix64(master_seed) ^ mix64(stream_index + kStreamSalt))
// and the i-th raw output is mix64(key + (i + 1) * kGamma), i.e. SplitMix64
// started at `key`. mix64 is the SplitMix64/Stafford "variant 13" finalizer.
// Identical (seed, index) pairs therefore produce identical sequences on any
// platform, independent of how trials are scheduled across threads.
//
// Normals use Box-Muller on two 53-bit uniforms; the spare value is cached.
// All samplers are hand-written so sequences do not depend on the standard
// library's distribution implementations.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_index() const { return stream_index_; }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next_u64(); }
    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in (0, 1].
    double uniform_open_zero();
    // Uniform integer in [0, bound).
    std::uint64_t uniform_below(std::uint64_t bound);
    double normal();
    void fill_normal(std::span<double> out, double stddev = 1.0);
    // Poisson(mean) by multiplication of uniforms; means above 30 are split
    // into equal pieces, which is exact because Poisson laws add.
    std::uint64_t poisson(double mean);

    // Child stream for a sub-task; deterministic in (this stream's identity, child).
    RngStream split(std::uint64_t child) const;

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);

// Fisher-Yates with uniform_below, so the permutation does not depend on the
// standard library's std::shuffle.
template <typename T>
void shuffle_in_place(std::span<T> items, RngStream& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_below(i);
        std::swap(items[i - 1], items[j]);
    }
}

RngStream derive_stream(std::uint64_t master_seed, std::uint64_t index);

}  // namespace caution
