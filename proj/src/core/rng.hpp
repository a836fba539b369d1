// Copyright (c) 2026 the seqrec authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based pseudo-random generator: Philox4x64-10 (Salmon et al.).
// Every random decision in the library flows from one experiment seed through
// named streams derived with split(), so runs are reproducible and individual
// consumers (trials, users, epochs) can draw independently in any order.
//
// Stream layout, fixed so other implementations can match draws exactly:
//   key     = { seed, stream }
//   counter = { block, 0, 0, 0 }, block starts at 0 and increments per block
//   each block yields four u64 outputs, consumed in order out[0..3]
//   child stream ids come from mix64(stream, label), see below.

#pragma once

#include <array>
#include <cstdint>

namespace seqrec {

// SplitMix64 finalizer over (a, b); used to derive child stream ids.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// One Philox4x64-10 block.
std::array<std::uint64_t, 4> philox4x64(const std::array<std::uint64_t, 4>& counter,
                                        const std::array<std::uint64_t, 2>& key);

class Rng {
public:
    Rng() : Rng(0, 0) {}
    Rng(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream), block_(0), index_(4) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Independent child stream; deterministic in (stream, label). Splitting
    // never perturbs this generator's own sequence.
    Rng split(std::uint64_t label) const { return Rng(seed_, mix64(stream_, label)); }

    std::uint64_t next_u64() {
        if (index_ == 4) {
            buffer_ = philox4x64({block_, 0, 0, 0}, {seed_, stream_});
            ++block_;
            index_ = 0;
        }
        return buffer_[index_++];
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller; draws two uniforms per pair.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_;
    int index_;
    std::array<std::uint64_t, 4> buffer_{};
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

}  // namespace seqrec
