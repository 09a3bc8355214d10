// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace dualsplat {

/// Counter-based generator (splitmix64 over seed + counter).
///
/// The full state is the (seed, counter) pair, so checkpoints can store it
/// exactly and a restored generator continues the same sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (consumes two draws, no cached spare).
    double normal();

    /// Uniform integer in [0, n), unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Independent stream keyed by `tag`.
    Rng fork(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace dualsplat
