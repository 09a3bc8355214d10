// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/rng.hpp"

#include <cmath>
#include <numbers>

namespace dualsplat {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    for (;;) {
        const std::uint64_t v = next_u64();
        if (v < limit) return v % n;
    }
}

Rng Rng::fork(std::uint64_t tag) const {
    return Rng(mix64(seed_ ^ mix64(tag + 0x632BE59BD9B4E019ULL)), 0);
}

}  // namespace dualsplat
