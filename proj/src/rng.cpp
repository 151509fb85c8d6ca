// SPDX-License-Identifier: Apache-2.0
#include "mowe/rng.hpp"

#include <cmath>

namespace mowe {

std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), engine_(derive_stream_seed(seed_, label_)) {}

double Rng::normal(double mean, double stddev) {
    // Box-Muller on the raw engine keeps draws identical across standard libraries.
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::uniform(double lo, double hi) {
    const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) return 0;
    return static_cast<std::size_t>(engine_() % n);
}

Rng Rng::fork(std::string_view suffix) const {
    return Rng(seed_, label_ + "/" + std::string(suffix));
}

}  // namespace mowe
