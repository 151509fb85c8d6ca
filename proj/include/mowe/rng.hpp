// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mowe {

/// Seeded random stream. Every consumer of randomness gets its own labelled
/// stream derived from one run seed, so adding a draw in one component never
/// shifts the draws seen by another.
class Rng {
public:
    Rng(std::uint64_t seed, std::string label);

    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& label() const noexcept { return label_; }

    double normal(double mean = 0.0, double stddev = 1.0);
    double uniform(double lo = 0.0, double hi = 1.0);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    /// Child stream; equivalent to Rng(seed, label + "/" + suffix).
    Rng fork(std::string_view suffix) const;

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::string label_;
    std::mt19937_64 engine_;
};

/// Stable 64-bit mixing of a seed and a label (FNV-1a followed by splitmix64).
std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view label);

}  // namespace mowe
