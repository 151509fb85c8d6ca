// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mowe/gradcheck.hpp"
#include "mowe/rng.hpp"
#include "mowe/tensor.hpp"

namespace mowe {

/// Affine map x·W + b with W stored [in×out].
struct Linear {
    Tensor weight;
    Tensor bias;

    /// Weights ~ N(0, 1/in), zero bias.
    static Linear init(std::size_t in, std::size_t out, Rng& rng, bool trainable = true);
    static Linear zeros(std::size_t in, std::size_t out, bool trainable = true);

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    std::size_t param_count() const { return weight.numel() + bias.numel(); }

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor random_normal(Shape shape, double stddev, Rng& rng, bool requires_grad);

}  // namespace mowe
