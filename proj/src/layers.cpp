// SPDX-License-Identifier: Apache-2.0
#include "mowe/layers.hpp"

#include <cmath>

#include "mowe/ops.hpp"

namespace mowe {

Tensor random_normal(Shape shape, double stddev, Rng& rng, bool requires_grad) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool trainable) {
    return {random_normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng, trainable),
            Tensor::zeros({out}, trainable)};
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool trainable) {
    return {Tensor::zeros({in, out}, trainable), Tensor::zeros({out}, trainable)};
}

Tensor Linear::forward(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

}  // namespace mowe
