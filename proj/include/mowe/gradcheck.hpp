// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mowe/tensor.hpp"

namespace mowe {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct GradCheckOptions {
    double eps = 1e-5;
    /// Relative error is |autodiff − numeric| / max(|autodiff|, |numeric|, floor).
    double relative_floor = 1e-3;
    /// Upper bound on probed coordinates per tensor; 0 probes every entry.
    std::size_t max_entries_per_tensor = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t checked = 0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_autodiff = 0.0;
    double worst_numeric = 0.0;

    bool passed(double tolerance) const { return checked > 0 && max_relative_error < tolerance; }
};

/// Central finite differences against reverse-mode gradients. `f` must rebuild
/// its graph from the current parameter values on every call and return a
/// single-element tensor. Parameter values are restored before returning.
GradCheckReport check_gradients(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                                const GradCheckOptions& options = {});

}  // namespace mowe
