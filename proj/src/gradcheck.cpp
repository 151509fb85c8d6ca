// SPDX-License-Identifier: Apache-2.0
#include "mowe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mowe/error.hpp"
#include "mowe/rng.hpp"

namespace mowe {

GradCheckReport check_gradients(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                                const GradCheckOptions& options) {
    for (auto& p : params) {
        if (!p.tensor.requires_grad()) {
            throw ArgumentError("check_gradients: parameter '" + p.name + "' does not require grad");
        }
        p.tensor.zero_grad();
    }
    {
        Tensor root = f();
        root.backward();
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        const auto g = p.tensor.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    GradCheckReport report;
    Rng rng(options.seed, "gradcheck");
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& tensor = params[t].tensor;
        const std::size_t n = tensor.numel();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng.engine());
            coords.resize(options.max_entries_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        auto values = tensor.mutable_data();
        for (std::size_t i : coords) {
            const double original = values[i];
            values[i] = original + options.eps;
            const double up = f().item();
            values[i] = original - options.eps;
            const double down = f().item();
            values[i] = original;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double auto_g = analytic[t][i];
            const double abs_err = std::abs(auto_g - numeric);
            const double denom = std::max({std::abs(auto_g), std::abs(numeric), options.relative_floor});
            const double rel = abs_err / denom;
            ++report.checked;
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (rel > report.max_relative_error || report.checked == 1) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                report.worst_tensor = params[t].name;
                report.worst_index = i;
                report.worst_autodiff = auto_g;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace mowe
