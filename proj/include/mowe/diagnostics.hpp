// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mowe/gradcheck.hpp"
#include "mowe/model.hpp"

namespace mowe {

struct GradFamilyResult {
    std::string family;
    double tolerance = 1e-4;
    GradCheckReport report;
    double seconds = 0.0;

    bool passed() const { return report.passed(tolerance); }
};

/// Small model used for the end-to-end gradient check (2 samples, every
/// component present, LoRA B factors randomised so A receives gradient).
ModelConfig toy_model_config();
DataConfig toy_data_config();

/// Finite-difference check of every differentiable operation family plus
/// the full training loss on a 2-sample toy batch. Op families use
/// tolerance 1e-4, composite models 1e-3.
std::vector<GradFamilyResult> run_gradient_suite(std::uint64_t seed, double eps = 1e-5);

}  // namespace mowe
