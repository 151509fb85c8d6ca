// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <vector>

#include "mowe/encoders.hpp"
#include "mowe/tensor.hpp"

namespace mowe {

/// Gate mixing weight applied to r during training: r ← kSmoothKeep·r + kSmoothMix·ε.
inline constexpr double kSmoothKeep = 0.9;
inline constexpr double kSmoothMix = 0.1;
inline constexpr double kDefaultEpsilonScale = 0.1;

struct IndepRouterParams {
    Tensor w_indep;  // [M]
};

struct DepRouterParams {
    Tensor w_dep;  // [d_base×M]
};

struct RouterDecision {
    Tensor gate;  // [M]
    std::size_t selected = 0;
    bool smoothed = false;
    double epsilon = 0.0;

    /// Indices with a nonzero gate weight, ascending.
    std::vector<std::size_t> active() const;
};

struct MixtureOutput {
    Tensor z_dep;
    Tensor z_indep;
    Tensor z_mowe;
    RouterDecision dep;
    RouterDecision indep;
};

/// Weak-encoder outputs computed for one sample, shared between the mixtures
/// of that sample. `evaluations` counts actual forward passes.
struct WeakEncoderCache {
    std::map<std::size_t, Tensor> outputs;
    std::size_t evaluations = 0;
};

/// Keeps the argmax entry (lowest index on ties) and zeroes the rest.
/// Gradient flows only through the kept entry.
Tensor keep_top1(const Tensor& v);
/// Index keep_top1 would keep.
std::size_t top1_index(std::span<const double> v);

IndepRouterParams make_indep_params(std::size_t m, Rng& rng);
/// The ±1 prior: +1 at `favored`, −1 elsewhere.
IndepRouterParams make_indep_prior(std::size_t m, std::size_t favored);
DepRouterParams make_dep_params(std::size_t d_base, std::size_t m, Rng& rng);

/// r_indep = KeepTop1(Softmax(w_indep)); never smoothed.
RouterDecision route_indep(const IndepRouterParams& params);
/// r = KeepTop1(Softmax(mean(z_base)·W_dep)); in training mode smoothed with
/// ε = epsilon_scale / M.
RouterDecision route_dep(const DepRouterParams& params, const Tensor& z_base, bool training,
                         double epsilon_scale = kDefaultEpsilonScale);
/// The smoothing step on its own, for gates built elsewhere.
Tensor smooth_gate(const Tensor& gate, double epsilon);

/// Σ_k r[k]·E_k(a) over the nonzero entries of r. Encoders with zero weight
/// are never evaluated. An all-zero gate yields zeros of shape [S'×d_weak].
Tensor mix(const EncoderPool& pool, const RouterDecision& decision, const FeatureSequence& a,
           WeakEncoderCache* cache = nullptr);

/// One independent and one dependent mixture; z_mowe = z_dep ⊕ z_indep.
MixtureOutput mowe_forward(const EncoderPool& pool, const IndepRouterParams& indep, const DepRouterParams& dep,
                           const Tensor& z_base, const FeatureSequence& a, bool training,
                           double epsilon_scale = kDefaultEpsilonScale, WeakEncoderCache* cache = nullptr);

/// −Σ r·log r.
Tensor loss_indep_entropy(const Tensor& r_indep);
/// Batch mean of −Σ r_i·log r_i.
Tensor loss_dep_entropy(std::span<const Tensor> gates);
/// Σ r̄·log r̄ for the batch-mean gate r̄.
Tensor loss_dep_diversity(std::span<const Tensor> gates);
/// ½·[L_indep-ent + (L_dep-ent + L_dep-div)].
Tensor loss_mowe(const Tensor& r_indep, std::span<const Tensor> dep_gates);

}  // namespace mowe
