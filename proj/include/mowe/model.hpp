// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mowe/encoders.hpp"
#include "mowe/pipeline.hpp"
#include "mowe/routing.hpp"
#include "mowe/synthdata.hpp"

namespace mowe {

enum class RouterKind { Indep, Dep };

std::string to_string(RouterKind k);

/// Router arrangements of the ablation matrix.
enum class RouterSetup { Off, Indep, Dep, IndepX2, DepX2, IndepDep };

std::string to_string(RouterSetup s);
RouterSetup router_setup_from_string(const std::string& s);
/// Mixture kinds in concatenation order (dependent mixtures first).
std::vector<RouterKind> mixture_kinds(RouterSetup s);

struct RoutingConfig {
    RouterSetup setup = RouterSetup::IndepDep;
    double epsilon_scale = kDefaultEpsilonScale;
    /// Training-time gate smoothing of the dependent routers.
    bool smoothing = true;
    bool entropy_loss = true;
    bool diversity_loss = true;
    /// "gaussian" draws w_indep ~ N(0, 1); "prior" uses +1 at prior_favored, −1 elsewhere.
    std::string indep_init = "gaussian";
    std::size_t prior_favored = 0;
};

struct ModelConfig {
    PoolConfig pool;
    RoutingConfig routing;
    AdapterSpec adapter;
    DecoderSpec decoder;
};

struct Mixture {
    RouterKind kind = RouterKind::Dep;
    IndepRouterParams indep;
    DepRouterParams dep;
};

struct SampleForward {
    Tensor logits;
    std::vector<int> labels;
    /// One decision per mixture, in mixture order.
    std::vector<RouterDecision> decisions;
    std::vector<std::size_t> evaluated_encoders;
    std::size_t weak_evaluations = 0;
};

struct RoutingLossParts {
    Tensor indep_entropy;
    Tensor dep_entropy;
    Tensor dep_diversity;
    /// ½·Σ over mixtures of (indep-ent) or (dep-ent + dep-div).
    Tensor total;
};

struct BatchForward {
    std::vector<SampleForward> samples;
    Tensor next_token;
    RoutingLossParts routing;
    LossBreakdown loss;
};

/// Base encoder, weak pool with its routers, adapter, projection and the
/// LoRA-adapted decoder, wired into one forward pass.
class MoweModel {
public:
    MoweModel() = default;
    MoweModel(ModelConfig cfg, std::size_t seq_len, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::size_t seq_len() const { return seq_len_; }
    const EncoderPool& pool() const { return pool_; }
    const std::vector<Mixture>& mixtures() const { return mixtures_; }
    std::vector<Mixture>& mixtures() { return mixtures_; }
    const Adapter& adapter() const { return adapter_; }
    const Linear& projection() const { return projection_; }
    const Decoder& decoder() const { return decoder_; }
    Decoder& decoder() { return decoder_; }

    /// z_mowe for one sample from a precomputed z_base.
    Tensor mixture_embedding(const Tensor& z_base, const FeatureSequence& a, bool training,
                             std::vector<RouterDecision>& decisions, WeakEncoderCache& cache) const;
    SampleForward forward(const FeatureSequence& a, bool training) const;
    BatchForward forward_batch(std::span<const FeatureSequence* const> batch, bool training,
                               double routing_weight) const;
    RoutingLossParts routing_losses(std::span<const SampleForward> samples) const;

    /// All tensors, frozen ones included, in a stable order.
    std::vector<NamedTensor> parameters() const;
    std::vector<NamedTensor> trainable() const;
    std::size_t param_count() const;

    /// Parameters touched for one sample: everything except weak encoders
    /// that were not evaluated.
    std::size_t active_params(std::span<const std::size_t> evaluated_weak) const;
    /// Base encoder plus the evaluated weak encoders.
    std::size_t active_encoder_params(std::span<const std::size_t> evaluated_weak) const;

private:
    ModelConfig cfg_;
    std::size_t seq_len_ = 0;
    EncoderPool pool_;
    std::vector<Mixture> mixtures_;
    Adapter adapter_;
    Linear projection_;
    Decoder decoder_;
};

}  // namespace mowe
