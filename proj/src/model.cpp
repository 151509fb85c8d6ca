// SPDX-License-Identifier: Apache-2.0
#include "mowe/model.hpp"

#include <algorithm>

#include "mowe/error.hpp"
#include "mowe/ops.hpp"

namespace mowe {

std::string to_string(RouterKind k) { return k == RouterKind::Indep ? "indep" : "dep"; }

std::string to_string(RouterSetup s) {
    switch (s) {
        case RouterSetup::Off: return "off";
        case RouterSetup::Indep: return "indep";
        case RouterSetup::Dep: return "dep";
        case RouterSetup::IndepX2: return "indep-x2";
        case RouterSetup::DepX2: return "dep-x2";
        case RouterSetup::IndepDep: return "indep-dep";
    }
    return "off";
}

RouterSetup router_setup_from_string(const std::string& s) {
    for (RouterSetup r : {RouterSetup::Off, RouterSetup::Indep, RouterSetup::Dep, RouterSetup::IndepX2,
                          RouterSetup::DepX2, RouterSetup::IndepDep}) {
        if (to_string(r) == s) return r;
    }
    throw ConfigError("routing.setup must be one of off, indep, dep, indep-x2, dep-x2, indep-dep; got '" + s + "'");
}

std::vector<RouterKind> mixture_kinds(RouterSetup s) {
    switch (s) {
        case RouterSetup::Off: return {};
        case RouterSetup::Indep: return {RouterKind::Indep};
        case RouterSetup::Dep: return {RouterKind::Dep};
        case RouterSetup::IndepX2: return {RouterKind::Indep, RouterKind::Indep};
        case RouterSetup::DepX2: return {RouterKind::Dep, RouterKind::Dep};
        case RouterSetup::IndepDep: return {RouterKind::Dep, RouterKind::Indep};
    }
    return {};
}

MoweModel::MoweModel(ModelConfig cfg, std::size_t seq_len, std::uint64_t seed) : cfg_(std::move(cfg)), seq_len_(seq_len) {
    const auto kinds = mixture_kinds(cfg_.routing.setup);
    if (kinds.empty()) cfg_.pool.weak_native.clear();
    if (!kinds.empty() && cfg_.pool.weak_native.empty()) {
        throw ConfigError("routing.setup '" + to_string(cfg_.routing.setup) + "' needs at least one weak encoder");
    }
    if (cfg_.routing.indep_init != "gaussian" && cfg_.routing.indep_init != "prior") {
        throw ConfigError("routing.indep_init must be 'gaussian' or 'prior', got '" + cfg_.routing.indep_init + "'");
    }
    Rng rng(seed, "model");
    Rng pool_rng = rng.fork("encoders");
    pool_ = EncoderPool(cfg_.pool, pool_rng);
    const std::size_t m = pool_.size();
    std::size_t n_indep = 0, n_dep = 0;
    for (RouterKind kind : kinds) {
        Mixture mx;
        mx.kind = kind;
        if (kind == RouterKind::Indep) {
            Rng r = rng.fork("router/indep" + std::to_string(n_indep));
            mx.indep = cfg_.routing.indep_init == "prior" && n_indep == 0
                           ? make_indep_prior(m, cfg_.routing.prior_favored)
                           : make_indep_params(m, r);
            ++n_indep;
        } else {
            Rng r = rng.fork("router/dep" + std::to_string(n_dep++));
            mx.dep = make_dep_params(pool_.d_base(), m, r);
        }
        mixtures_.push_back(std::move(mx));
    }
    const std::size_t frames = pool_.base().output_length(seq_len_);
    const std::size_t fused = pool_.d_base() + kinds.size() * pool_.d_weak();
    Rng adapter_rng = rng.fork("adapter");
    adapter_ = Adapter(cfg_.adapter, fused, frames, adapter_rng);
    Rng proj_rng = rng.fork("projection");
    projection_ = Linear::init(cfg_.adapter.d_out, cfg_.decoder.d_model, proj_rng);
    Rng dec_rng = rng.fork("decoder");
    decoder_ = Decoder(cfg_.decoder, dec_rng);
}

Tensor MoweModel::mixture_embedding(const Tensor& z_base, const FeatureSequence& a, bool training,
                                    std::vector<RouterDecision>& decisions, WeakEncoderCache& cache) const {
    std::vector<Tensor> parts;
    for (const auto& mx : mixtures_) {
        RouterDecision d = mx.kind == RouterKind::Indep
                               ? route_indep(mx.indep)
                               : route_dep(mx.dep, z_base, training && cfg_.routing.smoothing, cfg_.routing.epsilon_scale);
        parts.push_back(mix(pool_, d, a, &cache));
        decisions.push_back(std::move(d));
    }
    if (parts.empty()) return {};
    return parts.size() == 1 ? parts.front() : ops::concat_feature(parts);
}

SampleForward MoweModel::forward(const FeatureSequence& a, bool training) const {
    SampleForward out;
    Tensor z_base = encode_base(pool_, a);
    WeakEncoderCache cache;
    Tensor z_mowe = mixture_embedding(z_base, a, training, out.decisions, cache);
    out.weak_evaluations = cache.evaluations;
    for (const auto& [k, _] : cache.outputs) out.evaluated_encoders.push_back(k);
    Tensor fused = fuse_embeddings(z_base, z_mowe);
    TokenBatch tokens{project(adapt(fused, adapter_), projection_), a.instruction, a.targets};
    out.logits = decode(tokens, decoder_);
    out.labels = tokens.labels();
    return out;
}

RoutingLossParts MoweModel::routing_losses(std::span<const SampleForward> samples) const {
    RoutingLossParts parts;
    if (samples.empty()) throw ArgumentError("routing loss over an empty batch");
    auto accumulate = [](Tensor& acc, const Tensor& t) { acc = acc.defined() ? ops::add(acc, t) : t; };
    for (std::size_t m = 0; m < mixtures_.size(); ++m) {
        if (mixtures_[m].kind == RouterKind::Indep) {
            // The independent gate is identical across the batch.
            if (cfg_.routing.entropy_loss) accumulate(parts.indep_entropy, loss_indep_entropy(samples[0].decisions[m].gate));
            continue;
        }
        std::vector<Tensor> gates;
        gates.reserve(samples.size());
        for (const auto& s : samples) gates.push_back(s.decisions[m].gate);
        if (cfg_.routing.entropy_loss) accumulate(parts.dep_entropy, loss_dep_entropy(gates));
        if (cfg_.routing.diversity_loss) accumulate(parts.dep_diversity, loss_dep_diversity(gates));
    }
    Tensor sum;
    for (const Tensor* t : {&parts.indep_entropy, &parts.dep_entropy, &parts.dep_diversity}) {
        if (t->defined()) accumulate(sum, *t);
    }
    for (Tensor* t : {&parts.indep_entropy, &parts.dep_entropy, &parts.dep_diversity}) {
        if (!t->defined()) *t = Tensor::scalar(0.0);
    }
    parts.total = sum.defined() ? ops::scale(sum, 0.5) : Tensor::scalar(0.0);
    return parts;
}

BatchForward MoweModel::forward_batch(std::span<const FeatureSequence* const> batch, bool training,
                                      double routing_weight) const {
    if (batch.empty()) throw ArgumentError("forward_batch: empty batch");
    BatchForward out;
    std::vector<Tensor> ce;
    ce.reserve(batch.size());
    for (const FeatureSequence* a : batch) {
        out.samples.push_back(forward(*a, training));
        ce.push_back(ops::cross_entropy_rows(out.samples.back().logits, out.samples.back().labels));
    }
    // Every sample has the same number of targets, so the mean of per-sample
    // means equals the mean over all supervised positions.
    Tensor total = ce.front();
    for (std::size_t i = 1; i < ce.size(); ++i) total = ops::add(total, ce[i]);
    out.next_token = ops::scale(total, 1.0 / static_cast<double>(ce.size()));
    out.routing = routing_losses(out.samples);
    out.loss = loss_total(out.next_token, out.routing.total, routing_weight);
    return out;
}

std::vector<NamedTensor> MoweModel::parameters() const {
    std::vector<NamedTensor> out;
    pool_.collect(out);
    for (std::size_t m = 0; m < mixtures_.size(); ++m) {
        const std::string p = "routers." + std::to_string(m);
        if (mixtures_[m].kind == RouterKind::Indep) out.push_back({p + ".w_indep", mixtures_[m].indep.w_indep});
        else out.push_back({p + ".w_dep", mixtures_[m].dep.w_dep});
    }
    adapter_.collect("adapter", out);
    projection_.collect("projection", out);
    decoder_.collect("decoder", out);
    return out;
}

std::vector<NamedTensor> MoweModel::trainable() const {
    auto all = parameters();
    std::erase_if(all, [](const NamedTensor& t) { return !t.tensor.requires_grad(); });
    return all;
}

std::size_t MoweModel::param_count() const {
    std::size_t n = 0;
    for (const auto& t : parameters()) n += t.tensor.numel();
    return n;
}

std::size_t MoweModel::active_params(std::span<const std::size_t> evaluated_weak) const {
    std::size_t n = param_count();
    for (std::size_t k = 0; k < pool_.size(); ++k) {
        if (std::find(evaluated_weak.begin(), evaluated_weak.end(), k) == evaluated_weak.end()) {
            n -= pool_.weak(k).param_count();
        }
    }
    return n;
}

std::size_t MoweModel::active_encoder_params(std::span<const std::size_t> evaluated_weak) const {
    std::size_t n = pool_.base().param_count();
    for (std::size_t k : evaluated_weak) n += pool_.weak(k).param_count();
    return n;
}

}  // namespace mowe
