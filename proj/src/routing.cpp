// SPDX-License-Identifier: Apache-2.0
#include "mowe/routing.hpp"

#include <cmath>

#include "mowe/error.hpp"
#include "mowe/ops.hpp"

namespace mowe {

std::vector<std::size_t> RouterDecision::active() const {
    std::vector<std::size_t> out;
    const auto g = gate.data();
    for (std::size_t k = 0; k < g.size(); ++k)
        if (g[k] != 0.0) out.push_back(k);
    return out;
}

std::size_t top1_index(std::span<const double> v) {
    if (v.empty()) throw ArgumentError("keep_top1: empty vector");
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best]) best = k;
    return best;
}

Tensor keep_top1(const Tensor& v) {
    if (v.rank() != 1) throw DimensionError("keep_top1: expected rank-1 tensor, got " + shape_str(v.shape()));
    const std::size_t k = top1_index(v.data());
    std::vector<double> out(v.numel(), 0.0);
    out[k] = v.data()[k];
    return make_result(v.shape(), std::move(out), {v},
                       [k](detail::Node& self) { self.parents[0]->grad[k] += self.grad[k]; }, "keep_top1");
}

IndepRouterParams make_indep_params(std::size_t m, Rng& rng) {
    if (m == 0) throw ConfigError("router over an empty pool");
    return {random_normal({m}, 1.0, rng, true)};
}

IndepRouterParams make_indep_prior(std::size_t m, std::size_t favored) {
    if (favored >= m) {
        throw IndexError("prior favours encoder " + std::to_string(favored) + " in a pool of " + std::to_string(m));
    }
    std::vector<double> w(m, -1.0);
    w[favored] = 1.0;
    return {Tensor({m}, std::move(w), true)};
}

DepRouterParams make_dep_params(std::size_t d_base, std::size_t m, Rng& rng) {
    if (m == 0) throw ConfigError("router over an empty pool");
    return {random_normal({d_base, m}, 1.0 / std::sqrt(static_cast<double>(d_base)), rng, true)};
}

Tensor smooth_gate(const Tensor& gate, double epsilon) { return ops::affine(gate, kSmoothKeep, kSmoothMix * epsilon); }

RouterDecision route_indep(const IndepRouterParams& params) {
    RouterDecision d;
    Tensor probs = ops::softmax(params.w_indep);
    d.selected = top1_index(probs.data());
    d.gate = keep_top1(probs);
    return d;
}

RouterDecision route_dep(const DepRouterParams& params, const Tensor& z_base, bool training, double epsilon_scale) {
    if (z_base.rank() != 2 || params.w_dep.rank() != 2 || z_base.cols() != params.w_dep.rows()) {
        throw DimensionError("route_dep: base embedding " + shape_str(z_base.shape()) + " incompatible with W_dep " +
                             shape_str(params.w_dep.shape()));
    }
    const std::size_t m = params.w_dep.cols();
    Tensor scores = ops::reshape(ops::matmul(ops::mean_over_sequence(z_base), params.w_dep), {m});
    RouterDecision d;
    Tensor probs = ops::softmax(scores);
    d.selected = top1_index(probs.data());
    d.gate = keep_top1(probs);
    if (training) {
        d.smoothed = true;
        d.epsilon = epsilon_scale / static_cast<double>(m);
        d.gate = smooth_gate(d.gate, d.epsilon);
    }
    return d;
}

Tensor mix(const EncoderPool& pool, const RouterDecision& decision, const FeatureSequence& a, WeakEncoderCache* cache) {
    if (decision.gate.numel() != pool.size()) {
        throw DimensionError("mix: gate of " + std::to_string(decision.gate.numel()) + " entries for a pool of " +
                             std::to_string(pool.size()));
    }
    WeakEncoderCache local;
    WeakEncoderCache& c = cache ? *cache : local;
    Tensor acc;
    for (std::size_t k : decision.active()) {
        auto it = c.outputs.find(k);
        if (it == c.outputs.end()) {
            it = c.outputs.emplace(k, encode_weak(pool, k, a)).first;
            ++c.evaluations;
        }
        Tensor term = ops::scale_by(it->second, ops::element(decision.gate, k));
        acc = acc.defined() ? ops::add(acc, term) : term;
    }
    if (!acc.defined()) {
        const std::size_t frames = pool.size() ? pool.weak(0).output_length(a.features.rows()) : a.features.rows();
        acc = Tensor::zeros({frames, pool.d_weak()});
    }
    return acc;
}

MixtureOutput mowe_forward(const EncoderPool& pool, const IndepRouterParams& indep, const DepRouterParams& dep,
                           const Tensor& z_base, const FeatureSequence& a, bool training, double epsilon_scale,
                           WeakEncoderCache* cache) {
    WeakEncoderCache local;
    WeakEncoderCache& c = cache ? *cache : local;
    MixtureOutput out;
    out.indep = route_indep(indep);
    out.dep = route_dep(dep, z_base, training, epsilon_scale);
    out.z_dep = mix(pool, out.dep, a, &c);
    out.z_indep = mix(pool, out.indep, a, &c);
    out.z_mowe = ops::concat_feature(out.z_dep, out.z_indep);
    return out;
}

Tensor loss_indep_entropy(const Tensor& r_indep) { return ops::scale(ops::sum(ops::xlogx(r_indep)), -1.0); }

namespace {

Tensor stack_gates(std::span<const Tensor> gates) {
    if (gates.empty()) throw ArgumentError("routing loss over an empty batch");
    std::vector<Tensor> rows;
    rows.reserve(gates.size());
    for (const auto& g : gates) rows.push_back(ops::reshape(g, {1, g.numel()}));
    return ops::concat_sequence(rows);
}

}  // namespace

Tensor loss_dep_entropy(std::span<const Tensor> gates) {
    Tensor stacked = stack_gates(gates);
    return ops::scale(ops::sum(ops::xlogx(stacked)), -1.0 / static_cast<double>(gates.size()));
}

Tensor loss_dep_diversity(std::span<const Tensor> gates) {
    return ops::sum(ops::xlogx(ops::mean_over_sequence(stack_gates(gates))));
}

Tensor loss_mowe(const Tensor& r_indep, std::span<const Tensor> dep_gates) {
    Tensor dep = ops::add(loss_dep_entropy(dep_gates), loss_dep_diversity(dep_gates));
    return ops::scale(ops::add(loss_indep_entropy(r_indep), dep), 0.5);
}

}  // namespace mowe
