// SPDX-License-Identifier: Apache-2.0
#include "mowe/encoders.hpp"

#include <algorithm>

#include "mowe/error.hpp"
#include "mowe/ops.hpp"

namespace mowe {

namespace {

void validate(const EncoderSpec& s) {
    if (s.d_in == 0 || s.d_out == 0 || s.hidden == 0 || s.d_native == 0) {
        throw ConfigError("encoder '" + s.name + "': widths must be positive");
    }
    if (s.kernel == 0 || s.stride == 0) throw ConfigError("encoder '" + s.name + "': kernel and stride must be positive");
    if (s.kind == EncoderKind::Base && s.d_native != s.d_out) {
        throw ConfigError("base encoder '" + s.name + "' cannot interpolate its output");
    }
}

}  // namespace

Encoder::Encoder(EncoderSpec spec, Rng& rng) : spec_(std::move(spec)) {
    validate(spec_);
    input_ = Linear::init(spec_.d_in, spec_.hidden, rng);
    conv_ = Linear::init(spec_.kernel * spec_.hidden, spec_.hidden, rng);
    for (std::size_t i = 0; i < spec_.layers; ++i) blocks_.push_back(Linear::init(spec_.hidden, spec_.hidden, rng));
    output_ = Linear::init(spec_.hidden, spec_.d_native, rng);
}

Encoder Encoder::zeros(EncoderSpec spec) {
    validate(spec);
    Encoder e;
    e.spec_ = std::move(spec);
    e.input_ = Linear::zeros(e.spec_.d_in, e.spec_.hidden);
    e.conv_ = Linear::zeros(e.spec_.kernel * e.spec_.hidden, e.spec_.hidden);
    for (std::size_t i = 0; i < e.spec_.layers; ++i) e.blocks_.push_back(Linear::zeros(e.spec_.hidden, e.spec_.hidden));
    e.output_ = Linear::zeros(e.spec_.hidden, e.spec_.d_native);
    return e;
}

std::size_t Encoder::output_length(std::size_t seq_len) const {
    return (seq_len + spec_.stride - 1) / spec_.stride;
}

Tensor Encoder::forward(const Tensor& features) const {
    if (features.rank() != 2 || features.cols() != spec_.d_in) {
        throw DimensionError("encoder '" + spec_.name + "' expects [S×" + std::to_string(spec_.d_in) + "] input, got " +
                             shape_str(features.shape()));
    }
    Tensor h = ops::gelu(input_.forward(features));
    // Left pad kernel/2 frames, right pad enough that the output has ceil(S/stride) frames.
    const std::size_t s = features.rows();
    const std::size_t out_len = output_length(s);
    const std::size_t pad_left = spec_.kernel / 2;
    const std::size_t needed = (out_len - 1) * spec_.stride + spec_.kernel;
    const std::size_t pad_right = needed > s + pad_left ? needed - s - pad_left : 0;
    h = ops::gelu(ops::conv1d(h, conv_.weight, conv_.bias, spec_.kernel, spec_.stride, pad_left, pad_right));
    for (const auto& block : blocks_) h = ops::gelu(block.forward(h));
    Tensor z = output_.forward(h);
    if (spec_.d_native != spec_.d_out) z = ops::linear_interpolate_features(z, spec_.d_out);
    return z;
}

std::size_t Encoder::param_count() const {
    std::size_t n = input_.param_count() + conv_.param_count() + output_.param_count();
    for (const auto& b : blocks_) n += b.param_count();
    return n;
}

void Encoder::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    input_.collect(prefix + ".input", out);
    conv_.collect(prefix + ".conv", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
    output_.collect(prefix + ".output", out);
}

EncoderPool::EncoderPool(const PoolConfig& cfg, Rng& rng) {
    EncoderSpec base{"base", EncoderKind::Base, cfg.d_in, cfg.d_base, cfg.base_hidden, cfg.base_layers, cfg.d_base,
                     cfg.kernel, cfg.stride};
    Rng base_rng = rng.fork("base");
    base_ = Encoder(base, base_rng);
    for (std::size_t k = 0; k < cfg.weak_native.size(); ++k) {
        EncoderSpec w{"weak" + std::to_string(k), EncoderKind::Weak, cfg.d_in, cfg.d_weak, cfg.weak_hidden,
                      cfg.weak_layers, cfg.weak_native[k], cfg.kernel, cfg.stride};
        Rng weak_rng = rng.fork("weak" + std::to_string(k));
        weak_.emplace_back(w, weak_rng);
    }
}

EncoderPool::EncoderPool(Encoder base, std::vector<Encoder> weak) : base_(std::move(base)), weak_(std::move(weak)) {
    for (const auto& w : weak_) {
        if (w.spec().d_out != weak_.front().spec().d_out) {
            throw ConfigError("weak encoders must share one effective output width");
        }
        if (w.spec().stride != base_.spec().stride) {
            throw ConfigError("weak encoder '" + w.spec().name + "' changes the sequence length of the base encoder");
        }
    }
}

const Encoder& EncoderPool::weak(std::size_t k) const {
    if (k >= weak_.size()) {
        throw IndexError("weak encoder index " + std::to_string(k) + " out of range for pool of " +
                         std::to_string(weak_.size()));
    }
    return weak_[k];
}

void EncoderPool::collect(std::vector<NamedTensor>& out) const {
    base_.collect("encoders.base", out);
    for (std::size_t k = 0; k < weak_.size(); ++k) weak_[k].collect("encoders.weak" + std::to_string(k), out);
}

Tensor encode_base(const EncoderPool& pool, const FeatureSequence& a) { return pool.base().forward(a.features); }

Tensor encode_weak(const EncoderPool& pool, std::size_t k, const FeatureSequence& a) {
    return pool.weak(k).forward(a.features);
}

ParamCountReport count_params(const EncoderPool& pool) {
    ParamCountReport r;
    r.base = pool.base().param_count();
    r.total = r.base;
    std::size_t largest = 0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        r.weak.push_back(pool.weak(k).param_count());
        r.total += r.weak.back();
        largest = std::max(largest, r.weak.back());
    }
    r.min_ratio = largest ? static_cast<double>(r.base) / static_cast<double>(largest) : 0.0;
    return r;
}

}  // namespace mowe
