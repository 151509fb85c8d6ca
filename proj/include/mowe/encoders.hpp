// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "mowe/layers.hpp"
#include "mowe/synthdata.hpp"

namespace mowe {

enum class EncoderKind { Base, Weak };

struct EncoderSpec {
    std::string name;
    EncoderKind kind = EncoderKind::Weak;
    std::size_t d_in = 16;
    /// Effective output width (d_base for the base encoder, d_weak for weak ones).
    std::size_t d_out = 16;
    std::size_t hidden = 16;
    /// Extra (linear → GELU) blocks after the temporal convolution.
    std::size_t layers = 0;
    /// Width the network emits before interpolation to d_out.
    std::size_t d_native = 16;
    std::size_t kernel = 3;
    std::size_t stride = 2;
};

/// Per-frame (linear → GELU), one strided temporal convolution (→ GELU),
/// `layers` further (linear → GELU) blocks, and a linear read-out. Output
/// is linearly interpolated from d_native to d_out when they differ.
class Encoder {
public:
    Encoder() = default;
    Encoder(EncoderSpec spec, Rng& rng);
    static Encoder zeros(EncoderSpec spec);

    const EncoderSpec& spec() const { return spec_; }
    Tensor forward(const Tensor& features) const;
    std::size_t output_length(std::size_t seq_len) const;
    std::size_t param_count() const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

private:
    EncoderSpec spec_;
    Linear input_;
    Linear conv_;  // weight [(kernel·hidden)×hidden]
    std::vector<Linear> blocks_;
    Linear output_;
};

struct PoolConfig {
    std::size_t d_in = 16;
    std::size_t d_base = 64;
    std::size_t base_hidden = 64;
    std::size_t base_layers = 1;
    std::size_t d_weak = 16;
    std::size_t weak_hidden = 16;
    std::size_t weak_layers = 0;
    /// Native output width per weak encoder; its length is the pool size M.
    std::vector<std::size_t> weak_native = {16, 16, 24, 24};
    std::size_t kernel = 3;
    std::size_t stride = 2;
};

/// Strong base encoder plus an index-addressable pool of M weak encoders.
class EncoderPool {
public:
    EncoderPool() = default;
    EncoderPool(const PoolConfig& cfg, Rng& rng);
    EncoderPool(Encoder base, std::vector<Encoder> weak);

    const Encoder& base() const { return base_; }
    const Encoder& weak(std::size_t k) const;
    std::size_t size() const { return weak_.size(); }
    std::size_t d_base() const { return base_.spec().d_out; }
    /// Common output width of the weak encoders (0 for an empty pool).
    std::size_t d_weak() const { return weak_.empty() ? 0 : weak_.front().spec().d_out; }
    void collect(std::vector<NamedTensor>& out) const;

private:
    Encoder base_;
    std::vector<Encoder> weak_;
};

/// z_base for one sample.
Tensor encode_base(const EncoderPool& pool, const FeatureSequence& a);
/// E_k(a); throws IndexError when k ≥ M.
Tensor encode_weak(const EncoderPool& pool, std::size_t k, const FeatureSequence& a);

struct ParamCountReport {
    std::size_t base = 0;
    std::vector<std::size_t> weak;
    std::size_t total = 0;
    /// base / largest weak encoder.
    double min_ratio = 0.0;
};

ParamCountReport count_params(const EncoderPool& pool);

}  // namespace mowe
