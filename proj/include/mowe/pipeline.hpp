// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mowe/layers.hpp"
#include "mowe/tensor.hpp"

namespace mowe {

enum class AdapterKind { GroupedLinearGelu, StridedConv };

std::string to_string(AdapterKind k);
AdapterKind adapter_kind_from_string(const std::string& s);

struct AdapterSpec {
    AdapterKind kind = AdapterKind::GroupedLinearGelu;
    /// Audio-token count emitted by the grouped variant.
    std::size_t tokens = 100;
    std::size_t kernel = 8;
    std::size_t stride = 8;
    std::size_t d_out = 64;
};

/// Downsamples an embedding sequence to audio tokens, then GELU.
/// Grouped: S is zero-padded to group·T_a with group = ceil(S/T_a) and each
/// run of `group` frames is flattened through one linear map.
/// Strided: 1-D convolution with the configured kernel and stride.
class Adapter {
public:
    Adapter() = default;
    Adapter(AdapterSpec spec, std::size_t d_in, std::size_t seq_len, Rng& rng);

    const AdapterSpec& spec() const { return spec_; }
    std::size_t token_count() const;
    std::size_t group() const { return group_; }
    Tensor forward(const Tensor& z) const;
    const Linear& linear() const { return linear_; }
    Linear& linear() { return linear_; }
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

private:
    AdapterSpec spec_;
    std::size_t d_in_ = 0;
    std::size_t seq_len_ = 0;
    std::size_t group_ = 1;
    Linear linear_;
};

/// z_base ⊕_f z_mowe. An undefined or zero-width z_mowe returns z_base.
Tensor fuse_embeddings(const Tensor& z_base, const Tensor& z_mowe);
/// Same as `Adapter::forward`.
Tensor adapt(const Tensor& z, const Adapter& adapter);
/// Linear map of audio tokens into the decoder's model width.
Tensor project(const Tensor& z, const Linear& projection);

struct DecoderSpec {
    std::size_t vocab = 256;
    std::size_t d_model = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t mlp_mult = 4;
    std::size_t lora_rank = 4;
    double lora_alpha = 8.0;
};

/// Frozen weight W plus trainable low-rank factors: x·W + (α/r)·(x·A)·B.
struct LoraLinear {
    Tensor weight;  // [in×out], frozen
    Tensor a;       // [in×r]
    Tensor b;       // [r×out], zero at init
    double scale = 1.0;

    Tensor forward(const Tensor& x) const;
    /// W + scale·A·B, for inspection.
    Tensor effective_weight() const;
};

struct DecoderLayer {
    Tensor norm_attn;  // [d]
    LoraLinear q, k, v, o;
    Tensor norm_mlp;  // [d]
    Linear up;
    Linear down;
};

/// Audio token embeddings followed by text token ids. `labels()` places each
/// target at the position that predicts it; unsupervised positions are −1.
struct TokenBatch {
    Tensor audio;  // [T_a×d_model]
    std::vector<int> instruction;
    std::vector<int> targets;

    std::vector<int> input_ids() const;
    std::size_t length() const;
    std::vector<int> labels() const;
    std::vector<bool> loss_mask() const;
};

/// Tiny pre-norm causal transformer standing in for the language model. Base
/// weights never require grad; only the LoRA factors on the attention
/// projections are trainable.
class Decoder {
public:
    Decoder() = default;
    Decoder(DecoderSpec spec, Rng& rng);

    const DecoderSpec& spec() const { return spec_; }
    /// Logits for every position of the assembled sequence [(T_a + n)×vocab].
    Tensor forward(const Tensor& audio_tokens, std::span<const int> ids) const;
    std::vector<DecoderLayer>& layers() { return layers_; }
    const std::vector<DecoderLayer>& layers() const { return layers_; }
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
    std::size_t param_count() const;

private:
    Tensor positions(std::size_t n) const;

    DecoderSpec spec_;
    Tensor token_embedding_;  // [V×d]
    std::vector<DecoderLayer> layers_;
    Tensor norm_final_;
    Tensor lm_head_;  // [d×V]
};

Tensor decode(const TokenBatch& tokens, const Decoder& decoder);

struct LossBreakdown {
    Tensor total;
    Tensor next_token;
    Tensor routing;
};

/// L = L_next-token + weight·L_MoWE.
LossBreakdown loss_total(const Tensor& next_token, const Tensor& routing, double routing_weight = 0.1);

}  // namespace mowe
