// SPDX-License-Identifier: Apache-2.0
#include "mowe/pipeline.hpp"

#include <cmath>

#include "mowe/error.hpp"
#include "mowe/ops.hpp"

namespace mowe {

std::string to_string(AdapterKind k) {
    return k == AdapterKind::GroupedLinearGelu ? "grouped-linear-gelu" : "strided-conv";
}

AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "grouped-linear-gelu") return AdapterKind::GroupedLinearGelu;
    if (s == "strided-conv") return AdapterKind::StridedConv;
    throw ConfigError("pipeline.adapter must be 'grouped-linear-gelu' or 'strided-conv', got '" + s + "'");
}

Adapter::Adapter(AdapterSpec spec, std::size_t d_in, std::size_t seq_len, Rng& rng)
    : spec_(spec), d_in_(d_in), seq_len_(seq_len) {
    if (spec_.kind == AdapterKind::GroupedLinearGelu) {
        if (spec_.tokens == 0) throw ConfigError("pipeline.adapter_tokens must be positive");
        if (seq_len_ < spec_.tokens) {
            throw ConfigError("grouped adapter needs at least " + std::to_string(spec_.tokens) +
                              " encoder frames but the encoders emit " + std::to_string(seq_len_) +
                              "; lower pipeline.adapter_tokens or the encoder stride, or lengthen data.seq_len");
        }
        group_ = (seq_len_ + spec_.tokens - 1) / spec_.tokens;
    } else {
        if (spec_.kernel == 0 || spec_.stride == 0) throw ConfigError("conv adapter kernel and stride must be positive");
        group_ = spec_.kernel;
    }
    linear_ = Linear::init(group_ * d_in_, spec_.d_out, rng);
}

std::size_t Adapter::token_count() const {
    if (spec_.kind == AdapterKind::GroupedLinearGelu) return spec_.tokens;
    return (seq_len_ + spec_.stride - 1) / spec_.stride;
}

Tensor Adapter::forward(const Tensor& z) const {
    if (z.rank() != 2 || z.rows() != seq_len_ || z.cols() != d_in_) {
        throw DimensionError("adapter expects [" + std::to_string(seq_len_) + "x" + std::to_string(d_in_) +
                             "] embeddings, got " + shape_str(z.shape()));
    }
    if (spec_.kind == AdapterKind::GroupedLinearGelu) {
        return ops::gelu(linear_.forward(ops::group_frames(ops::pad_rows(z, group_ * spec_.tokens), group_)));
    }
    const std::size_t out_len = token_count();
    const std::size_t needed = (out_len - 1) * spec_.stride + spec_.kernel;
    const std::size_t pad_right = needed > seq_len_ ? needed - seq_len_ : 0;
    return ops::gelu(ops::conv1d(z, linear_.weight, linear_.bias, spec_.kernel, spec_.stride, 0, pad_right));
}

void Adapter::collect(const std::string& prefix, std::vector<NamedTensor>& out) const { linear_.collect(prefix, out); }

Tensor fuse_embeddings(const Tensor& z_base, const Tensor& z_mowe) {
    if (!z_mowe.defined() || z_mowe.numel() == 0) {
        if (z_mowe.defined() && z_mowe.rows() != z_base.rows()) {
            throw DimensionError("fuse_embeddings: sequence length mismatch " + shape_str(z_base.shape()) + " vs " +
                                 shape_str(z_mowe.shape()));
        }
        return z_base;
    }
    return ops::concat_feature(z_base, z_mowe);
}

Tensor adapt(const Tensor& z, const Adapter& adapter) { return adapter.forward(z); }

Tensor project(const Tensor& z, const Linear& projection) { return projection.forward(z); }

Tensor LoraLinear::forward(const Tensor& x) const {
    Tensor base = ops::matmul(x, weight);
    Tensor low = ops::matmul(ops::matmul(x, a), b);
    return ops::add(base, ops::scale(low, scale));
}

Tensor LoraLinear::effective_weight() const {
    NoGradGuard guard;
    return ops::add(weight, ops::scale(ops::matmul(a, b), scale));
}

std::vector<int> TokenBatch::input_ids() const {
    std::vector<int> ids = instruction;
    if (!targets.empty()) ids.insert(ids.end(), targets.begin(), targets.end() - 1);
    return ids;
}

std::size_t TokenBatch::length() const { return audio.rows() + input_ids().size(); }

std::vector<int> TokenBatch::labels() const {
    const std::size_t n = length();
    std::vector<int> labels(n, -1);
    // The last instruction position predicts target 0, and so on.
    const std::size_t first = audio.rows() + instruction.size() - 1;
    for (std::size_t j = 0; j < targets.size(); ++j) labels[first + j] = targets[j];
    return labels;
}

std::vector<bool> TokenBatch::loss_mask() const {
    const auto l = labels();
    std::vector<bool> mask(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) mask[i] = l[i] >= 0;
    return mask;
}

namespace {

LoraLinear make_lora(std::size_t in, std::size_t out, const DecoderSpec& spec, Rng& rng) {
    LoraLinear l;
    l.weight = random_normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng, false);
    l.a = random_normal({in, spec.lora_rank}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true);
    l.b = Tensor::zeros({spec.lora_rank, out}, true);
    l.scale = spec.lora_alpha / static_cast<double>(spec.lora_rank);
    return l;
}

}  // namespace

Decoder::Decoder(DecoderSpec spec, Rng& rng) : spec_(spec) {
    if (spec_.lora_rank == 0) throw ConfigError("pipeline.lora_rank must be at least 1");
    if (spec_.heads == 0 || spec_.d_model % spec_.heads != 0) {
        throw ConfigError("pipeline.d_model must be divisible by pipeline.heads");
    }
    const std::size_t d = spec_.d_model;
    token_embedding_ = random_normal({spec_.vocab, d}, 1.0, rng, false);
    for (std::size_t i = 0; i < spec_.layers; ++i) {
        DecoderLayer layer;
        layer.norm_attn = Tensor::full({d}, 1.0);
        layer.q = make_lora(d, d, spec_, rng);
        layer.k = make_lora(d, d, spec_, rng);
        layer.v = make_lora(d, d, spec_, rng);
        layer.o = make_lora(d, d, spec_, rng);
        layer.norm_mlp = Tensor::full({d}, 1.0);
        layer.up = Linear::init(d, spec_.mlp_mult * d, rng, false);
        layer.down = Linear::init(spec_.mlp_mult * d, d, rng, false);
        layers_.push_back(std::move(layer));
    }
    norm_final_ = Tensor::full({d}, 1.0);
    lm_head_ = random_normal({d, spec_.vocab}, 1.0 / std::sqrt(static_cast<double>(d)), rng, false);
}

Tensor Decoder::positions(std::size_t n) const {
    const std::size_t d = spec_.d_model;
    std::vector<double> pe(n * d);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe[p * d + i] = std::sin(static_cast<double>(p) * freq);
            if (i + 1 < d) pe[p * d + i + 1] = std::cos(static_cast<double>(p) * freq);
        }
    }
    return Tensor({n, d}, std::move(pe));
}

Tensor Decoder::forward(const Tensor& audio_tokens, std::span<const int> ids) const {
    const std::size_t d = spec_.d_model;
    if (audio_tokens.rank() != 2 || audio_tokens.cols() != d) {
        throw DimensionError("decoder expects audio tokens [T×" + std::to_string(d) + "], got " +
                             shape_str(audio_tokens.shape()));
    }
    Tensor x = ids.empty() ? audio_tokens : ops::concat_sequence(audio_tokens, ops::embedding(token_embedding_, ids));
    const std::size_t n = x.rows();
    x = ops::add(x, positions(n));
    const std::size_t dh = d / spec_.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& layer : layers_) {
        Tensor h = ops::rms_norm_rows(x, layer.norm_attn);
        Tensor q = layer.q.forward(h);
        Tensor k = layer.k.forward(h);
        Tensor v = layer.v.forward(h);
        std::vector<Tensor> heads;
        heads.reserve(spec_.heads);
        for (std::size_t hd = 0; hd < spec_.heads; ++hd) {
            Tensor qh = ops::slice_cols(q, hd * dh, dh);
            Tensor kh = ops::slice_cols(k, hd * dh, dh);
            Tensor vh = ops::slice_cols(v, hd * dh, dh);
            Tensor att = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt), true);
            heads.push_back(ops::matmul(att, vh));
        }
        x = ops::add(x, layer.o.forward(ops::concat_feature(heads)));
        Tensor m = ops::rms_norm_rows(x, layer.norm_mlp);
        x = ops::add(x, layer.down.forward(ops::gelu(layer.up.forward(m))));
    }
    return ops::matmul(ops::rms_norm_rows(x, norm_final_), lm_head_);
}

void Decoder::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".token_embedding", token_embedding_});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const std::string p = prefix + ".layer" + std::to_string(i);
        out.push_back({p + ".norm_attn", l.norm_attn});
        const std::pair<const char*, const LoraLinear*> proj[] = {{"q", &l.q}, {"k", &l.k}, {"v", &l.v}, {"o", &l.o}};
        for (const auto& [name, lora] : proj) {
            out.push_back({p + "." + name + ".weight", lora->weight});
            out.push_back({p + "." + name + ".lora_a", lora->a});
            out.push_back({p + "." + name + ".lora_b", lora->b});
        }
        out.push_back({p + ".norm_mlp", l.norm_mlp});
        l.up.collect(p + ".up", out);
        l.down.collect(p + ".down", out);
    }
    out.push_back({prefix + ".norm_final", norm_final_});
    out.push_back({prefix + ".lm_head", lm_head_});
}

std::size_t Decoder::param_count() const {
    std::vector<NamedTensor> all;
    collect("decoder", all);
    std::size_t n = 0;
    for (const auto& t : all) n += t.tensor.numel();
    return n;
}

Tensor decode(const TokenBatch& tokens, const Decoder& decoder) {
    const auto ids = tokens.input_ids();
    return decoder.forward(tokens.audio, ids);
}

LossBreakdown loss_total(const Tensor& next_token, const Tensor& routing, double routing_weight) {
    LossBreakdown out;
    out.next_token = next_token;
    out.routing = routing.defined() ? routing : Tensor::scalar(0.0);
    out.total = ops::add(next_token, ops::scale(out.routing, routing_weight));
    return out;
}

}  // namespace mowe
