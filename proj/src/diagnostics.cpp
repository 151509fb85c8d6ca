// SPDX-License-Identifier: Apache-2.0
#include "mowe/diagnostics.hpp"

#include <chrono>

#include "mowe/ops.hpp"
#include "mowe/routing.hpp"
#include "mowe/synthdata.hpp"

namespace mowe {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0, bool grad = true) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), grad);
}

// Σ w⊙y with a fixed random w, so every output entry contributes a distinct weight.
Tensor probe(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

struct Suite {
    Rng rng;
    double eps;
    std::vector<GradFamilyResult> out;

    void run(const std::string& family, double tol, const std::function<Tensor()>& f,
             std::vector<NamedTensor> params, std::size_t max_entries = 0) {
        const auto start = std::chrono::steady_clock::now();
        GradCheckOptions opts;
        opts.eps = eps;
        opts.max_entries_per_tensor = max_entries;
        opts.seed = rng.seed();
        GradFamilyResult r;
        r.family = family;
        r.tolerance = tol;
        r.report = check_gradients(f, std::move(params), opts);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.push_back(std::move(r));
    }

    // Probe weights shaped like the output of `f`, evaluated without a graph.
    Tensor weights(const std::function<Tensor()>& f) {
        Shape shape;
        {
            NoGradGuard g;
            shape = f().shape();
        }
        return uniform(shape, rng, -1.0, 1.0, false);
    }

    // One-input family: f(x) = probe(op(x)).
    void unary(const std::string& family, Tensor x, const std::function<Tensor(const Tensor&)>& op) {
        const Tensor w = weights([&] { return op(x); });
        run(family, 1e-4, [=] { return probe(op(x), w); }, {{"x", x}});
    }

    void binary(const std::string& family, Tensor a, Tensor b,
                const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
        const Tensor w = weights([&] { return op(a, b); });
        run(family, 1e-4, [=] { return probe(op(a, b), w); }, {{"a", a}, {"b", b}});
    }
};

}  // namespace

DataConfig toy_data_config() {
    DataConfig d;
    d.seq_len = 16;
    d.d_in = 8;
    d.samples_per_task = 1;
    return d;
}

ModelConfig toy_model_config() {
    ModelConfig m;
    m.pool.d_in = 8;
    m.pool.d_base = 8;
    m.pool.base_hidden = 8;
    m.pool.base_layers = 1;
    m.pool.d_weak = 4;
    m.pool.weak_hidden = 4;
    m.pool.weak_native = {4, 4, 6, 6};
    m.adapter.tokens = 4;
    m.adapter.d_out = 8;
    m.decoder.vocab = 80;
    m.decoder.d_model = 8;
    m.decoder.layers = 1;
    m.decoder.heads = 2;
    m.decoder.mlp_mult = 2;
    m.decoder.lora_rank = 2;
    m.decoder.lora_alpha = 4.0;
    return m;
}

std::vector<GradFamilyResult> run_gradient_suite(std::uint64_t seed, double eps) {
    Suite s{Rng(seed, "gradcheck"), eps, {}};
    Rng& rng = s.rng;

    s.binary("matmul", uniform({3, 4}, rng), uniform({4, 2}, rng), ops::matmul);
    s.binary("add", uniform({3, 4}, rng), uniform({3, 4}, rng), ops::add);
    s.binary("sub", uniform({3, 4}, rng), uniform({3, 4}, rng), ops::sub);
    s.binary("mul", uniform({3, 4}, rng), uniform({3, 4}, rng), ops::mul);
    s.binary("add_bias", uniform({3, 4}, rng), uniform({4}, rng), ops::add_bias);
    s.unary("transpose", uniform({3, 4}, rng), ops::transpose);
    s.unary("scale", uniform({3, 4}, rng), [](const Tensor& x) { return ops::affine(ops::scale(x, -1.5), 0.9, 0.3); });
    s.unary("mean", uniform({3, 4}, rng), [](const Tensor& x) { return ops::mean(x); });
    s.unary("gelu", uniform({4, 5}, rng), ops::gelu);
    {
        Tensor half({1}, {0.5}, true);
        s.unary("gelu@0.5", half, ops::gelu);
    }
    s.unary("softmax", uniform({6}, rng), ops::softmax);
    s.unary("softmax_rows", uniform({4, 5}, rng), [](const Tensor& x) { return ops::softmax_rows(x, false); });
    s.unary("softmax_rows_causal", uniform({5, 5}, rng), [](const Tensor& x) { return ops::softmax_rows(x, true); });
    s.unary("mean_over_sequence", uniform({5, 3}, rng), ops::mean_over_sequence);
    s.binary("concat_feature", uniform({3, 2}, rng), uniform({3, 4}, rng),
             [](const Tensor& a, const Tensor& b) { return ops::concat_feature(a, b); });
    s.binary("concat_sequence", uniform({2, 3}, rng), uniform({4, 3}, rng),
             [](const Tensor& a, const Tensor& b) { return ops::concat_sequence(a, b); });
    s.unary("slice", uniform({5, 4}, rng),
            [](const Tensor& x) { return ops::slice_cols(ops::slice_rows(x, 1, 3), 1, 2); });
    s.unary("reshape_pad_group", uniform({5, 3}, rng),
            [](const Tensor& x) { return ops::group_frames(ops::reshape(ops::pad_rows(x, 6), {3, 6}), 2); });
    {
        Tensor x = uniform({10, 3}, rng), w = uniform({9, 2}, rng), b = uniform({2}, rng);
        const Tensor probe_w = s.weights([&] { return ops::conv1d(x, w, b, 3, 2, 1, 1); });
        s.run("conv1d", 1e-4, [=] { return probe(ops::conv1d(x, w, b, 3, 2, 1, 1), probe_w); },
              {{"x", x}, {"weight", w}, {"bias", b}});
    }
    s.unary("linear_interpolate", uniform({4, 6}, rng),
            [](const Tensor& x) { return ops::linear_interpolate_features(x, 9); });
    s.unary("xlogx", uniform({3, 4}, rng, 0.1, 2.0), ops::xlogx);
    s.binary("rms_norm", uniform({4, 6}, rng), uniform({6}, rng),
             [](const Tensor& x, const Tensor& g) { return ops::rms_norm_rows(x, g); });
    {
        const std::vector<int> ids = {3, 0, 3, 5};
        s.unary("embedding", uniform({6, 4}, rng), [ids](const Tensor& t) { return ops::embedding(t, ids); });
        const std::vector<int> targets = {2, -1, 0, 4};
        s.unary("cross_entropy", uniform({4, 5}, rng),
                [targets](const Tensor& l) { return ops::cross_entropy_rows(l, targets); });
    }

    // Routing: away from ties the KeepTop1 mask is locally constant.
    s.unary("keep_top1_softmax", uniform({4}, rng), [](const Tensor& v) { return keep_top1(ops::softmax(v)); });
    {
        Tensor w = uniform({4}, rng);
        s.run("loss_indep_entropy", 1e-4, [=] { return loss_indep_entropy(keep_top1(ops::softmax(w))); }, {{"w", w}});
    }
    {
        std::vector<NamedTensor> logits;
        for (int i = 0; i < 6; ++i) logits.push_back({"v" + std::to_string(i), uniform({4}, rng)});
        auto gates = [logits](bool smooth) {
            std::vector<Tensor> g;
            for (const auto& l : logits) {
                Tensor r = keep_top1(ops::softmax(l.tensor));
                g.push_back(smooth ? smooth_gate(r, kDefaultEpsilonScale / 4.0) : r);
            }
            return g;
        };
        s.run("loss_dep_entropy", 1e-4, [=] { auto g = gates(true); return loss_dep_entropy(g); }, logits);
        s.run("loss_dep_diversity", 1e-4, [=] { auto g = gates(true); return loss_dep_diversity(g); }, logits);
        s.run("loss_dep_diversity_dense", 1e-4,
              [=] {
                  std::vector<Tensor> g;
                  for (const auto& l : logits) g.push_back(ops::softmax(l.tensor));
                  return loss_dep_diversity(g);
              },
              logits);
        Tensor w = uniform({4}, rng);
        auto params = logits;
        params.push_back({"w_indep", w});
        s.run("loss_mowe", 1e-4,
              [=] {
                  auto g = gates(true);
                  return loss_mowe(keep_top1(ops::softmax(w)), g);
              },
              params);
    }
    {
        DepRouterParams dep{uniform({6, 4}, rng)};
        Tensor z = uniform({5, 6}, rng);
        s.run("route_dep", 1e-4,
              [=] {
                  const Tensor& gate = route_dep(dep, z, true, kDefaultEpsilonScale).gate;
                  return loss_dep_entropy(std::span<const Tensor>(&gate, 1));
              },
              {{"w_dep", dep.w_dep}, {"z_base", z}});
    }

    // Composite modules on the toy configuration.
    const ModelConfig toy = toy_model_config();
    const Dataset data = generate(toy_data_config(), seed);
    {
        Rng enc_rng = rng.fork("encoders");
        EncoderPool pool(toy.pool, enc_rng);
        const FeatureSequence& a = data.samples.front();
        std::vector<NamedTensor> base, weak;
        pool.base().collect("base", base);
        pool.weak(2).collect("weak2", weak);
        const Tensor wb = uniform({pool.base().output_length(toy_data_config().seq_len), pool.d_base()}, rng, -1, 1, false);
        const Tensor ww = uniform({pool.weak(2).output_length(toy_data_config().seq_len), pool.d_weak()}, rng, -1, 1, false);
        s.run("encoder_base", 1e-3, [=] { return probe(encode_base(pool, a), wb); }, base);
        s.run("encoder_weak_interpolated", 1e-3, [=] { return probe(encode_weak(pool, 2, a), ww); }, weak);
    }
    for (AdapterKind kind : {AdapterKind::GroupedLinearGelu, AdapterKind::StridedConv}) {
        AdapterSpec spec = toy.adapter;
        spec.kind = kind;
        Rng ar = rng.fork("adapter");
        Adapter adapter(spec, 6, 16, ar);
        Tensor z = uniform({16, 6}, rng);
        std::vector<NamedTensor> params = {{"z", z}};
        adapter.collect("adapter", params);
        const Tensor w = s.weights([&] { return adapter.forward(z); });
        s.run("adapter_" + to_string(kind), 1e-4, [=] { return probe(adapt(z, adapter), w); }, params);
    }
    {
        Rng dr = rng.fork("decoder");
        Decoder dec(toy.decoder, dr);
        for (auto& layer : dec.layers()) {
            for (LoraLinear* l : {&layer.q, &layer.k, &layer.v, &layer.o}) {
                auto b = l->b.mutable_data();
                for (auto& x : b) x = rng.normal(0.0, 0.3);
            }
        }
        Tensor audio = uniform({4, toy.decoder.d_model}, rng);
        std::vector<NamedTensor> params = {{"audio", audio}};
        dec.collect("decoder", params);
        std::erase_if(params, [](const NamedTensor& t) { return !t.tensor.requires_grad(); });
        const std::vector<int> ids = {1, 2, 17, 21};
        const std::vector<int> labels = {-1, -1, -1, 17, 21, 26, -1, -1};
        s.run("decoder_lora", 1e-4,
              [=] { return ops::cross_entropy_rows(dec.forward(audio, ids), labels); }, params);
    }
    {
        MoweModel model(toy, toy_data_config().seq_len, seed);
        for (auto& layer : model.decoder().layers()) {
            for (LoraLinear* l : {&layer.q, &layer.k, &layer.v, &layer.o}) {
                auto b = l->b.mutable_data();
                for (auto& x : b) x = rng.normal(0.0, 0.3);
            }
        }
        std::vector<const FeatureSequence*> batch = {&data.samples[0], &data.samples[1]};
        s.run("full_pipeline_loss", 1e-3,
              [=, &model] { return model.forward_batch(batch, true, 0.1).loss.total; }, model.trainable());
    }
    return s.out;
}

}  // namespace mowe
