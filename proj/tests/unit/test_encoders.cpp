// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mowe/encoders.hpp"
#include "mowe/error.hpp"
#include "mowe/gradcheck.hpp"
#include "mowe/ops.hpp"

using namespace mowe;

namespace {

FeatureSequence random_input(std::size_t s, std::size_t d, std::uint64_t seed) {
    Rng rng(seed, "encoder-input");
    std::vector<double> v(s * d);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    FeatureSequence a;
    a.features = Tensor({s, d}, std::move(v));
    return a;
}

EncoderSpec base_spec() {
    EncoderSpec s;
    s.name = "base";
    s.kind = EncoderKind::Base;
    s.d_in = 16;
    s.d_out = s.d_native = 64;
    s.hidden = 64;
    s.layers = 1;
    return s;
}

EncoderSpec weak_spec(std::size_t native) {
    EncoderSpec s;
    s.name = "weak";
    s.kind = EncoderKind::Weak;
    s.d_in = 16;
    s.d_out = 16;
    s.hidden = 16;
    s.d_native = native;
    return s;
}

struct Checksum {
    double sum = 0.0;
    double weighted = 0.0;
};

Checksum checksum(const Tensor& t) {
    Checksum c;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        c.sum += t[i];
        c.weighted += t[i] * static_cast<double>(i % 97 + 1);
    }
    return c;
}

}  // namespace

TEST(Encoder, ZeroNetGivesZeroEmbedding) {
    FeatureSequence a;
    a.features = Tensor::zeros({32, 16});
    EncoderPool pool(Encoder::zeros(base_spec()), {Encoder::zeros(weak_spec(24)), Encoder::zeros(weak_spec(16))});
    auto zb = encode_base(pool, a);
    EXPECT_EQ(zb.rows(), 16u);
    EXPECT_EQ(zb.cols(), 64u);
    for (double x : zb.data()) EXPECT_EQ(x, 0.0);
    auto zw = encode_weak(pool, 0, a);
    EXPECT_EQ(zw.cols(), 16u);
    for (double x : zw.data()) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, FixedSeedMatchesGoldenChecksum) {
    Rng rng(2024, "golden/encoders");
    Encoder base(base_spec(), rng);
    Encoder weak(weak_spec(24), rng);
    auto a = random_input(128, 16, 2024);
    const auto cb = checksum(base.forward(a.features));
    const auto cw = checksum(weak.forward(a.features));

    const std::string path = std::string(MOWE_TEST_DATA_DIR) + "/golden_encoders.json";
    if (std::getenv("MOWE_UPDATE_GOLDEN")) {
        nlohmann::json j = {{"base", {{"sum", cb.sum}, {"weighted", cb.weighted}}},
                            {"weak", {{"sum", cw.sum}, {"weighted", cw.weighted}}}};
        std::ofstream(path) << j.dump(2) << "\n";
        GTEST_SKIP() << "golden file rewritten";
    }
    std::ifstream in(path);
    ASSERT_TRUE(in) << "missing " << path << "; run with MOWE_UPDATE_GOLDEN=1 once";
    const auto j = nlohmann::json::parse(in);
    auto near = [](double got, double want) { EXPECT_NEAR(got, want, 1e-9 * std::max(1.0, std::abs(want))); };
    near(cb.sum, j["base"]["sum"].get<double>());
    near(cb.weighted, j["base"]["weighted"].get<double>());
    near(cw.sum, j["weak"]["sum"].get<double>());
    near(cw.weighted, j["weak"]["weighted"].get<double>());
}

TEST(Encoder, GradCheckOnOneSample) {
    EncoderSpec spec = weak_spec(6);
    spec.d_in = 4;
    spec.hidden = 4;
    spec.d_out = 4;
    Rng rng(3, "gc");
    Encoder e(spec, rng);
    auto a = random_input(6, 4, 3);
    std::vector<NamedTensor> params;
    e.collect("weak", params);
    auto report = check_gradients([&] { return ops::sum(ops::gelu(e.forward(a.features))); }, params);
    EXPECT_TRUE(report.passed(1e-4)) << report.worst_tensor << " " << report.max_relative_error;
}

TEST(Encoder, WeakOutputIsInterpolatedToCommonWidth) {
    Rng rng(5, "interp");
    PoolConfig cfg;
    EncoderPool pool(cfg, rng);
    auto a = random_input(128, cfg.d_in, 5);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        auto z = encode_weak(pool, k, a);
        EXPECT_EQ(z.cols(), cfg.d_weak);
        EXPECT_EQ(z.rows(), pool.weak(k).output_length(128));
    }
    EXPECT_EQ(pool.d_weak(), cfg.d_weak);
    EXPECT_EQ(pool.d_base(), cfg.d_base);
}

TEST(Encoder, UnknownIndexIsIndexError) {
    Rng rng(6, "idx");
    EncoderPool pool(PoolConfig{}, rng);
    auto a = random_input(128, 16, 6);
    EXPECT_THROW(encode_weak(pool, pool.size(), a), IndexError);
}

TEST(Encoder, WrongInputWidthIsDimensionError) {
    Rng rng(6, "dim");
    EncoderPool pool(PoolConfig{}, rng);
    EXPECT_THROW(encode_base(pool, random_input(128, 8, 6)), DimensionError);
}

TEST(Encoder, ForwardIsPure) {
    Rng rng(8, "pure");
    EncoderPool pool(PoolConfig{}, rng);
    auto a = random_input(128, 16, 8);
    auto z1 = encode_base(pool, a);
    auto z2 = encode_base(pool, a);
    for (std::size_t i = 0; i < z1.numel(); ++i) EXPECT_EQ(z1[i], z2[i]);
}

TEST(ParamCount, LinearLayerFormula) {
    Rng rng(1, "lin");
    auto l = Linear::init(7, 5, rng);
    EXPECT_EQ(l.param_count(), 7u * 5u + 5u);
}

TEST(ParamCount, MatchesTensorEnumeration) {
    Rng rng(2, "count");
    EncoderPool pool(PoolConfig{}, rng);
    auto report = count_params(pool);
    std::vector<NamedTensor> all;
    pool.collect(all);
    std::size_t total = 0;
    for (const auto& p : all) total += p.tensor.numel();
    EXPECT_EQ(report.total, total);
    std::size_t sum = report.base;
    for (auto w : report.weak) sum += w;
    EXPECT_EQ(report.total, sum);
    EXPECT_EQ(report.base, pool.base().param_count());
}

TEST(ParamCount, DefaultBaseIsTenTimesEveryWeak) {
    Rng rng(3, "ratio");
    EncoderPool pool(PoolConfig{}, rng);
    auto report = count_params(pool);
    EXPECT_GE(report.min_ratio, 10.0);
    for (auto w : report.weak) EXPECT_GE(report.base, 10 * w);
}
