// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mowe/error.hpp"
#include "mowe/gradcheck.hpp"
#include "mowe/ops.hpp"
#include "mowe/routing.hpp"

using namespace mowe;

namespace {

PoolConfig small_pool() {
    PoolConfig cfg;
    cfg.d_in = 4;
    cfg.d_base = 6;
    cfg.base_hidden = 6;
    cfg.d_weak = 3;
    cfg.weak_hidden = 3;
    cfg.weak_native = {3, 3, 4, 4};
    return cfg;
}

FeatureSequence input(std::size_t s, std::size_t d, std::uint64_t seed) {
    Rng rng(seed, "routing-input");
    std::vector<double> v(s * d);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    FeatureSequence a;
    a.features = Tensor({s, d}, std::move(v));
    return a;
}

Tensor one_hot(std::size_t m, std::size_t k, double v = 1.0) {
    std::vector<double> g(m, 0.0);
    g[k] = v;
    return Tensor({m}, g);
}

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
        if (x > 0) h -= x * std::log(x);
    return h;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(KeepTop1, KeepsArgmax) {
    auto out = keep_top1(Tensor({3}, {0.1, 0.7, 0.2}));
    EXPECT_EQ(values(out), (std::vector<double>{0, 0.7, 0}));
}

TEST(KeepTop1, TieGoesToLowestIndex) {
    EXPECT_EQ(values(keep_top1(Tensor({2}, {0.5, 0.5}))), (std::vector<double>{0.5, 0}));
}

TEST(KeepTop1, EmptyIsArgumentError) { EXPECT_THROW(keep_top1(Tensor({0}, {})), ArgumentError); }

TEST(KeepTop1, GradientMatchesFiniteDifferencesAwayFromTies) {
    Tensor v({4}, {0.3, -1.2, 0.9, 0.1}, true);
    auto f = [&] { return ops::sum(keep_top1(ops::softmax(v))); };
    auto report = check_gradients(f, {{"v", v}});
    EXPECT_TRUE(report.passed(1e-4)) << report.max_relative_error;
}

TEST(KeepTop1, SingleNonzeroOverRandomVectors) {
    std::mt19937_64 gen(99);
    std::uniform_int_distribution<int> len(1, 10);
    std::uniform_int_distribution<int> coarse(0, 3);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = static_cast<std::size_t>(len(gen));
        std::vector<double> v(n);
        // Coarse values make ties frequent.
        for (auto& x : v) x = 0.25 * coarse(gen) + 0.01;
        std::size_t expect = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (v[i] > v[expect]) expect = i;
        auto out = keep_top1(Tensor({n}, v));
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < n; ++i) nonzero += out[i] != 0.0;
        EXPECT_EQ(nonzero, 1u);
        EXPECT_EQ(out[expect], v[expect]);
    }
}

TEST(RouteIndep, PriorSelectsFavoured) {
    auto d = route_indep(make_indep_prior(4, 0));
    EXPECT_EQ(d.selected, 0u);
    EXPECT_EQ(d.active(), (std::vector<std::size_t>{0}));
    EXPECT_FALSE(d.smoothed);
    EXPECT_THROW(make_indep_prior(4, 4), IndexError);
}

TEST(RouteIndep, UniformTiesToZero) {
    IndepRouterParams p{Tensor::zeros({4}, true)};
    auto d = route_indep(p);
    EXPECT_EQ(d.selected, 0u);
    EXPECT_DOUBLE_EQ(d.gate[0], 0.25);
}

TEST(RouteIndep, RandomMatchesBruteForceArgmax) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed, "indep");
        auto p = make_indep_params(5, rng);
        std::size_t best = 0;
        for (std::size_t k = 1; k < 5; ++k)
            if (p.w_indep[k] > p.w_indep[best]) best = k;
        EXPECT_EQ(route_indep(p).selected, best);
    }
}

TEST(RouteDep, ZeroWeightsSmoothedArithmetic) {
    DepRouterParams p{Tensor::zeros({6, 4}, true)};
    Rng rng(1, "z");
    auto z = random_normal({5, 6}, 1.0, rng, false);
    auto d = route_dep(p, z, true);
    EXPECT_EQ(d.selected, 0u);
    EXPECT_TRUE(d.smoothed);
    EXPECT_DOUBLE_EQ(d.epsilon, 0.025);
    EXPECT_NEAR(d.gate[0], 0.2275, 1e-15);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(d.gate[k], 0.0025, 1e-15);
}

TEST(RouteDep, EvalModeHasOneNonzero) {
    Rng rng(2, "eval");
    auto p = make_dep_params(6, 4, rng);
    auto z = random_normal({5, 6}, 1.0, rng, false);
    auto d = route_dep(p, z, false);
    EXPECT_FALSE(d.smoothed);
    EXPECT_EQ(d.active().size(), 1u);
    EXPECT_EQ(d.active().front(), d.selected);
    EXPECT_GT(d.gate[d.selected], 0.0);
    EXPECT_LE(d.gate[d.selected], 1.0);
}

TEST(RouteDep, AlignedColumnIsSelected) {
    // Orthogonal columns; a z̄ equal to column k scores highest on k.
    const std::size_t d = 4, m = 4;
    Tensor w = Tensor::identity(d);
    for (std::size_t k = 0; k < m; ++k) {
        std::vector<double> row(d, 0.0);
        row[k] = 3.0;
        Tensor z({2, d}, [&] {
            std::vector<double> v(row);
            v.insert(v.end(), row.begin(), row.end());
            return v;
        }());
        EXPECT_EQ(route_dep(DepRouterParams{w}, z, false).selected, k);
    }
}

TEST(RouteDep, WidthMismatchIsDimensionError) {
    DepRouterParams p{Tensor::zeros({6, 4})};
    EXPECT_THROW(route_dep(p, Tensor::zeros({3, 5}), false), DimensionError);
}

TEST(Smoothing, ExactFormulaOverRandomGates) {
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> size(1, 8);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = static_cast<std::size_t>(size(gen));
        const double eps = 0.1 / static_cast<double>(m);
        auto g = one_hot(m, static_cast<std::size_t>(gen() % m), val(gen) + 1e-3);
        auto s = smooth_gate(g, eps);
        for (std::size_t k = 0; k < m; ++k) EXPECT_EQ(s[k], 0.9 * g[k] + 0.1 * eps);
    }
}

TEST(Mix, OneHotIsExactlyThatEncoder) {
    Rng rng(3, "mix");
    EncoderPool pool(small_pool(), rng);
    auto a = input(8, 4, 3);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        RouterDecision d;
        d.gate = one_hot(pool.size(), k);
        WeakEncoderCache cache;
        auto z = mix(pool, d, a, &cache);
        auto ref = encode_weak(pool, k, a);
        EXPECT_EQ(cache.evaluations, 1u);
        for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(z[i], ref[i]);
    }
}

TEST(Mix, ZeroGateEvaluatesNothing) {
    Rng rng(4, "mix0");
    EncoderPool pool(small_pool(), rng);
    auto a = input(8, 4, 4);
    RouterDecision d;
    d.gate = Tensor::zeros({pool.size()});
    WeakEncoderCache cache;
    auto z = mix(pool, d, a, &cache);
    EXPECT_EQ(cache.evaluations, 0u);
    EXPECT_EQ(z.rows(), pool.weak(0).output_length(8));
    EXPECT_EQ(z.cols(), pool.d_weak());
    for (double x : z.data()) EXPECT_EQ(x, 0.0);
}

TEST(Mix, SmoothedMatchesDenseSum) {
    Rng rng(5, "mixs");
    EncoderPool pool(small_pool(), rng);
    auto a = input(8, 4, 5);
    auto dep = make_dep_params(pool.d_base(), pool.size(), rng);
    auto d = route_dep(dep, encode_base(pool, a), true);
    WeakEncoderCache cache;
    auto z = mix(pool, d, a, &cache);
    EXPECT_EQ(cache.evaluations, pool.size());
    std::vector<double> ref(z.numel(), 0.0);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        auto e = encode_weak(pool, k, a);
        for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += d.gate[k] * e[i];
    }
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(z[i], ref[i], 1e-12);
}

TEST(MoweForward, ConcatenatesDepThenIndep) {
    Rng rng(6, "fwd");
    EncoderPool pool(small_pool(), rng);
    auto a = input(8, 4, 6);
    auto indep = make_indep_params(pool.size(), rng);
    auto dep = make_dep_params(pool.d_base(), pool.size(), rng);
    auto out = mowe_forward(pool, indep, dep, encode_base(pool, a), a, false);
    auto ref = ops::concat_feature(out.z_dep, out.z_indep);
    ASSERT_EQ(out.z_mowe.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(out.z_mowe[i], ref[i]);
}

TEST(MoweForward, IndepDecisionIsInputIndependent) {
    Rng rng(7, "ind");
    EncoderPool pool(small_pool(), rng);
    auto indep = make_indep_params(pool.size(), rng);
    auto dep = make_dep_params(pool.d_base(), pool.size(), rng);
    std::size_t first = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto a = input(8, 4, 100 + s);
        auto out = mowe_forward(pool, indep, dep, encode_base(pool, a), a, s % 2 == 0);
        if (s == 0) first = out.indep.selected;
        EXPECT_EQ(out.indep.selected, first);
        EXPECT_FALSE(out.indep.smoothed);
    }
}

TEST(Losses, IndepEntropyExamples) {
    EXPECT_EQ(loss_indep_entropy(one_hot(4, 0)).item(), 0.0);
    EXPECT_NEAR(loss_indep_entropy(one_hot(4, 2, 0.4)).item(), -0.4 * std::log(0.4), 1e-15);
    Tensor v({4}, {0.2, -0.3, 1.1, 0.5}, true);
    auto report = check_gradients([&] { return loss_indep_entropy(keep_top1(ops::softmax(v))); }, {{"v", v}});
    EXPECT_TRUE(report.passed(1e-4)) << report.max_relative_error;
}

TEST(Losses, DepEntropyExamples) {
    std::vector<Tensor> hot = {one_hot(4, 0), one_hot(4, 3)};
    EXPECT_EQ(loss_dep_entropy(hot).item(), 0.0);
    std::vector<Tensor> uniform(3, Tensor::full({4}, 0.25));
    EXPECT_NEAR(loss_dep_entropy(uniform).item(), std::log(4.0), 1e-15);
}

TEST(Losses, DiversityExamples) {
    std::vector<Tensor> same(5, one_hot(4, 0));
    EXPECT_EQ(loss_dep_diversity(same).item(), 0.0);
    std::vector<Tensor> balanced = {one_hot(4, 0), one_hot(4, 1), one_hot(4, 2), one_hot(4, 3)};
    EXPECT_NEAR(loss_dep_diversity(balanced).item(), -std::log(4.0), 1e-15);
}

TEST(Losses, MoweCompositionExamples) {
    std::vector<Tensor> balanced = {one_hot(4, 0), one_hot(4, 1), one_hot(4, 2), one_hot(4, 3)};
    EXPECT_NEAR(loss_mowe(one_hot(4, 1), balanced).item(), 0.5 * -std::log(4.0), 1e-15);
    std::vector<Tensor> uniform(3, Tensor::full({4}, 0.25));
    EXPECT_NEAR(loss_mowe(one_hot(4, 1), uniform).item(), 0.0, 1e-15);
}

TEST(Losses, RandomBatchesMatchOraclesAndBounds) {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<int> size(2, 6), batch(1, 9);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = static_cast<std::size_t>(size(gen));
        const std::size_t b = static_cast<std::size_t>(batch(gen));
        const double logm = std::log(static_cast<double>(m));
        std::vector<Tensor> gates;
        std::vector<double> mean(m, 0.0);
        double ent = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<double> v(m);
            double s = 0.0;
            for (auto& x : v) s += (x = val(gen));
            std::vector<double> g(m, 0.0);
            // Alternate between dense distributions and smoothed one-hots.
            if (trial % 2) {
                for (std::size_t k = 0; k < m; ++k) g[k] = v[k] / s;
            } else {
                g = values(smooth_gate(one_hot(m, gen() % m, val(gen) + 1e-6), 0.1 / m));
            }
            for (std::size_t k = 0; k < m; ++k) mean[k] += g[k] / static_cast<double>(b);
            ent += entropy(g) / static_cast<double>(b);
            gates.emplace_back(Shape{m}, g);
        }
        const double le = loss_dep_entropy(gates).item();
        const double ld = loss_dep_diversity(gates).item();
        EXPECT_NEAR(le, ent, 1e-12);
        EXPECT_NEAR(ld, -entropy(mean), 1e-12);
        EXPECT_GE(le, 0.0);
        EXPECT_LE(le, logm + 1e-12);
        // Smoothed gates carry less than unit mass; for M = 2 that deficit can push
        // Σ r̄·log r̄ below −log 2, so the lower bound is asserted for M ≥ 3 or
        // normalised gates only.
        if (m >= 3 || trial % 2) EXPECT_GE(ld, -logm - 1e-12);
        EXPECT_LE(ld, 1e-15);
        auto indep = keep_top1(Tensor({m}, values(gates.front())));
        const double li = loss_indep_entropy(indep).item();
        EXPECT_GE(li, 0.0);
        EXPECT_LE(li, 1.0 / std::exp(1.0) + 1e-15);
        EXPECT_NEAR(loss_mowe(indep, gates).item(), 0.5 * (li + le + ld), 1e-12);
    }
}

TEST(Losses, DiversityGradCheck) {
    Rng rng(8, "divgc");
    std::vector<Tensor> logits;
    std::vector<NamedTensor> params;
    for (int i = 0; i < 3; ++i) {
        logits.push_back(random_normal({4}, 1.0, rng, true));
        params.push_back({"v" + std::to_string(i), logits.back()});
    }
    auto f = [&] {
        std::vector<Tensor> gates;
        for (const auto& v : logits) gates.push_back(smooth_gate(keep_top1(ops::softmax(v)), 0.025));
        return ops::add(loss_dep_entropy(gates), loss_dep_diversity(gates));
    };
    auto report = check_gradients(f, params);
    EXPECT_TRUE(report.passed(1e-4)) << report.max_relative_error;
}

TEST(Losses, EmptyBatchIsArgumentError) {
    std::vector<Tensor> none;
    EXPECT_THROW(loss_dep_entropy(none), ArgumentError);
}
