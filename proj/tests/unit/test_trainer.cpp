// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "mowe/checkpoint.hpp"
#include "mowe/config.hpp"
#include "mowe/diagnostics.hpp"
#include "mowe/error.hpp"
#include "mowe/report.hpp"
#include "mowe/trainer.hpp"

using namespace mowe;

namespace {

struct Toy {
    Dataset train, eval;
    ModelConfig model = toy_model_config();
    TrainConfig cfg;
};

Toy toy(std::uint64_t seed = 1, std::size_t per_task = 6) {
    Toy t;
    auto data_cfg = toy_data_config();
    data_cfg.samples_per_task = per_task;
    std::tie(t.train, t.eval) = split(generate(data_cfg, seed), 0.5, seed);
    t.cfg.batch_size = 8;
    t.cfg.epochs = 2;
    t.cfg.learning_rate = 1e-2;
    t.cfg.seed = seed;
    return t;
}

std::vector<std::vector<double>> snapshot(const MoweModel& m) {
    std::vector<std::vector<double>> out;
    for (const auto& p : m.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

std::string report_json(const RunReport& r) {
    auto j = to_json(r);
    j.erase("wall_clock_seconds");
    return j.dump();
}

}  // namespace

TEST(Cosine, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(5e-5, 0, 100), 5e-5);
    EXPECT_LT(cosine_lr(5e-5, 99, 100), 5e-5 * 1e-3);
    EXPECT_NEAR(cosine_lr(1.0, 50, 100), 0.5, 1e-15);
    for (std::size_t s = 1; s < 100; ++s) EXPECT_LT(cosine_lr(1.0, s, 100), cosine_lr(1.0, s - 1, 100));
}

TEST(TrainConfig, DefaultsMatchPublishedRecipe) {
    TrainConfig c;
    EXPECT_EQ(c.batch_size, 32u);
    EXPECT_EQ(c.epochs, 5u);
    EXPECT_DOUBLE_EQ(c.beta1, 0.9);
    EXPECT_DOUBLE_EQ(c.beta2, 0.999);
    EXPECT_DOUBLE_EQ(c.learning_rate, 5e-5);
    EXPECT_DOUBLE_EQ(c.routing_loss_weight, 0.1);
}

TEST(AdamW, MatchesHandComputedStep) {
    Tensor w({2}, {1.0, -2.0}, true);
    AdamW opt({{"w", w}}, 0.9, 0.999, 1e-8, 0.01);
    // grad = 2w for loss w·w
    auto& g = w.node()->ensure_grad();
    g = {2.0, -4.0};
    opt.step(0.1);
    // Bias-corrected first step: m̂ = g, v̂ = g², update = g/(|g| + eps) ≈ sign(g).
    const double u0 = 2.0 / (2.0 + 1e-8), u1 = -4.0 / (4.0 + 1e-8);
    EXPECT_NEAR(w[0], 1.0 - 0.1 * (u0 + 0.01 * 1.0), 1e-15);
    EXPECT_NEAR(w[1], -2.0 - 0.1 * (u1 + 0.01 * -2.0), 1e-15);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, GlobalNormAndClipScale) {
    Tensor a({2}, {0.0, 0.0}, true), b({1}, {0.0}, true);
    a.node()->ensure_grad() = {3.0, 0.0};
    b.node()->ensure_grad() = {4.0};
    EXPECT_DOUBLE_EQ(global_grad_norm({{"a", a}, {"b", b}}), 5.0);
}

TEST(Train, ZeroEpochsLeavesInit) {
    auto t = toy();
    t.cfg.epochs = 0;
    MoweModel model(t.model, t.train.seq_len, 1);
    const auto before = snapshot(model);
    auto report = train(t.cfg, model, t.train, t.eval);
    EXPECT_TRUE(report.steps.empty());
    EXPECT_TRUE(report.epochs.empty());
    EXPECT_EQ(snapshot(model), before);
    EXPECT_EQ(report.final_eval.samples, t.eval.size());
}

TEST(Train, StepAndEpochBookkeeping) {
    auto t = toy();
    MoweModel model(t.model, t.train.seq_len, 1);
    auto report = train(t.cfg, model, t.train, t.eval);
    const std::size_t per_epoch = (t.train.size() + t.cfg.batch_size - 1) / t.cfg.batch_size;
    ASSERT_EQ(report.steps.size(), per_epoch * t.cfg.epochs);
    ASSERT_EQ(report.epochs.size(), t.cfg.epochs);
    EXPECT_DOUBLE_EQ(report.steps.front().lr, t.cfg.learning_rate);
    for (const auto& s : report.steps) {
        EXPECT_TRUE(std::isfinite(s.total));
        EXPECT_NEAR(s.total, s.next_token + 0.1 * 0.5 * (s.indep_entropy + s.dep_entropy + s.dep_diversity), 1e-12);
    }
    EXPECT_FALSE(report.config_json.empty());
}

TEST(Train, IdenticalSeedGivesIdenticalReport) {
    auto t = toy(3);
    MoweModel m1(t.model, t.train.seq_len, 3), m2(t.model, t.train.seq_len, 3);
    auto r1 = train(t.cfg, m1, t.train, t.eval);
    auto r2 = train(t.cfg, m2, t.train, t.eval);
    EXPECT_EQ(report_json(r1), report_json(r2));
    EXPECT_EQ(snapshot(m1), snapshot(m2));
}

TEST(Train, NonFiniteLossNamesTensor) {
    auto t = toy();
    MoweModel model(t.model, t.train.seq_len, 1);
    for (auto& p : model.parameters()) {
        if (p.name.find("projection") != std::string::npos) {
            p.tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
            break;
        }
    }
    try {
        train(t.cfg, model, t.train, t.eval);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("first non-finite tensor"), std::string::npos) << e.what();
    }
}

TEST(Train, OffSetupTrainsBaseOnly) {
    auto t = toy();
    t.model.routing.setup = RouterSetup::Off;
    MoweModel model(t.model, t.train.seq_len, 1);
    EXPECT_TRUE(model.mixtures().empty());
    auto report = train(t.cfg, model, t.train, t.eval);
    EXPECT_FALSE(report.steps.empty());
    for (const auto& s : report.steps) EXPECT_DOUBLE_EQ(s.total, s.next_token);
    EXPECT_EQ(report.final_eval.max_encoders_evaluated, 1u);
}

TEST(Train, TwoStageRunsFreshSchedules) {
    auto t = toy();
    t.cfg.regime = Regime::TwoStage;
    t.cfg.stage_one_epochs = 1;
    MoweModel model(t.model, t.train.seq_len, 1);
    auto report = train(t.cfg, model, t.train, t.eval);
    std::size_t stage1 = 0;
    for (const auto& s : report.steps) stage1 += s.stage == 1;
    EXPECT_GT(stage1, 0u);
    ASSERT_LT(stage1, report.steps.size());
    EXPECT_DOUBLE_EQ(report.steps[0].lr, t.cfg.learning_rate);
    EXPECT_DOUBLE_EQ(report.steps[stage1].lr, t.cfg.learning_rate);
    EXPECT_EQ(report.steps[stage1].stage, 2);
    t.cfg.stage_one_task = 99;
    EXPECT_THROW(train(t.cfg, model, t.train, t.eval), ConfigError);
}

TEST(Evaluate, ProportionsSumToOneAndEncoderBound) {
    auto t = toy(4, 8);
    for (auto setup : ablation_setups()) {
        auto mc = t.model;
        mc.routing.setup = setup;
        const auto pool = ablation_pool_size(setup);
        if (pool) mc.pool.weak_native.resize(pool, 4);
        MoweModel model(mc, t.train.seq_len, 4);
        auto r = evaluate(model, t.eval);
        EXPECT_LE(r.max_encoders_evaluated, 1 + model.mixtures().size()) << to_string(setup);
        EXPECT_EQ(r.routing.size(), model.mixtures().size());
        for (const auto& table : r.routing) {
            for (const auto& row : table.proportions) {
                double s = 0.0;
                for (double p : row) s += p;
                EXPECT_NEAR(s, 1.0, 1e-9);
            }
        }
        EXPECT_GT(r.mean_active_encoder_params, 0.0);
        EXPECT_LE(r.mean_active_params, static_cast<double>(model.param_count()));
    }
}

TEST(Evaluate, PriorRoutesEverythingToEncoderZero) {
    auto t = toy(5, 8);
    t.model.routing.indep_init = "prior";
    MoweModel model(t.model, t.train.seq_len, 5);
    auto r = evaluate(model, t.train);
    const auto* table = r.indep_table();
    ASSERT_NE(table, nullptr);
    EXPECT_DOUBLE_EQ(table->max_overall_fraction(), 1.0);
    for (const auto& row : table->counts) {
        std::size_t total = 0;
        for (auto c : row) total += c;
        EXPECT_EQ(row[0], total);
    }
}

TEST(Evaluate, ThreadedMatchesSingleThreaded) {
    auto t = toy(6, 8);
    MoweModel model(t.model, t.train.seq_len, 6);
    auto a = to_json(evaluate(model, t.train, 1));
    auto b = to_json(evaluate(model, t.train, 3));
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Checkpoint, RoundTripPreservesEval) {
    auto t = toy(7);
    RunConfig rc;
    rc.seed = 7;
    rc.data = toy_data_config();
    rc.model = t.model;
    rc.train = t.cfg;
    MoweModel model(rc.model_config(), t.train.seq_len, 7);
    train(t.cfg, model, t.train, t.eval);
    const auto path = std::filesystem::temp_directory_path() / "mowe_ckpt_roundtrip.bin";
    save_checkpoint(path, model, rc);
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(snapshot(loaded.model), snapshot(model));
    EXPECT_EQ(to_json(evaluate(loaded.model, t.eval)).dump(), to_json(evaluate(model, t.eval)).dump());
    EXPECT_EQ(loaded.seq_len, t.train.seq_len);

    // Truncation must be detected.
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    EXPECT_THROW(load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
}

TEST(Ablation, AllSetupsCompleteAndIndepIsFixed) {
    auto t = toy(8);
    t.cfg.epochs = 1;
    auto rows = run_ablation_matrix(t.model, t.cfg, t.train, t.eval, 8);
    ASSERT_EQ(rows.size(), 6u);
    for (const auto& row : rows) {
        EXPECT_TRUE(std::isfinite(row.final_train_next_token)) << to_string(row.setup);
        EXPECT_EQ(row.pool_size, ablation_pool_size(row.setup));
        if (row.setup == RouterSetup::Indep) EXPECT_DOUBLE_EQ(row.indep_fixed_fraction, 1.0);
    }
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    const std::string text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
}

TEST(Ablation, PoolSizes) {
    EXPECT_EQ(ablation_pool_size(RouterSetup::Off), 0u);
    EXPECT_EQ(ablation_pool_size(RouterSetup::Indep), 2u);
    EXPECT_EQ(ablation_pool_size(RouterSetup::Dep), 2u);
    EXPECT_EQ(ablation_pool_size(RouterSetup::IndepX2), 4u);
    EXPECT_EQ(ablation_pool_size(RouterSetup::DepX2), 4u);
    EXPECT_EQ(ablation_pool_size(RouterSetup::IndepDep), 4u);
}

TEST(Train, DeskConfigHalvesNextTokenLoss) {
    const auto rc = RunConfig::desk();
    auto [train_set, eval_set] = split(generate(rc.data, rc.seed), rc.data.train_fraction, rc.seed);
    MoweModel model(rc.model_config(), train_set.seq_len, rc.seed);
    const double before = evaluate(model, train_set).next_token_loss;
    auto report = train(rc.train_config(), model, train_set, eval_set);
    EXPECT_LE(report.final_train.next_token_loss, 0.5 * before)
        << "before " << before << " after " << report.final_train.next_token_loss;
}
