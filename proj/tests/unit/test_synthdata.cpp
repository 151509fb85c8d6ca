// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mowe/error.hpp"
#include "mowe/synthdata.hpp"

using namespace mowe;

namespace {

DataConfig small(std::size_t per_task = 20) {
    DataConfig cfg;
    cfg.samples_per_task = per_task;
    return cfg;
}

bool same(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size() || a.seq_len != b.seq_len || a.d_in != b.d_in) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &x = a.samples[i], &y = b.samples[i];
        if (x.task_id != y.task_id || x.sample_id != y.sample_id || x.targets != y.targets ||
            x.instruction != y.instruction)
            return false;
        if (!std::equal(x.features.data().begin(), x.features.data().end(), y.features.data().begin())) return false;
    }
    return true;
}

std::vector<double> mean_features(const FeatureSequence& s) {
    std::vector<double> m(s.features.cols(), 0.0);
    for (std::size_t t = 0; t < s.features.rows(); ++t)
        for (std::size_t c = 0; c < m.size(); ++c) m[c] += s.features.at(t, c) / s.features.rows();
    return m;
}

// Solves (XᵀX + λI) w = Xᵀy by Gauss-Jordan elimination.
std::vector<double> ridge(const std::vector<std::vector<double>>& x, const std::vector<double>& y, double lambda) {
    const std::size_t d = x.front().size();
    std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < d; ++c) a[r][c] += x[i][r] * x[i][c];
            a[r][d] += x[i][r] * y[i];
        }
    }
    for (std::size_t r = 0; r < d; ++r) a[r][r] += lambda;
    for (std::size_t p = 0; p < d; ++p) {
        std::size_t best = p;
        for (std::size_t r = p + 1; r < d; ++r)
            if (std::abs(a[r][p]) > std::abs(a[best][p])) best = r;
        std::swap(a[p], a[best]);
        for (std::size_t r = 0; r < d; ++r) {
            if (r == p) continue;
            const double f = a[r][p] / a[p][p];
            for (std::size_t c = p; c <= d; ++c) a[r][c] -= f * a[p][c];
        }
    }
    std::vector<double> w(d);
    for (std::size_t r = 0; r < d; ++r) w[r] = a[r][d] / a[r][r];
    return w;
}

}  // namespace

TEST(Generate, ZeroNoiseMakesTaskSamplesIdentical) {
    auto cfg = small(6);
    cfg.noise_scale = 0.0;
    cfg.jitter_scale = 0.0;
    const auto data = generate(cfg, 1);
    std::map<int, const FeatureSequence*> first;
    for (const auto& s : data.samples) {
        auto [it, inserted] = first.emplace(s.task_id, &s);
        if (inserted) continue;
        EXPECT_TRUE(std::equal(s.features.data().begin(), s.features.data().end(),
                               it->second->features.data().begin()));
        EXPECT_EQ(s.targets, it->second->targets);
    }
    EXPECT_EQ(first.size(), 5u);
}

TEST(Generate, SameSeedSameDataset) {
    EXPECT_TRUE(same(generate(small(), 7), generate(small(), 7)));
    EXPECT_FALSE(same(generate(small(), 7), generate(small(), 8)));
}

TEST(Generate, FixedShapeAndCounts) {
    const auto cfg = small(9);
    const auto data = generate(cfg, 2);
    EXPECT_EQ(data.size(), 45u);
    std::set<std::uint64_t> ids;
    for (const auto& s : data.samples) {
        EXPECT_EQ(s.features.shape(), (Shape{cfg.seq_len, cfg.d_in}));
        EXPECT_EQ(s.targets.size(), cfg.target_length);
        EXPECT_EQ(s.instruction.front(), kBosToken);
        ids.insert(s.sample_id);
    }
    EXPECT_EQ(ids.size(), data.size());
}

TEST(Generate, TargetsFollowTheFixedRule) {
    const auto data = generate(small(), 3);
    for (const auto& s : data.samples) EXPECT_EQ(target_tokens(data.task(s.task_id), s.features), s.targets);
}

TEST(Generate, CentersSeparatedByFourNoiseScales) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto cfg = small();
        const auto tasks = default_tasks(cfg, seed);
        double brute = 1e300;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            for (std::size_t j = i + 1; j < tasks.size(); ++j) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < cfg.d_in; ++c) {
                    const double d = tasks[i].center[c] - tasks[j].center[c];
                    d2 += d * d;
                }
                brute = std::min(brute, std::sqrt(d2));
            }
        }
        EXPECT_DOUBLE_EQ(min_center_distance(tasks), brute);
        EXPECT_GE(brute, 4.0 * cfg.noise_scale);
    }
}

TEST(Generate, TwoSpeechLikeTasksSharePattern) {
    const auto tasks = default_tasks(small(), 0);
    std::vector<Pattern> speech;
    for (const auto& t : tasks)
        if (t.speech_like) speech.push_back(t.pattern);
    ASSERT_EQ(speech.size(), 2u);
    EXPECT_EQ(speech[0], speech[1]);
}

TEST(Generate, SimilarTasksShareCenterAndPattern) {
    auto cfg = small();
    cfg.task_set = "similar";
    const auto tasks = make_tasks(cfg, 0);
    for (const auto& t : tasks) {
        EXPECT_EQ(t.center, tasks.front().center);
        EXPECT_EQ(t.pattern, tasks.front().pattern);
    }
    cfg.task_set = "nope";
    EXPECT_THROW(make_tasks(cfg, 0), ConfigError);
}

TEST(LinearProbe, SeparatesDefaultTasks) {
    const auto data = generate(small(60), 11);
    const auto [train, eval] = split(data, 0.5, 11);
    const std::size_t n_tasks = data.tasks.size();
    std::vector<std::vector<double>> x;
    for (const auto& s : train.samples) {
        auto m = mean_features(s);
        m.push_back(1.0);
        x.push_back(std::move(m));
    }
    std::vector<std::vector<double>> w;
    for (std::size_t k = 0; k < n_tasks; ++k) {
        std::vector<double> y;
        for (const auto& s : train.samples) y.push_back(s.task_id == static_cast<int>(k) ? 1.0 : 0.0);
        w.push_back(ridge(x, y, 1e-6));
    }
    std::size_t correct = 0;
    for (const auto& s : eval.samples) {
        auto m = mean_features(s);
        m.push_back(1.0);
        std::size_t best = 0;
        double best_score = -1e300;
        for (std::size_t k = 0; k < n_tasks; ++k) {
            double score = 0.0;
            for (std::size_t c = 0; c < m.size(); ++c) score += w[k][c] * m[c];
            if (score > best_score) best_score = score, best = k;
        }
        correct += static_cast<int>(best) == s.task_id;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(eval.size()), 0.99);
}

TEST(Split, FullFractionLeavesEvalEmpty) {
    const auto [train, eval] = split(generate(small(), 1), 1.0, 1);
    EXPECT_EQ(train.size(), 100u);
    EXPECT_EQ(eval.size(), 0u);
}

TEST(Split, StratifiedAndDisjoint) {
    const auto data = generate(small(), 2);
    const auto [train, eval] = split(data, 0.8, 2);
    std::map<int, std::size_t> per_task;
    std::set<std::uint64_t> seen;
    for (const auto& s : train.samples) {
        ++per_task[s.task_id];
        seen.insert(s.sample_id);
    }
    for (const auto& s : eval.samples) EXPECT_EQ(seen.count(s.sample_id), 0u);
    EXPECT_EQ(train.size() + eval.size(), data.size());
    for (const auto& [task, n] : per_task) EXPECT_EQ(n, 16u) << task;
    EXPECT_THROW(split(data, 1.5, 2), ArgumentError);
}

TEST(Split, ShuffleIsSeeded) {
    const auto data = generate(small(), 3);
    EXPECT_TRUE(same(split(data, 0.7, 5).first, split(data, 0.7, 5).first));
    EXPECT_FALSE(same(split(data, 0.7, 5).first, split(data, 0.7, 6).first));
}

TEST(Persistence, RoundTripIsExact) {
    const auto dir = std::filesystem::temp_directory_path() / "mowe_dataset_roundtrip";
    std::filesystem::remove_all(dir);
    const auto data = generate(small(), 4);
    save_dataset(data, dir);
    const auto back = load_dataset(dir);
    EXPECT_TRUE(same(data, back));
    ASSERT_EQ(back.tasks.size(), data.tasks.size());
    for (std::size_t i = 0; i < data.tasks.size(); ++i) {
        EXPECT_EQ(back.tasks[i].name, data.tasks[i].name);
        EXPECT_EQ(back.tasks[i].center, data.tasks[i].center);
        EXPECT_EQ(back.tasks[i].target_channels, data.tasks[i].target_channels);
    }
    std::filesystem::remove_all(dir);
}

TEST(Persistence, CorruptBlobIsFormatError) {
    const auto dir = std::filesystem::temp_directory_path() / "mowe_dataset_corrupt";
    std::filesystem::remove_all(dir);
    save_dataset(generate(small(2), 5), dir);
    {
        std::fstream f(dir / "features.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXXXXXX", 8);
    }
    EXPECT_THROW(load_dataset(dir), FormatError);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_dataset(dir), FormatError);
}
