// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mowe/tensor.hpp"

namespace mowe {

/// Temporal shapes added on top of a task's cluster center.
enum class Pattern : int { Voiced = 0, Burst = 1, Chirp = 2, Decay = 3, Flat = 4 };

std::string to_string(Pattern p);
Pattern pattern_from_string(const std::string& name);

struct TaskSpec {
    int id = 0;
    std::string name;
    std::vector<double> center;  // length d_in
    Pattern pattern = Pattern::Flat;
    double noise_scale = 0.5;   // per-frame Gaussian noise
    double jitter_scale = 0.5;  // per-sample constant offset, carries the answer
    /// Response template: target j buckets the mean offset of channel target_channels[j]
    /// into `levels` equiprobable bins and emits response_base + j·levels + bin.
    std::vector<std::size_t> target_channels;
    int response_base = 16;
    int levels = 4;
    std::vector<int> instruction;
    bool speech_like = false;
};

/// One synthetic "audio" sample. Features are float32-representable so the
/// on-disk format round-trips exactly.
struct FeatureSequence {
    Tensor features;  // [S×d_in]
    int task_id = 0;
    std::vector<int> instruction;
    std::vector<int> targets;
    std::uint64_t sample_id = 0;
};

struct Dataset {
    std::size_t seq_len = 0;
    std::size_t d_in = 0;
    std::vector<TaskSpec> tasks;
    std::vector<FeatureSequence> samples;

    std::size_t size() const { return samples.size(); }
    const TaskSpec& task(int id) const;
};

struct DataConfig {
    std::size_t seq_len = 128;
    std::size_t d_in = 16;
    std::size_t samples_per_task = 80;
    double train_fraction = 0.8;
    double noise_scale = 0.5;
    double jitter_scale = 0.5;
    double center_scale = 1.0;
    std::size_t target_length = 3;
    /// "default" for the five separated tasks, "similar" for the degenerate mix.
    std::string task_set = "default";
};

inline constexpr int kBosToken = 1;

/// The five default tasks: two speech-like ones share the voiced pattern,
/// every pair of centers is at least 4× the noise scale apart.
std::vector<TaskSpec> default_tasks(const DataConfig& cfg, std::uint64_t seed);
/// Degenerate mix: every task has the same center and pattern; only the
/// answer channels and instruction tokens differ.
std::vector<TaskSpec> similar_tasks(const DataConfig& cfg, std::uint64_t seed);
std::vector<TaskSpec> make_tasks(const DataConfig& cfg, std::uint64_t seed);

/// Smallest pairwise Euclidean distance between task centers.
double min_center_distance(const std::vector<TaskSpec>& tasks);

/// Noise-free pattern value at (frame t, channel c) for a sequence of length S.
double pattern_value(Pattern p, std::size_t t, std::size_t c, std::size_t seq_len);

/// The fixed rule that maps a feature matrix to its answer tokens.
std::vector<int> target_tokens(const TaskSpec& task, const Tensor& features);

Dataset generate(const std::vector<TaskSpec>& tasks, std::size_t per_task, std::uint64_t seed,
                 std::size_t seq_len, std::size_t d_in);
Dataset generate(const DataConfig& cfg, std::uint64_t seed);

/// Stratified, seeded split. Each task contributes round(fraction·n_task) samples to train.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Writes `manifest.json` and `features.bin` under `dir`.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mowe
