// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mowe/gradcheck.hpp"
#include "mowe/model.hpp"
#include "mowe/synthdata.hpp"

namespace mowe {

enum class Regime { SingleStage, TwoStage };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

/// Optimisation settings. Defaults are the published fine-tuning recipe
/// (batch 32, 5 epochs, AdamW β=(0.9, 0.999), peak LR 5e-5, cosine decay).
struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    /// Global-norm clip; 0 disables.
    double grad_clip = 1.0;
    double routing_loss_weight = 0.1;
    Regime regime = Regime::SingleStage;
    /// Task trained alone in the first stage of the two-stage regime.
    int stage_one_task = 0;
    /// Epochs of the first stage; 0 means `epochs`.
    std::size_t stage_one_epochs = 0;
    std::uint64_t seed = 0;
    /// Evaluation workers; 1 is fully deterministic.
    std::size_t threads = 1;
};

/// lr(step) = ½·peak·(1 + cos(π·step/total)); peak at step 0, ≈0 at the last step.
double cosine_lr(double peak, std::size_t step, std::size_t total_steps);

/// AdamW with decoupled weight decay over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<NamedTensor> params, double beta1, double beta2, double eps, double weight_decay);

    /// Applies one update from the parameters' current gradients, pre-scaled by `grad_scale`.
    void step(double lr, double grad_scale = 1.0);
    std::size_t steps() const { return t_; }
    const std::vector<NamedTensor>& params() const { return params_; }

private:
    std::vector<NamedTensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, eps_, wd_;
    std::size_t t_ = 0;
};

/// √(Σ g²) over all gradients of `params`.
double global_grad_norm(const std::vector<NamedTensor>& params);

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    int stage = 1;
    double lr = 0.0;
    double total = 0.0;
    double next_token = 0.0;
    double indep_entropy = 0.0;
    double dep_entropy = 0.0;
    double dep_diversity = 0.0;
    double grad_norm = 0.0;
};

struct TaskMetrics {
    int task_id = 0;
    std::string name;
    std::size_t count = 0;
    double next_token_loss = 0.0;
    double token_accuracy = 0.0;
};

/// Selection counts of one mixture's router per task.
struct RoutingTable {
    std::size_t mixture = 0;
    RouterKind kind = RouterKind::Dep;
    std::vector<int> task_ids;
    std::vector<std::vector<std::size_t>> counts;       // [task][encoder]
    std::vector<std::vector<double>> proportions;       // rows sum to 1

    /// Fraction of all samples routed to the most used encoder.
    double max_overall_fraction() const;
    /// Entropy (nats) of the overall selection distribution.
    double selection_entropy() const;
};

struct SampleRouting {
    std::uint64_t sample_id = 0;
    int task_id = 0;
    /// Selected index per mixture (−1 when absent).
    long dep_selected = -1;
    long indep_selected = -1;
    std::vector<std::vector<double>> gates;  // per mixture
};

struct EvalReport {
    std::size_t samples = 0;
    double next_token_loss = 0.0;
    double token_accuracy = 0.0;
    std::vector<TaskMetrics> tasks;
    std::vector<RoutingTable> routing;
    std::vector<SampleRouting> per_sample;
    double mean_active_params = 0.0;
    std::size_t max_active_params = 0;
    double mean_active_encoder_params = 0.0;
    std::size_t max_encoders_evaluated = 0;

    /// First dependent / independent routing table, or nullptr.
    const RoutingTable* dep_table() const;
    const RoutingTable* indep_table() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    int stage = 1;
    double train_total = 0.0;
    double train_next_token = 0.0;
    double eval_next_token = 0.0;
    double eval_token_accuracy = 0.0;
};

struct RunReport {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    EvalReport final_train;
    EvalReport final_eval;
    std::string config_json;
    double wall_clock_seconds = 0.0;
};

/// Eval-mode pass (no smoothing, no graph) over `data`.
EvalReport evaluate(const MoweModel& model, const Dataset& data, std::size_t threads = 1,
                    double routing_weight = 0.1);

/// Called after every optimiser step; returning false stops training early.
using StepCallback = std::function<bool(const StepRecord&)>;

/// Single-stage training over `train_set` (dispatches to `train_two_stage`
/// when the config asks for it).
RunReport train(const TrainConfig& cfg, MoweModel& model, const Dataset& train_set, const Dataset& eval_set,
                const StepCallback& on_step = {});
/// Stage 1 on `stage_one_task` only, then stage 2 on every task, each with a
/// fresh cosine schedule.
RunReport train_two_stage(const TrainConfig& cfg, MoweModel& model, const Dataset& train_set,
                          const Dataset& eval_set, const StepCallback& on_step = {});

struct AblationRow {
    RouterSetup setup = RouterSetup::Off;
    std::size_t pool_size = 0;
    std::size_t mixtures = 0;
    double final_train_next_token = 0.0;
    double final_eval_next_token = 0.0;
    double eval_token_accuracy = 0.0;
    std::vector<TaskMetrics> eval_tasks;
    double mean_active_encoder_params = 0.0;
    /// Share of samples sent to the most used encoder by the first
    /// independent router; −1 when the setup has none.
    double indep_fixed_fraction = -1.0;
    RunReport report;
};

/// Pool sizes per setup: 2 weak encoders for one mixture, 4 for two.
std::vector<RouterSetup> ablation_setups();
std::size_t ablation_pool_size(RouterSetup s);

/// Trains and evaluates every router setup from the same base config.
std::vector<AblationRow> run_ablation_matrix(const ModelConfig& base, const TrainConfig& train_cfg,
                                             const Dataset& train_set, const Dataset& eval_set,
                                             std::uint64_t seed);

}  // namespace mowe
