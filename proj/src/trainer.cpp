// SPDX-License-Identifier: Apache-2.0
#include "mowe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <thread>

#include "mowe/config.hpp"
#include "mowe/error.hpp"
#include "mowe/ops.hpp"

namespace mowe {

std::string to_string(Regime r) { return r == Regime::SingleStage ? "single-stage" : "two-stage"; }

Regime regime_from_string(const std::string& s) {
    if (s == "single-stage") return Regime::SingleStage;
    if (s == "two-stage") return Regime::TwoStage;
    throw ConfigError("trainer.regime must be 'single-stage' or 'two-stage', got '" + s + "'");
}

double cosine_lr(double peak, std::size_t step, std::size_t total_steps) {
    if (total_steps == 0) return peak;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<NamedTensor> params, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step(double lr, double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].tensor;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j] * grad_scale;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
            w[j] -= lr * (update + wd_ * w[j]);
        }
    }
}

double global_grad_norm(const std::vector<NamedTensor>& params) {
    double s = 0.0;
    for (const auto& p : params)
        for (double g : p.tensor.grad()) s += g * g;
    return std::sqrt(s);
}

double RoutingTable::max_overall_fraction() const {
    std::vector<std::size_t> totals;
    std::size_t all = 0;
    for (const auto& row : counts) {
        if (totals.size() < row.size()) totals.resize(row.size(), 0);
        for (std::size_t k = 0; k < row.size(); ++k) totals[k] += row[k];
        all += std::accumulate(row.begin(), row.end(), std::size_t{0});
    }
    if (all == 0) return 0.0;
    return static_cast<double>(*std::max_element(totals.begin(), totals.end())) / static_cast<double>(all);
}

double RoutingTable::selection_entropy() const {
    std::vector<double> totals;
    double all = 0.0;
    for (const auto& row : counts) {
        if (totals.size() < row.size()) totals.resize(row.size(), 0.0);
        for (std::size_t k = 0; k < row.size(); ++k) {
            totals[k] += static_cast<double>(row[k]);
            all += static_cast<double>(row[k]);
        }
    }
    double h = 0.0;
    for (double t : totals) {
        if (t > 0.0) h -= (t / all) * std::log(t / all);
    }
    return h;
}

const RoutingTable* EvalReport::dep_table() const {
    for (const auto& t : routing)
        if (t.kind == RouterKind::Dep) return &t;
    return nullptr;
}

const RoutingTable* EvalReport::indep_table() const {
    for (const auto& t : routing)
        if (t.kind == RouterKind::Indep) return &t;
    return nullptr;
}

namespace {

struct SampleEval {
    double loss = 0.0;
    std::size_t correct = 0;
    std::size_t targets = 0;
    std::vector<std::size_t> selected;
    std::vector<std::vector<double>> gates;
    std::vector<std::size_t> evaluated;
    std::size_t weak_evaluations = 0;
};

SampleEval eval_one(const MoweModel& model, const FeatureSequence& a) {
    NoGradGuard guard;
    SampleForward f = model.forward(a, false);
    SampleEval e;
    e.loss = ops::cross_entropy_rows(f.logits, f.labels).item();
    const std::size_t v = f.logits.cols();
    const auto logits = f.logits.data();
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
        if (f.labels[i] < 0) continue;
        const auto row = logits.subspan(i * v, v);
        const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        e.correct += pred == f.labels[i];
        ++e.targets;
    }
    for (const auto& d : f.decisions) {
        e.selected.push_back(d.selected);
        const auto g = d.gate.data();
        e.gates.emplace_back(g.begin(), g.end());
    }
    e.evaluated = f.evaluated_encoders;
    e.weak_evaluations = f.weak_evaluations;
    return e;
}

std::string first_non_finite(const BatchForward& bf, const std::vector<NamedTensor>& params, bool grads) {
    if (!grads) {
        const std::pair<const char*, const Tensor*> parts[] = {{"loss.next_token", &bf.next_token},
                                                               {"loss.indep_entropy", &bf.routing.indep_entropy},
                                                               {"loss.dep_entropy", &bf.routing.dep_entropy},
                                                               {"loss.dep_diversity", &bf.routing.dep_diversity}};
        for (const auto& [name, t] : parts)
            if (!std::isfinite(t->item())) return name;
    }
    for (const auto& p : params) {
        const auto values = grads ? p.tensor.grad() : p.tensor.data();
        for (double x : values)
            if (!std::isfinite(x)) return (grads ? "grad of " : "") + p.name;
    }
    return "unknown";
}

// Shared loop for one stage; `subset` lists the training samples of that stage.
void run_stage(const TrainConfig& cfg, MoweModel& model, const std::vector<const FeatureSequence*>& subset,
               const Dataset& eval_set, std::size_t epochs, int stage, RunReport& report,
               const StepCallback& on_step, bool& stopped) {
    if (epochs == 0 || subset.empty()) return;
    const auto params = model.trainable();
    AdamW opt(params, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    const std::size_t bs = std::max<std::size_t>(cfg.batch_size, 1);
    const std::size_t per_epoch = (subset.size() + bs - 1) / bs;
    const std::size_t total_steps = per_epoch * epochs;
    std::size_t step = 0;
    Rng shuffle_rng(cfg.seed, "train/shuffle/stage" + std::to_string(stage));
    std::vector<const FeatureSequence*> order = subset;
    for (std::size_t epoch = 0; epoch < epochs && !stopped; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double sum_total = 0.0, sum_nt = 0.0;
        std::size_t n_steps = 0;
        for (std::size_t b = 0; b < per_epoch && !stopped; ++b) {
            const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
            std::span<const FeatureSequence* const> batch(order.data() + lo, hi - lo);
            for (const auto& p : params) const_cast<Tensor&>(p.tensor).zero_grad();
            BatchForward bf = model.forward_batch(batch, true, cfg.routing_loss_weight);
            const double loss = bf.loss.total.item();
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite loss at step " + std::to_string(report.steps.size()) +
                                   "; first non-finite tensor: " + first_non_finite(bf, params, false));
            }
            bf.loss.total.backward();
            const double norm = global_grad_norm(params);
            if (!std::isfinite(norm)) {
                throw NumericError("non-finite gradient at step " + std::to_string(report.steps.size()) +
                                   "; first non-finite tensor: " + first_non_finite(bf, params, true));
            }
            const double scale = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
            const double lr = cosine_lr(cfg.learning_rate, step, total_steps);
            opt.step(lr, scale);

            StepRecord rec;
            rec.step = report.steps.size();
            rec.epoch = epoch;
            rec.stage = stage;
            rec.lr = lr;
            rec.total = loss;
            rec.next_token = bf.next_token.item();
            rec.indep_entropy = bf.routing.indep_entropy.item();
            rec.dep_entropy = bf.routing.dep_entropy.item();
            rec.dep_diversity = bf.routing.dep_diversity.item();
            rec.grad_norm = norm;
            report.steps.push_back(rec);
            sum_total += rec.total;
            sum_nt += rec.next_token;
            ++n_steps;
            ++step;
            if (on_step && !on_step(rec)) stopped = true;
        }
        EpochRecord er;
        er.epoch = epoch;
        er.stage = stage;
        er.train_total = n_steps ? sum_total / static_cast<double>(n_steps) : 0.0;
        er.train_next_token = n_steps ? sum_nt / static_cast<double>(n_steps) : 0.0;
        if (eval_set.size() > 0) {
            const EvalReport ev = evaluate(model, eval_set, cfg.threads, cfg.routing_loss_weight);
            er.eval_next_token = ev.next_token_loss;
            er.eval_token_accuracy = ev.token_accuracy;
        }
        report.epochs.push_back(er);
    }
}

std::string echo(const TrainConfig& cfg, const MoweModel& model) {
    nlohmann::json j;
    j["model"] = model.config();
    j["trainer"] = cfg;
    j["seed"] = cfg.seed;
    return j.dump();
}

void finish(const TrainConfig& cfg, const MoweModel& model, const Dataset& train_set, const Dataset& eval_set,
            RunReport& report, std::chrono::steady_clock::time_point start) {
    if (train_set.size() > 0) report.final_train = evaluate(model, train_set, cfg.threads, cfg.routing_loss_weight);
    if (eval_set.size() > 0) report.final_eval = evaluate(model, eval_set, cfg.threads, cfg.routing_loss_weight);
    report.config_json = echo(cfg, model);
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<const FeatureSequence*> pointers(const Dataset& data, int only_task = -1) {
    std::vector<const FeatureSequence*> out;
    for (const auto& s : data.samples)
        if (only_task < 0 || s.task_id == only_task) out.push_back(&s);
    return out;
}

}  // namespace

EvalReport evaluate(const MoweModel& model, const Dataset& data, std::size_t threads, double /*routing_weight*/) {
    const std::size_t n = data.samples.size();
    std::vector<SampleEval> results(n);
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) results[i] = eval_one(model, data.samples[i]);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) results[i] = eval_one(model, data.samples[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    EvalReport r;
    r.samples = n;
    std::vector<int> task_ids;
    for (const auto& t : data.tasks) task_ids.push_back(t.id);
    const std::size_t m = model.pool().size();
    const auto& mixtures = model.mixtures();
    for (std::size_t mx = 0; mx < mixtures.size(); ++mx) {
        RoutingTable table;
        table.mixture = mx;
        table.kind = mixtures[mx].kind;
        table.task_ids = task_ids;
        table.counts.assign(task_ids.size(), std::vector<std::size_t>(m, 0));
        r.routing.push_back(std::move(table));
    }
    std::vector<TaskMetrics> tasks(task_ids.size());
    std::vector<std::size_t> task_correct(task_ids.size(), 0), task_targets(task_ids.size(), 0);
    for (std::size_t t = 0; t < task_ids.size(); ++t) {
        tasks[t].task_id = task_ids[t];
        tasks[t].name = data.tasks[t].name;
    }
    std::size_t correct = 0, targets = 0;
    double loss = 0.0, active = 0.0, active_enc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = data.samples[i];
        const auto& e = results[i];
        const auto t = static_cast<std::size_t>(std::find(task_ids.begin(), task_ids.end(), s.task_id) - task_ids.begin());
        if (t >= task_ids.size()) throw IndexError("sample " + std::to_string(s.sample_id) + " has unknown task");
        loss += e.loss;
        correct += e.correct;
        targets += e.targets;
        tasks[t].count += 1;
        tasks[t].next_token_loss += e.loss;
        task_correct[t] += e.correct;
        task_targets[t] += e.targets;
        SampleRouting sr;
        sr.sample_id = s.sample_id;
        sr.task_id = s.task_id;
        for (std::size_t mx = 0; mx < e.selected.size(); ++mx) {
            r.routing[mx].counts[t][e.selected[mx]] += 1;
            auto& slot = mixtures[mx].kind == RouterKind::Dep ? sr.dep_selected : sr.indep_selected;
            if (slot < 0) slot = static_cast<long>(e.selected[mx]);
        }
        sr.gates = e.gates;
        r.per_sample.push_back(std::move(sr));
        const std::size_t ap = model.active_params(e.evaluated);
        active += static_cast<double>(ap);
        r.max_active_params = std::max(r.max_active_params, ap);
        active_enc += static_cast<double>(model.active_encoder_params(e.evaluated));
        r.max_encoders_evaluated = std::max(r.max_encoders_evaluated, 1 + e.weak_evaluations);
    }
    if (n > 0) {
        r.next_token_loss = loss / static_cast<double>(n);
        r.token_accuracy = targets ? static_cast<double>(correct) / static_cast<double>(targets) : 0.0;
        r.mean_active_params = active / static_cast<double>(n);
        r.mean_active_encoder_params = active_enc / static_cast<double>(n);
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].count) {
            tasks[t].next_token_loss /= static_cast<double>(tasks[t].count);
            tasks[t].token_accuracy = task_targets[t] ? static_cast<double>(task_correct[t]) / task_targets[t] : 0.0;
        }
    }
    r.tasks = std::move(tasks);
    for (auto& table : r.routing) {
        table.proportions.assign(task_ids.size(), std::vector<double>(m, 0.0));
        for (std::size_t t = 0; t < task_ids.size(); ++t) {
            const auto total = std::accumulate(table.counts[t].begin(), table.counts[t].end(), std::size_t{0});
            for (std::size_t k = 0; k < m && total; ++k) {
                table.proportions[t][k] = static_cast<double>(table.counts[t][k]) / static_cast<double>(total);
            }
        }
    }
    return r;
}

RunReport train(const TrainConfig& cfg, MoweModel& model, const Dataset& train_set, const Dataset& eval_set,
                const StepCallback& on_step) {
    if (cfg.regime == Regime::TwoStage) return train_two_stage(cfg, model, train_set, eval_set, on_step);
    const auto start = std::chrono::steady_clock::now();
    RunReport report;
    bool stopped = false;
    run_stage(cfg, model, pointers(train_set), eval_set, cfg.epochs, 1, report, on_step, stopped);
    finish(cfg, model, train_set, eval_set, report, start);
    return report;
}

RunReport train_two_stage(const TrainConfig& cfg, MoweModel& model, const Dataset& train_set, const Dataset& eval_set,
                          const StepCallback& on_step) {
    const auto start = std::chrono::steady_clock::now();
    const bool known = std::any_of(train_set.tasks.begin(), train_set.tasks.end(),
                                   [&](const TaskSpec& t) { return t.id == cfg.stage_one_task; });
    if (!known) throw ConfigError("trainer.stage_one_task " + std::to_string(cfg.stage_one_task) + " is not in the dataset");
    RunReport report;
    bool stopped = false;
    const std::size_t first = cfg.stage_one_epochs ? cfg.stage_one_epochs : cfg.epochs;
    run_stage(cfg, model, pointers(train_set, cfg.stage_one_task), eval_set, first, 1, report, on_step, stopped);
    run_stage(cfg, model, pointers(train_set), eval_set, cfg.epochs, 2, report, on_step, stopped);
    finish(cfg, model, train_set, eval_set, report, start);
    return report;
}

std::vector<RouterSetup> ablation_setups() {
    return {RouterSetup::Off, RouterSetup::Indep, RouterSetup::Dep,
            RouterSetup::IndepX2, RouterSetup::DepX2, RouterSetup::IndepDep};
}

std::size_t ablation_pool_size(RouterSetup s) {
    const std::size_t n = mixture_kinds(s).size();
    return n == 0 ? 0 : (n == 1 ? 2 : 4);
}

std::vector<AblationRow> run_ablation_matrix(const ModelConfig& base, const TrainConfig& train_cfg,
                                             const Dataset& train_set, const Dataset& eval_set, std::uint64_t seed) {
    std::vector<AblationRow> rows;
    for (RouterSetup setup : ablation_setups()) {
        ModelConfig cfg = base;
        cfg.routing.setup = setup;
        const std::size_t m = ablation_pool_size(setup);
        std::vector<std::size_t> natives;
        for (std::size_t k = 0; k < m; ++k) {
            natives.push_back(base.pool.weak_native.empty() ? base.pool.d_weak
                                                            : base.pool.weak_native[k % base.pool.weak_native.size()]);
        }
        cfg.pool.weak_native = natives;
        if (cfg.routing.prior_favored >= std::max<std::size_t>(m, 1)) cfg.routing.prior_favored = 0;
        MoweModel model(cfg, train_set.seq_len, seed);
        AblationRow row;
        row.setup = setup;
        row.pool_size = m;
        row.mixtures = mixture_kinds(setup).size();
        row.report = train(train_cfg, model, train_set, eval_set);
        row.final_train_next_token = row.report.final_train.next_token_loss;
        row.final_eval_next_token = row.report.final_eval.next_token_loss;
        row.eval_token_accuracy = row.report.final_eval.token_accuracy;
        row.eval_tasks = row.report.final_eval.tasks;
        row.mean_active_encoder_params = row.report.final_eval.mean_active_encoder_params;
        if (const auto* t = row.report.final_eval.indep_table()) row.indep_fixed_fraction = t->max_overall_fraction();
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace mowe
