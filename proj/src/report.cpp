// SPDX-License-Identifier: Apache-2.0
#include "mowe/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace mowe {

using nlohmann::json;

namespace {

// Shortest text that round-trips the double, so CSV values compare exactly.
std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

json table_json(const RoutingTable& t) {
    return {{"mixture", t.mixture},
            {"kind", to_string(t.kind)},
            {"task_ids", t.task_ids},
            {"counts", t.counts},
            {"proportions", t.proportions},
            {"max_overall_fraction", t.max_overall_fraction()},
            {"selection_entropy", t.selection_entropy()}};
}

}  // namespace

json to_json(const EvalReport& r, bool include_per_sample) {
    json j;
    j["samples"] = r.samples;
    j["next_token_loss"] = r.next_token_loss;
    j["token_accuracy"] = r.token_accuracy;
    j["mean_active_params"] = r.mean_active_params;
    j["max_active_params"] = r.max_active_params;
    j["mean_active_encoder_params"] = r.mean_active_encoder_params;
    j["max_encoders_evaluated"] = r.max_encoders_evaluated;
    auto& tasks = j["tasks"] = json::array();
    for (const auto& t : r.tasks) {
        tasks.push_back({{"task_id", t.task_id},
                         {"name", t.name},
                         {"count", t.count},
                         {"next_token_loss", t.next_token_loss},
                         {"token_accuracy", t.token_accuracy}});
    }
    auto& routing = j["routing"] = json::array();
    for (const auto& t : r.routing) routing.push_back(table_json(t));
    if (include_per_sample) {
        auto& ps = j["per_sample"] = json::array();
        for (const auto& s : r.per_sample) {
            ps.push_back({{"sample_id", s.sample_id},
                          {"task_id", s.task_id},
                          {"dep_selected", s.dep_selected},
                          {"indep_selected", s.indep_selected},
                          {"gates", s.gates}});
        }
    }
    return j;
}

json to_json(const RunReport& r, bool include_per_sample) {
    json j;
    auto& steps = j["steps"] = json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"step", s.step},
                         {"stage", s.stage},
                         {"epoch", s.epoch},
                         {"lr", s.lr},
                         {"total", s.total},
                         {"next_token", s.next_token},
                         {"indep_entropy", s.indep_entropy},
                         {"dep_entropy", s.dep_entropy},
                         {"dep_diversity", s.dep_diversity},
                         {"grad_norm", s.grad_norm}});
    }
    auto& epochs = j["epochs"] = json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"stage", e.stage},
                          {"train_total", e.train_total},
                          {"train_next_token", e.train_next_token},
                          {"eval_next_token", e.eval_next_token},
                          {"eval_token_accuracy", e.eval_token_accuracy}});
    }
    j["final_train"] = to_json(r.final_train, false);
    j["final_eval"] = to_json(r.final_eval, include_per_sample);
    j["config"] = r.config_json.empty() ? json::object() : json::parse(r.config_json);
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

void write_metrics_csv(std::ostream& os, const RunReport& r) {
    os << "step,stage,epoch,lr,total,next_token,indep_ent,dep_ent,dep_div,grad_norm\n";
    for (const auto& s : r.steps) {
        os << s.step << ',' << s.stage << ',' << s.epoch << ',' << num(s.lr) << ',' << num(s.total) << ','
           << num(s.next_token) << ',' << num(s.indep_entropy) << ',' << num(s.dep_entropy) << ','
           << num(s.dep_diversity) << ',' << num(s.grad_norm) << '\n';
    }
}

void write_routing_csv(std::ostream& os, const EvalReport& r) {
    std::size_t m = 0;
    for (const auto& t : r.routing)
        for (const auto& row : t.counts) m = std::max(m, row.size());
    os << "mixture,kind,task_id,task";
    for (std::size_t k = 0; k < m; ++k) os << ",p_enc" << k;
    for (std::size_t k = 0; k < m; ++k) os << ",n_enc" << k;
    os << '\n';
    for (const auto& t : r.routing) {
        for (std::size_t i = 0; i < t.task_ids.size(); ++i) {
            std::string name;
            for (const auto& tm : r.tasks)
                if (tm.task_id == t.task_ids[i]) name = tm.name;
            os << t.mixture << ',' << to_string(t.kind) << ',' << t.task_ids[i] << ',' << name;
            for (std::size_t k = 0; k < m; ++k) os << ',' << num(t.proportions[i][k]);
            for (std::size_t k = 0; k < m; ++k) os << ',' << t.counts[i][k];
            os << '\n';
        }
    }
}

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
    os << "setup,pool_size,mixtures,final_train_next_token,final_eval_next_token,eval_token_accuracy,"
          "mean_active_encoder_params,indep_fixed_fraction,steps\n";
    for (const auto& r : rows) {
        os << to_string(r.setup) << ',' << r.pool_size << ',' << r.mixtures << ',' << num(r.final_train_next_token)
           << ',' << num(r.final_eval_next_token) << ',' << num(r.eval_token_accuracy) << ','
           << num(r.mean_active_encoder_params) << ',' << num(r.indep_fixed_fraction) << ',' << r.report.steps.size()
           << '\n';
    }
}

std::string routing_summary(const EvalReport& r) {
    std::ostringstream os;
    for (const auto& t : r.routing) {
        os << "mixture " << t.mixture << " (" << to_string(t.kind) << "), overall entropy "
           << num(t.selection_entropy()) << " nats\n";
        for (std::size_t i = 0; i < t.task_ids.size(); ++i) {
            const auto& p = t.proportions[i];
            const auto best = std::max_element(p.begin(), p.end());
            std::string name;
            for (const auto& tm : r.tasks)
                if (tm.task_id == t.task_ids[i]) name = tm.name;
            char line[160];
            std::snprintf(line, sizeof(line), "  task %d %-10s majority encoder %ld (%.1f%%)\n", t.task_ids[i],
                          name.c_str(), best == p.end() ? -1L : static_cast<long>(best - p.begin()),
                          best == p.end() ? 0.0 : 100.0 * *best);
            os << line;
        }
    }
    return os.str();
}

}  // namespace mowe
