// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "mowe/trainer.hpp"

namespace mowe {

nlohmann::json to_json(const EvalReport& r, bool include_per_sample = true);
/// Wall clock is reported under "wall_clock_seconds" and is the only field
/// that differs between otherwise identical runs.
nlohmann::json to_json(const RunReport& r, bool include_per_sample = true);

/// step,stage,epoch,lr,total,next_token,indep_ent,dep_ent,dep_div,grad_norm
void write_metrics_csv(std::ostream& os, const RunReport& r);
/// One row per (mixture, task): proportions over the pool, then counts.
void write_routing_csv(std::ostream& os, const EvalReport& r);
/// Side-by-side final losses and metrics, one row per router setup.
void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);

/// Plain-text summary of the dependent router table (majority encoder and
/// share per task).
std::string routing_summary(const EvalReport& r);

}  // namespace mowe
