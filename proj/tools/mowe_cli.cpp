// SPDX-License-Identifier: Apache-2.0
// mowe: generate synthetic data, train, evaluate, ablate and inspect routing.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mowe/checkpoint.hpp"
#include "mowe/config.hpp"
#include "mowe/diagnostics.hpp"
#include "mowe/error.hpp"
#include "mowe/report.hpp"
#include "mowe/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mowe;

namespace {

constexpr const char* kVersion = "0.1.0";

// Shared flags. Precedence, lowest first: built-in defaults, the config file
// (--config, else $MOWE_CONFIG), --set overrides, then --seed / --threads.
struct Common {
    std::string config_path;
    std::string preset = "desk";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool quiet = false;

    void attach(CLI::App* app, bool with_config = true) {
        if (with_config) {
            app->add_option("-c,--config", config_path, "YAML config file (default: $MOWE_CONFIG)");
            app->add_option("--preset", preset, "Base defaults before the config file")
                ->check(CLI::IsMember({"desk", "paper"}));
            app->add_option("--set", overrides, "Override one key, e.g. --set trainer.epochs=3")->take_all();
            app->add_option("--seed", seed, "Root seed for every random stream");
        }
        app->add_option("--threads", threads, "Evaluation workers (1 is deterministic)");
        app->add_flag("-q,--quiet", quiet, "No progress output on stderr");
    }

    RunConfig resolve() const {
        RunConfig cfg = preset == "paper" ? RunConfig::paper() : RunConfig::desk();
        std::string path = config_path;
        if (path.empty()) {
            if (const char* env = std::getenv(kConfigEnvVar); env && *env) path = env;
        }
        if (!path.empty()) cfg = load_config_file(path, cfg);
        for (const auto& o : overrides) apply_override(cfg, o);
        if (seed) cfg.seed = *seed;
        if (threads) cfg.train.threads = *threads;
        return cfg;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Every command that writes a run directory records what it produced.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files) {
    json m;
    m["format"] = "mowe-run";
    m["tool_version"] = kVersion;
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["config"] = cfg;
    m["files"] = files;
    write_json(dir / "manifest.json", m);
}

struct Splits {
    Dataset train;
    Dataset eval;
};

bool is_dataset_dir(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) return false;
    try {
        return json::parse(in).value("format", "") == "mowe-dataset";
    } catch (const json::exception&) {
        return false;
    }
}

// A single dataset directory, or a bundle written by gen-data with train/ and eval/.
Splits load_splits(const fs::path& dir, const RunConfig& cfg) {
    if (is_dataset_dir(dir)) {
        Dataset all = load_dataset(dir);
        auto [train, eval] = split(all, cfg.data.train_fraction, cfg.seed);
        return {std::move(train), std::move(eval)};
    }
    if (is_dataset_dir(dir / "train")) {
        Splits s{load_dataset(dir / "train"), {}};
        if (is_dataset_dir(dir / "eval")) s.eval = load_dataset(dir / "eval");
        return s;
    }
    throw FormatError("'" + dir.string() + "' is neither a dataset nor a gen-data bundle");
}

Splits make_splits(const std::string& data_dir, const RunConfig& cfg) {
    if (!data_dir.empty()) return load_splits(data_dir, cfg);
    Dataset all = generate(cfg.data, cfg.seed);
    auto [train, eval] = split(all, cfg.data.train_fraction, cfg.seed);
    return {std::move(train), std::move(eval)};
}

Dataset pick_split(const std::string& dir, const std::string& which, const RunConfig& cfg) {
    Splits s = load_splits(dir, cfg);
    if (which == "train") return s.train;
    if (which == "eval") return s.eval;
    Dataset all = s.train;
    all.samples.insert(all.samples.end(), s.eval.samples.begin(), s.eval.samples.end());
    return all;
}

StepCallback progress(bool quiet) {
    if (quiet) return {};
    return [](const StepRecord& r) {
        if (r.step % 10 == 0) {
            std::fprintf(stderr, "step %4zu stage %d epoch %zu lr %.3g loss %.4f (next-token %.4f)\n", r.step, r.stage,
                         r.epoch, r.lr, r.total, r.next_token);
        }
        return true;
    };
}

void emit_error(const std::string& kind, const std::string& message) {
    json e = {{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << e.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MoWE desk-scale toolkit: weak-encoder routing on synthetic multi-task data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // gen-data
    Common gen_common;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "Generate and split a synthetic dataset");
    gen_common.attach(gen);
    gen->add_option("-o,--out", gen_out, "Output directory")->required();

    // train
    Common train_common;
    std::string train_data, train_out;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint + report");
    train_common.attach(train_cmd);
    train_cmd->add_option("-d,--data", train_data, "Dataset or gen-data bundle (default: generate from config)");
    train_cmd->add_option("-o,--out", train_out, "Run directory")->required();

    // eval
    Common eval_common;
    std::string eval_ckpt, eval_data, eval_split = "eval", eval_out;
    bool eval_per_sample = false;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; prints metrics JSON");
    eval_common.attach(eval_cmd, false);
    eval_cmd->add_option("-k,--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("-d,--data", eval_data, "Dataset or gen-data bundle")->required();
    eval_cmd->add_option("--split", eval_split, "Which split of a bundle")->check(CLI::IsMember({"train", "eval", "all"}));
    eval_cmd->add_option("-o,--out", eval_out, "Also write the JSON here");
    eval_cmd->add_flag("--per-sample", eval_per_sample, "Include per-sample routing decisions");

    // ablate
    Common ablate_common;
    std::string ablate_data, ablate_out;
    auto* ablate = app.add_subcommand("ablate", "Train every router setup and compare");
    ablate_common.attach(ablate);
    ablate->add_option("-d,--data", ablate_data, "Dataset or gen-data bundle (default: generate from config)");
    ablate->add_option("-o,--out", ablate_out, "Run directory")->required();

    // route-report
    Common route_common;
    std::string route_ckpt, route_data, route_split = "eval", route_out;
    auto* route = app.add_subcommand("route-report", "Task x encoder routing proportions (CSV on stdout)");
    route_common.attach(route, false);
    route->add_option("-k,--checkpoint", route_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    route->add_option("-d,--data", route_data, "Dataset or gen-data bundle")->required();
    route->add_option("--split", route_split, "Which split of a bundle")->check(CLI::IsMember({"train", "eval", "all"}));
    route->add_option("-o,--out", route_out, "Write routing.csv and summary.txt here instead");

    // grad-check
    Common grad_common;
    double grad_eps = 1e-5;
    auto* grad = app.add_subcommand("grad-check", "Finite-difference check of every op family");
    grad_common.attach(grad);
    grad->add_option("--eps", grad_eps, "Central-difference step");

    // config show-defaults
    std::string show_preset = "desk";
    auto* config_cmd = app.add_subcommand("config", "Configuration helpers");
    config_cmd->require_subcommand(1);
    auto* show = config_cmd->add_subcommand("show-defaults", "Print every key with its default value");
    show->add_option("--preset", show_preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage_error", e.what());
        return 64;
    }

    try {
        if (*gen) {
            const RunConfig cfg = gen_common.resolve();
            Dataset all = generate(cfg.data, cfg.seed);
            auto [train, eval] = split(all, cfg.data.train_fraction, cfg.seed);
            fs::create_directories(gen_out);
            save_dataset(train, fs::path(gen_out) / "train");
            save_dataset(eval, fs::path(gen_out) / "eval");
            write_text(fs::path(gen_out) / "config.yaml", dump_config_yaml(cfg));
            write_manifest(gen_out, "gen-data", cfg, {"train/manifest.json", "train/features.bin", "eval/manifest.json",
                                                      "eval/features.bin", "config.yaml"});
            std::cout << json{{"train_samples", train.size()}, {"eval_samples", eval.size()},
                              {"tasks", all.tasks.size()}, {"out", gen_out}}.dump() << "\n";
        } else if (*train_cmd) {
            const RunConfig cfg = train_common.resolve();
            Splits data = make_splits(train_data, cfg);
            MoweModel model(cfg.model_config(), data.train.seq_len, cfg.seed);
            RunReport report = train(cfg.train_config(), model, data.train, data.eval, progress(train_common.quiet));
            report.config_json = json(cfg).dump();
            const fs::path dir = train_out;
            fs::create_directories(dir);
            save_checkpoint(dir / "checkpoint.bin", model, cfg);
            write_json(dir / "report.json", to_json(report));
            std::ofstream metrics(dir / "metrics.csv");
            write_metrics_csv(metrics, report);
            std::ofstream routing(dir / "routing.csv");
            write_routing_csv(routing, report.final_eval);
            write_text(dir / "config.yaml", dump_config_yaml(cfg));
            write_manifest(dir, "train", cfg,
                           {"checkpoint.bin", "report.json", "metrics.csv", "routing.csv", "config.yaml"});
            std::cout << json{{"steps", report.steps.size()},
                              {"final_train_next_token", report.final_train.next_token_loss},
                              {"final_eval_next_token", report.final_eval.next_token_loss},
                              {"eval_token_accuracy", report.final_eval.token_accuracy},
                              {"out", train_out}}.dump() << "\n";
        } else if (*eval_cmd) {
            LoadedCheckpoint ck = load_checkpoint(eval_ckpt);
            const std::size_t threads = eval_common.threads.value_or(ck.config.train.threads);
            const Dataset data = pick_split(eval_data, eval_split, ck.config);
            const EvalReport r = evaluate(ck.model, data, threads, ck.config.train.routing_loss_weight);
            const json j = to_json(r, eval_per_sample);
            if (!eval_out.empty()) write_json(eval_out, j);
            std::cout << j.dump(2) << "\n";
        } else if (*ablate) {
            const RunConfig cfg = ablate_common.resolve();
            Splits data = make_splits(ablate_data, cfg);
            const auto rows = run_ablation_matrix(cfg.model_config(), cfg.train_config(), data.train, data.eval, cfg.seed);
            const fs::path dir = ablate_out;
            fs::create_directories(dir);
            std::ofstream csv(dir / "ablation.csv");
            write_ablation_csv(csv, rows);
            json all = json::array();
            for (const auto& r : rows) {
                all.push_back({{"setup", to_string(r.setup)}, {"pool_size", r.pool_size}, {"report", to_json(r.report, false)}});
            }
            write_json(dir / "ablation.json", all);
            write_text(dir / "config.yaml", dump_config_yaml(cfg));
            write_manifest(dir, "ablate", cfg, {"ablation.csv", "ablation.json", "config.yaml"});
            write_ablation_csv(std::cout, rows);
        } else if (*route) {
            LoadedCheckpoint ck = load_checkpoint(route_ckpt);
            const std::size_t threads = route_common.threads.value_or(ck.config.train.threads);
            const Dataset data = pick_split(route_data, route_split, ck.config);
            const EvalReport r = evaluate(ck.model, data, threads, ck.config.train.routing_loss_weight);
            if (route_out.empty()) {
                write_routing_csv(std::cout, r);
                if (!route_common.quiet) std::cerr << routing_summary(r);
            } else {
                fs::create_directories(route_out);
                std::ofstream csv(fs::path(route_out) / "routing.csv");
                write_routing_csv(csv, r);
                write_text(fs::path(route_out) / "summary.txt", routing_summary(r));
                write_manifest(route_out, "route-report", ck.config, {"routing.csv", "summary.txt"});
                std::cout << routing_summary(r);
            }
        } else if (*grad) {
            const RunConfig cfg = grad_common.resolve();
            const auto results = run_gradient_suite(cfg.seed, grad_eps);
            json j = json::array();
            bool ok = true;
            for (const auto& r : results) {
                ok = ok && r.passed();
                j.push_back({{"family", r.family},
                             {"passed", r.passed()},
                             {"tolerance", r.tolerance},
                             {"max_relative_error", r.report.max_relative_error},
                             {"max_absolute_error", r.report.max_absolute_error},
                             {"checked", r.report.checked},
                             {"worst_tensor", r.report.worst_tensor},
                             {"seconds", r.seconds}});
            }
            std::cout << json{{"passed", ok}, {"families", j}}.dump(2) << "\n";
            if (!ok) {
                emit_error("gradient_check_failed", "one or more operation families exceeded tolerance");
                return 1;
            }
        } else if (*show) {
            std::cout << dump_config_yaml(show_preset == "paper" ? RunConfig::paper() : RunConfig::desk());
        }
    } catch (const Error& e) {
        emit_error(e.kind(), e.what());
        return 2;
    } catch (const std::exception& e) {
        emit_error("internal_error", e.what());
        return 70;
    }
    return 0;
}
