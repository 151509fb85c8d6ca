// SPDX-License-Identifier: Apache-2.0
// Python bindings. Configs and reports cross the boundary as plain dicts
// (through JSON); tensors cross as float64 NumPy arrays (always copied).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mowe/checkpoint.hpp"
#include "mowe/config.hpp"
#include "mowe/diagnostics.hpp"
#include "mowe/error.hpp"
#include "mowe/ops.hpp"
#include "mowe/report.hpp"
#include "mowe/routing.hpp"
#include "mowe/trainer.hpp"

namespace py = pybind11;
using namespace mowe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

RunConfig config_from(const py::object& obj) {
    if (obj.is_none()) return RunConfig::desk();
    return run_config_from_json(from_py(obj));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_array(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<Tensor> rows_of(const Array& gates) {
    if (gates.ndim() != 2) throw DimensionError("expected a [batch x M] array of gates");
    std::vector<Tensor> out;
    const auto m = static_cast<std::size_t>(gates.shape(1));
    for (py::ssize_t i = 0; i < gates.shape(0); ++i) {
        const double* row = gates.data() + i * gates.shape(1);
        out.emplace_back(Shape{m}, std::vector<double>(row, row + m));
    }
    return out;
}

py::dict decision_dict(const RouterDecision& d) {
    py::dict out;
    out["gate"] = to_array(d.gate);
    out["selected"] = d.selected;
    out["smoothed"] = d.smoothed;
    out["epsilon"] = d.epsilon;
    return out;
}

py::dict sample_dict(const FeatureSequence& s) {
    py::dict out;
    out["features"] = to_array(s.features);
    out["task_id"] = s.task_id;
    out["instruction"] = s.instruction;
    out["targets"] = s.targets;
    out["sample_id"] = s.sample_id;
    return out;
}

}  // namespace

PYBIND11_MODULE(_mowe, m) {
    m.doc() = "Mixture of weak encoders: routing, training and evaluation";

    auto base = py::register_exception<Error>(m, "MoweError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<DimensionError>(m, "DimensionError", base);
    py::register_exception<ArgumentError>(m, "ArgumentError", base);
    py::register_exception<IndexError>(m, "IndexError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<NumericError>(m, "NumericError", base);

    // Configuration.
    m.def(
        "default_config",
        [](const std::string& preset) {
            if (preset == "desk") return to_py(RunConfig::desk());
            if (preset == "paper") return to_py(RunConfig::paper());
            throw ConfigError("preset must be 'desk' or 'paper', got '" + preset + "'");
        },
        py::arg("preset") = "desk");
    m.def(
        "config_from_yaml",
        [](const std::string& text, const py::object& base) {
            return to_py(parse_config_yaml(text, config_from(base), "<python>"));
        },
        py::arg("text"), py::arg("base") = py::none());
    m.def(
        "config_to_yaml", [](const py::object& cfg) { return dump_config_yaml(config_from(cfg)); },
        py::arg("config"));
    m.def(
        "normalize_config", [](const py::object& cfg) { return to_py(config_from(cfg)); }, py::arg("config"),
        "Fill in every missing key and validate a config dict.");

    // Datasets.
    py::class_<Dataset>(m, "Dataset")
        .def("__len__", &Dataset::size)
        .def_readonly("seq_len", &Dataset::seq_len)
        .def_readonly("d_in", &Dataset::d_in)
        .def("__getitem__",
             [](const Dataset& d, py::ssize_t i) {
                 if (i < 0) i += static_cast<py::ssize_t>(d.size());
                 if (i < 0 || static_cast<std::size_t>(i) >= d.size()) throw py::index_error();
                 return sample_dict(d.samples[static_cast<std::size_t>(i)]);
             })
        .def_property_readonly("task_ids",
                               [](const Dataset& d) {
                                   std::vector<int> ids;
                                   for (const auto& s : d.samples) ids.push_back(s.task_id);
                                   return ids;
                               })
        .def_property_readonly("tasks",
                               [](const Dataset& d) {
                                   py::list out;
                                   for (const auto& t : d.tasks) {
                                       py::dict row;
                                       row["id"] = t.id;
                                       row["name"] = t.name;
                                       row["pattern"] = to_string(t.pattern);
                                       row["speech_like"] = t.speech_like;
                                       row["center"] = t.center;
                                       out.append(row);
                                   }
                                   return out;
                               })
        .def(
            "split", [](const Dataset& d, double fraction, std::uint64_t seed) { return split(d, fraction, seed); },
            py::arg("train_fraction"), py::arg("seed"))
        .def("save", [](const Dataset& d, const std::filesystem::path& dir) { save_dataset(d, dir); });
    m.def(
        "generate_dataset",
        [](const py::object& cfg) {
            const RunConfig rc = config_from(cfg);
            return generate(rc.data, rc.seed);
        },
        py::arg("config") = py::none(), "Synthetic multi-task dataset from the config's data section and seed.");
    m.def("load_dataset", [](const std::filesystem::path& dir) { return load_dataset(dir); });

    // Model.
    py::class_<MoweModel>(m, "Model")
        .def(py::init([](const py::object& cfg, std::size_t seq_len) {
                 const RunConfig rc = config_from(cfg);
                 return MoweModel(rc.model_config(), seq_len, rc.seed);
             }),
             py::arg("config") = py::none(), py::arg("seq_len") = 128)
        .def_property_readonly("seq_len", &MoweModel::seq_len)
        .def_property_readonly("param_count", &MoweModel::param_count)
        .def_property_readonly("pool_size", [](const MoweModel& mm) { return mm.pool().size(); })
        .def_property_readonly("mixture_kinds",
                               [](const MoweModel& mm) {
                                   std::vector<std::string> out;
                                   for (const auto& mix : mm.mixtures()) out.push_back(to_string(mix.kind));
                                   return out;
                               })
        .def("parameters",
             [](const MoweModel& mm, bool trainable_only) {
                 py::dict out;
                 for (const auto& p : trainable_only ? mm.trainable() : mm.parameters())
                     out[py::str(p.name)] = to_array(p.tensor);
                 return out;
             },
             py::arg("trainable_only") = false)
        .def("encoder_params",
             [](const MoweModel& mm) {
                 const ParamCountReport c = count_params(mm.pool());
                 py::dict out;
                 out["base"] = c.base;
                 out["weak"] = c.weak;
                 out["total"] = c.total;
                 out["min_ratio"] = c.min_ratio;
                 return out;
             })
        .def(
            "forward",
            [](const MoweModel& mm, const Dataset& d, std::size_t index, bool training) {
                if (index >= d.size()) throw py::index_error();
                SampleForward f;
                {
                    py::gil_scoped_release release;
                    NoGradGuard guard;
                    f = mm.forward(d.samples[index], training);
                }
                py::dict out;
                out["logits"] = to_array(f.logits);
                out["labels"] = f.labels;
                py::list decisions;
                for (const auto& dec : f.decisions) decisions.append(decision_dict(dec));
                out["decisions"] = decisions;
                out["evaluated_encoders"] = f.evaluated_encoders;
                return out;
            },
            py::arg("dataset"), py::arg("index"), py::arg("training") = false)
        .def(
            "evaluate",
            [](const MoweModel& mm, const Dataset& d, std::size_t threads, bool per_sample) {
                EvalReport r;
                {
                    py::gil_scoped_release release;
                    r = evaluate(mm, d, threads);
                }
                return to_py(to_json(r, per_sample));
            },
            py::arg("dataset"), py::arg("threads") = 1, py::arg("per_sample") = false)
        .def(
            "save",
            [](const MoweModel& mm, const std::filesystem::path& path, const py::object& cfg) {
                save_checkpoint(path, mm, config_from(cfg));
            },
            py::arg("path"), py::arg("config") = py::none());
    m.def(
        "load_checkpoint",
        [](const std::filesystem::path& path) {
            LoadedCheckpoint c = load_checkpoint(path);
            return py::make_tuple(std::move(c.model), to_py(c.config));
        },
        py::arg("path"), "Returns (model, config).");

    // Training.
    m.def(
        "train",
        [](const py::object& cfg, const Dataset& train_set, const Dataset& eval_set) {
            const RunConfig rc = config_from(cfg);
            MoweModel mm(rc.model_config(), train_set.seq_len, rc.seed);
            RunReport report;
            {
                py::gil_scoped_release release;
                report = train(rc.train_config(), mm, train_set, eval_set);
            }
            auto j = to_json(report, false);
            j["config"] = nlohmann::json(rc);
            return py::make_tuple(std::move(mm), to_py(j));
        },
        py::arg("config"), py::arg("train_set"), py::arg("eval_set"),
        "Trains a fresh model seeded from the config; returns (model, report).");
    m.def(
        "run_ablation",
        [](const py::object& cfg, const Dataset& train_set, const Dataset& eval_set) {
            const RunConfig rc = config_from(cfg);
            std::vector<AblationRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_ablation_matrix(rc.model_config(), rc.train_config(), train_set, eval_set, rc.seed);
            }
            py::list out;
            for (const auto& r : rows) {
                py::dict row;
                row["setup"] = to_string(r.setup);
                row["pool_size"] = r.pool_size;
                row["mixtures"] = r.mixtures;
                row["final_train_next_token"] = r.final_train_next_token;
                row["final_eval_next_token"] = r.final_eval_next_token;
                row["eval_token_accuracy"] = r.eval_token_accuracy;
                row["mean_active_encoder_params"] = r.mean_active_encoder_params;
                row["indep_fixed_fraction"] = r.indep_fixed_fraction;
                out.append(row);
            }
            return out;
        },
        py::arg("config"), py::arg("train_set"), py::arg("eval_set"));
    m.def(
        "grad_check",
        [](std::uint64_t seed, double eps) {
            py::list out;
            for (const auto& r : run_gradient_suite(seed, eps)) {
                py::dict row;
                row["family"] = r.family;
                row["max_relative_error"] = r.report.max_relative_error;
                row["tolerance"] = r.tolerance;
                row["checked"] = r.report.checked;
                row["passed"] = r.passed();
                out.append(row);
            }
            return out;
        },
        py::arg("seed") = 0, py::arg("eps") = 1e-5);
    m.def("cosine_lr", &cosine_lr, py::arg("peak"), py::arg("step"), py::arg("total_steps"));

    // Routing primitives on NumPy arrays.
    m.def(
        "softmax", [](const Array& v) { return to_array(ops::softmax(from_array(v))); }, py::arg("v"));
    m.def(
        "keep_top1", [](const Array& v) { return to_array(keep_top1(from_array(v))); }, py::arg("v"));
    m.def(
        "route_indep", [](const Array& w) { return decision_dict(route_indep({from_array(w)})); }, py::arg("w_indep"));
    m.def(
        "route_dep",
        [](const Array& w, const Array& z, bool training, double epsilon_scale) {
            return decision_dict(route_dep({from_array(w)}, from_array(z), training, epsilon_scale));
        },
        py::arg("w_dep"), py::arg("z_base"), py::arg("training") = false,
        py::arg("epsilon_scale") = kDefaultEpsilonScale);
    m.def(
        "loss_indep_entropy", [](const Array& r) { return loss_indep_entropy(from_array(r)).item(); }, py::arg("r"));
    m.def(
        "loss_dep_entropy", [](const Array& g) { return loss_dep_entropy(rows_of(g)).item(); }, py::arg("gates"));
    m.def(
        "loss_dep_diversity", [](const Array& g) { return loss_dep_diversity(rows_of(g)).item(); },
        py::arg("gates"));
    m.def(
        "loss_mowe", [](const Array& r, const Array& g) { return loss_mowe(from_array(r), rows_of(g)).item(); },
        py::arg("r_indep"), py::arg("dep_gates"));
}
