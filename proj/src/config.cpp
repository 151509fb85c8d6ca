// SPDX-License-Identifier: Apache-2.0
#include "mowe/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mowe/error.hpp"

namespace mowe {

using nlohmann::json;

RunConfig RunConfig::desk() {
    RunConfig c;
    c.data.samples_per_task = 120;
    c.data.target_length = 1;
    c.model.adapter.tokens = 32;
    c.train.learning_rate = 1e-2;
    return c;
}

RunConfig RunConfig::paper() {
    RunConfig c;
    c.model.pool.stride = 1;
    c.model.adapter.tokens = 100;
    return c;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m = model;
    m.pool.d_in = data.d_in;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

void to_json(json& j, const DataConfig& c) {
    j = {{"seq_len", c.seq_len},
         {"d_in", c.d_in},
         {"samples_per_task", c.samples_per_task},
         {"train_fraction", c.train_fraction},
         {"noise_scale", c.noise_scale},
         {"jitter_scale", c.jitter_scale},
         {"center_scale", c.center_scale},
         {"target_length", c.target_length},
         {"task_set", c.task_set}};
}

void to_json(json& j, const PoolConfig& c) {
    j = {{"d_base", c.d_base},       {"base_hidden", c.base_hidden}, {"base_layers", c.base_layers},
         {"d_weak", c.d_weak},       {"weak_hidden", c.weak_hidden}, {"weak_layers", c.weak_layers},
         {"weak_native", c.weak_native}, {"kernel", c.kernel},       {"stride", c.stride}};
}

void to_json(json& j, const RoutingConfig& c) {
    j = {{"setup", to_string(c.setup)},
         {"epsilon_scale", c.epsilon_scale},
         {"smoothing", c.smoothing},
         {"entropy_loss", c.entropy_loss},
         {"diversity_loss", c.diversity_loss},
         {"indep_init", c.indep_init},
         {"prior_favored", c.prior_favored}};
}

void to_json(json& j, const AdapterSpec& c) {
    j = {{"kind", to_string(c.kind)}, {"tokens", c.tokens}, {"kernel", c.kernel}, {"stride", c.stride}, {"d_out", c.d_out}};
}

void to_json(json& j, const DecoderSpec& c) {
    j = {{"vocab", c.vocab},       {"d_model", c.d_model},     {"layers", c.layers},        {"heads", c.heads},
         {"mlp_mult", c.mlp_mult}, {"lora_rank", c.lora_rank}, {"lora_alpha", c.lora_alpha}};
}

void to_json(json& j, const ModelConfig& c) {
    j = {{"encoders", c.pool}, {"routing", c.routing}, {"pipeline", {{"adapter", c.adapter}, {"decoder", c.decoder}}}};
}

void to_json(json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"weight_decay", c.weight_decay},
         {"grad_clip", c.grad_clip},
         {"routing_loss_weight", c.routing_loss_weight},
         {"regime", to_string(c.regime)},
         {"stage_one_task", c.stage_one_task},
         {"stage_one_epochs", c.stage_one_epochs},
         {"threads", c.threads}};
}

void to_json(json& j, const RunConfig& c) {
    j = json(c.model);
    j["seed"] = c.seed;
    j["data"] = c.data;
    j["trainer"] = c.train;
}

namespace {

void read_tree(const json& j, RunConfig& c) {
    c.seed = j.at("seed").get<std::uint64_t>();
    const json& d = j.at("data");
    c.data.seq_len = d.at("seq_len");
    c.data.d_in = d.at("d_in");
    c.data.samples_per_task = d.at("samples_per_task");
    c.data.train_fraction = d.at("train_fraction");
    c.data.noise_scale = d.at("noise_scale");
    c.data.jitter_scale = d.at("jitter_scale");
    c.data.center_scale = d.at("center_scale");
    c.data.target_length = d.at("target_length");
    c.data.task_set = d.at("task_set");
    if (c.data.task_set != "default" && c.data.task_set != "similar") {
        throw ConfigError("data.task_set must be 'default' or 'similar', got '" + c.data.task_set + "'");
    }

    const json& e = j.at("encoders");
    PoolConfig& p = c.model.pool;
    p.d_base = e.at("d_base");
    p.base_hidden = e.at("base_hidden");
    p.base_layers = e.at("base_layers");
    p.d_weak = e.at("d_weak");
    p.weak_hidden = e.at("weak_hidden");
    p.weak_layers = e.at("weak_layers");
    p.weak_native = e.at("weak_native").get<std::vector<std::size_t>>();
    p.kernel = e.at("kernel");
    p.stride = e.at("stride");

    const json& r = j.at("routing");
    RoutingConfig& rc = c.model.routing;
    rc.setup = router_setup_from_string(r.at("setup"));
    rc.epsilon_scale = r.at("epsilon_scale");
    rc.smoothing = r.at("smoothing");
    rc.entropy_loss = r.at("entropy_loss");
    rc.diversity_loss = r.at("diversity_loss");
    rc.indep_init = r.at("indep_init");
    rc.prior_favored = r.at("prior_favored");

    const json& a = j.at("pipeline").at("adapter");
    AdapterSpec& as = c.model.adapter;
    as.kind = adapter_kind_from_string(a.at("kind"));
    as.tokens = a.at("tokens");
    as.kernel = a.at("kernel");
    as.stride = a.at("stride");
    as.d_out = a.at("d_out");

    const json& dd = j.at("pipeline").at("decoder");
    DecoderSpec& ds = c.model.decoder;
    ds.vocab = dd.at("vocab");
    ds.d_model = dd.at("d_model");
    ds.layers = dd.at("layers");
    ds.heads = dd.at("heads");
    ds.mlp_mult = dd.at("mlp_mult");
    ds.lora_rank = dd.at("lora_rank");
    ds.lora_alpha = dd.at("lora_alpha");

    const json& t = j.at("trainer");
    TrainConfig& tc = c.train;
    tc.batch_size = t.at("batch_size");
    tc.epochs = t.at("epochs");
    tc.learning_rate = t.at("learning_rate");
    tc.beta1 = t.at("beta1");
    tc.beta2 = t.at("beta2");
    tc.adam_eps = t.at("adam_eps");
    tc.weight_decay = t.at("weight_decay");
    tc.grad_clip = t.at("grad_clip");
    tc.routing_loss_weight = t.at("routing_loss_weight");
    tc.regime = regime_from_string(t.at("regime"));
    tc.stage_one_task = t.at("stage_one_task");
    tc.stage_one_epochs = t.at("stage_one_epochs");
    tc.threads = t.at("threads");
    tc.seed = c.seed;
}

std::string type_name(const json& like) {
    switch (like.type()) {
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_unsigned: return "non-negative integer";
        case json::value_t::number_integer: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::string: return "string";
        case json::value_t::array: return "list";
        case json::value_t::object: return "section";
        default: return "value";
    }
}

// Checks that `value` can stand in for `like` and returns it converted.
json coerce_json(const json& value, const json& like, const std::string& path) {
    auto fail = [&] { throw ConfigError(path + ": expected " + type_name(like) + ", got " + value.dump()); };
    switch (like.type()) {
        case json::value_t::boolean:
            if (!value.is_boolean()) fail();
            return value;
        case json::value_t::number_unsigned:
            if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) fail();
            return value.get<std::uint64_t>();
        case json::value_t::number_integer:
            if (!value.is_number_integer()) fail();
            return value.get<std::int64_t>();
        case json::value_t::number_float:
            if (!value.is_number()) fail();
            return value.get<double>();
        case json::value_t::string:
            if (!value.is_string()) fail();
            return value;
        case json::value_t::array: {
            if (!value.is_array()) fail();
            json out = json::array();
            const json elem = like.empty() ? json(std::uint64_t{0}) : like.front();
            for (std::size_t i = 0; i < value.size(); ++i) {
                out.push_back(coerce_json(value[i], elem, path + "[" + std::to_string(i) + "]"));
            }
            return out;
        }
        case json::value_t::object: {
            if (!value.is_object()) fail();
            json out = like;
            for (const auto& [k, v] : value.items()) {
                const std::string sub = path.empty() ? k : path + "." + k;
                if (!like.contains(k)) throw ConfigError("unknown key '" + sub + "'");
                out[k] = coerce_json(v, like.at(k), sub);
            }
            return out;
        }
        default: return value;
    }
}

std::string where(const std::string& source, const YAML::Mark& m) {
    return source + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
}

json coerce_yaml(const YAML::Node& node, const json& like, const std::string& path, const std::string& source) {
    const auto loc = where(source, node.Mark());
    auto fail = [&](const std::string& why) {
        throw ConfigError(loc + ": " + path + ": " + why);
    };
    try {
        switch (like.type()) {
            case json::value_t::object: {
                if (node.IsNull()) return like;
                if (!node.IsMap()) fail("expected a section");
                json out = like;
                for (const auto& kv : node) {
                    const auto key = kv.first.as<std::string>();
                    const std::string sub = path.empty() ? key : path + "." + key;
                    if (!like.contains(key)) {
                        throw ConfigError(where(source, kv.first.Mark()) + ": unknown key '" + sub + "'");
                    }
                    out[key] = coerce_yaml(kv.second, like.at(key), sub, source);
                }
                return out;
            }
            case json::value_t::array: {
                if (!node.IsSequence()) fail("expected a list");
                json out = json::array();
                const json elem = like.empty() ? json(std::uint64_t{0}) : like.front();
                for (std::size_t i = 0; i < node.size(); ++i) {
                    out.push_back(coerce_yaml(node[i], elem, path + "[" + std::to_string(i) + "]", source));
                }
                return out;
            }
            default: break;
        }
        if (!node.IsScalar()) fail("expected " + type_name(like));
        const std::string text = node.Scalar();
        switch (like.type()) {
            case json::value_t::boolean: return node.as<bool>();
            case json::value_t::number_unsigned:
                if (!text.empty() && text.front() == '-') fail("expected non-negative integer, got '" + text + "'");
                return node.as<std::uint64_t>();
            case json::value_t::number_integer: return node.as<std::int64_t>();
            case json::value_t::number_float: return node.as<double>();
            case json::value_t::string: return text;
            default: return text;
        }
    } catch (const YAML::Exception&) {
        fail("expected " + type_name(like) + ", got '" + (node.IsScalar() ? node.Scalar() : std::string("?")) + "'");
    }
    return {};
}

void emit_value(YAML::Emitter& out, const json& v) {
    if (v.is_object()) {
        out << YAML::BeginMap;
        for (const auto& [k, sub] : v.items()) {
            out << YAML::Key << k << YAML::Value;
            emit_value(out, sub);
        }
        out << YAML::EndMap;
    } else if (v.is_array()) {
        out << YAML::Flow << YAML::BeginSeq;
        for (const auto& e : v) emit_value(out, e);
        out << YAML::EndSeq;
    } else if (v.is_boolean()) {
        out << v.get<bool>();
    } else if (v.is_number_unsigned()) {
        out << v.get<std::uint64_t>();
    } else if (v.is_number_integer()) {
        out << v.get<std::int64_t>();
    } else if (v.is_number_float()) {
        // Shortest text that parses back to the same double.
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        std::string text(buf, res.ptr);
        if (text.find_first_of(".eE") == std::string::npos) text += ".0";
        out << text;
    } else {
        out << v.get<std::string>();
    }
}

}  // namespace

void merge_json(const json& j, RunConfig& out) {
    const json merged = coerce_json(j, json(out), "");
    read_tree(merged, out);
}

RunConfig run_config_from_json(const json& j, const RunConfig& base) {
    RunConfig c = base;
    merge_json(j, c);
    return c;
}

RunConfig parse_config_yaml(const std::string& text, const RunConfig& base, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(where(source, e.mark) + ": " + e.msg);
    }
    RunConfig c = base;
    read_tree(coerce_yaml(root, json(c), "", source), c);
    return c;
}

RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_yaml(buf.str(), base, path.string());
}

std::string dump_config_yaml(const RunConfig& cfg) {
    const json tree = cfg;
    static const std::pair<const char*, const char*> sections[] = {
        {"seed", "Root seed; every random stream is derived from it by label."},
        {"data", "Synthetic multi-task dataset."},
        {"encoders", "Base encoder and weak-encoder pool (weak_native length is the pool size)."},
        {"routing", "Router setup: off | indep | dep | indep-x2 | dep-x2 | indep-dep."},
        {"pipeline", "Adapter (grouped-linear-gelu | strided-conv) and LoRA decoder."},
        {"trainer", "AdamW with cosine decay; regime single-stage | two-stage."}};
    YAML::Emitter out;
    out << YAML::BeginMap;
    for (const auto& [key, comment] : sections) {
        out << YAML::Comment(comment) << YAML::Newline;
        out << YAML::Key << key << YAML::Value;
        emit_value(out, tree.at(key));
    }
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json tree = cfg;
    json* slot = &tree;
    std::string walked;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        walked += (walked.empty() ? "" : ".") + key;
        if (!slot->is_object() || !slot->contains(key)) throw ConfigError("unknown key '" + walked + "'");
        slot = &(*slot)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    YAML::Node node;
    try {
        node = YAML::Load(value);
    } catch (const YAML::Exception& e) {
        throw ConfigError("override '" + assignment + "': " + e.msg);
    }
    *slot = coerce_yaml(node, *slot, path, "--set");
    read_tree(tree, cfg);
}

}  // namespace mowe
