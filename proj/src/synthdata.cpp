// SPDX-License-Identifier: Apache-2.0
#include "mowe/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "mowe/error.hpp"
#include "mowe/rng.hpp"

namespace mowe {

namespace {

constexpr char kFeatureMagic[8] = {'M', 'O', 'W', 'E', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

// Standard-normal quantile by bisection on the CDF; only used for a handful of thresholds.
double normal_quantile(double p) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::numbers::sqrt2);
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("feature blob: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

TaskSpec base_task(int id, const std::string& name, Pattern pattern, const DataConfig& cfg) {
    TaskSpec t;
    t.id = id;
    t.name = name;
    t.pattern = pattern;
    t.noise_scale = cfg.noise_scale;
    t.jitter_scale = cfg.jitter_scale;
    t.levels = 4;
    for (std::size_t j = 0; j < cfg.target_length; ++j) {
        t.target_channels.push_back((3 * static_cast<std::size_t>(id) + j) % cfg.d_in);
    }
    t.response_base = 16 + id * static_cast<int>(cfg.target_length) * t.levels;
    t.instruction = {kBosToken, 2 + id};
    return t;
}

}  // namespace

std::string to_string(Pattern p) {
    switch (p) {
        case Pattern::Voiced: return "voiced";
        case Pattern::Burst: return "burst";
        case Pattern::Chirp: return "chirp";
        case Pattern::Decay: return "decay";
        case Pattern::Flat: return "flat";
    }
    return "flat";
}

Pattern pattern_from_string(const std::string& name) {
    for (Pattern p : {Pattern::Voiced, Pattern::Burst, Pattern::Chirp, Pattern::Decay, Pattern::Flat}) {
        if (to_string(p) == name) return p;
    }
    throw FormatError("unknown temporal pattern '" + name + "'");
}

const TaskSpec& Dataset::task(int id) const {
    for (const auto& t : tasks)
        if (t.id == id) return t;
    throw IndexError("dataset has no task with id " + std::to_string(id));
}

double pattern_value(Pattern p, std::size_t t, std::size_t c, std::size_t seq_len) {
    const double tt = static_cast<double>(t);
    const double cc = static_cast<double>(c);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    switch (p) {
        case Pattern::Voiced: return std::sin(kTwoPi * tt / 16.0 + 0.4 * cc);
        case Pattern::Burst: return ((t / 8) % 2 ? 0.8 : -0.8) * (c % 2 ? 1.0 : -1.0);
        case Pattern::Chirp:
            return std::sin(kTwoPi * tt * tt / (32.0 * static_cast<double>(std::max<std::size_t>(seq_len, 1))) + cc);
        case Pattern::Decay: return 2.0 * std::exp(-tt / 32.0) * std::cos(cc);
        case Pattern::Flat: return 0.0;
    }
    return 0.0;
}

std::vector<TaskSpec> default_tasks(const DataConfig& cfg, std::uint64_t seed) {
    std::vector<TaskSpec> tasks = {
        base_task(0, "asr-like", Pattern::Voiced, cfg), base_task(1, "er-like", Pattern::Chirp, cfg),
        base_task(2, "aqa-like", Pattern::Burst, cfg), base_task(3, "sqa-like", Pattern::Voiced, cfg),
        base_task(4, "ac-like", Pattern::Decay, cfg)};
    tasks[0].speech_like = tasks[3].speech_like = true;
    Rng rng(seed, "data/centers");
    // Redraw until the separation invariant holds; with the default scales the
    // first draw almost always passes.
    for (int attempt = 0; attempt < 1000; ++attempt) {
        for (auto& t : tasks) {
            t.center.assign(cfg.d_in, 0.0);
            for (auto& x : t.center) x = rng.normal(0.0, cfg.center_scale);
        }
        if (min_center_distance(tasks) >= 4.0 * cfg.noise_scale) return tasks;
    }
    throw ConfigError("could not draw task centers separated by 4x the noise scale; raise data.center_scale");
}

std::vector<TaskSpec> similar_tasks(const DataConfig& cfg, std::uint64_t seed) {
    std::vector<TaskSpec> tasks;
    Rng rng(seed, "data/centers");
    std::vector<double> center(cfg.d_in);
    for (auto& x : center) x = rng.normal(0.0, cfg.center_scale);
    const char* names[] = {"similar-a", "similar-b", "similar-c", "similar-d", "similar-e"};
    for (int id = 0; id < 5; ++id) {
        auto t = base_task(id, names[id], Pattern::Voiced, cfg);
        t.center = center;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

std::vector<TaskSpec> make_tasks(const DataConfig& cfg, std::uint64_t seed) {
    if (cfg.task_set == "default") return default_tasks(cfg, seed);
    if (cfg.task_set == "similar") return similar_tasks(cfg, seed);
    throw ConfigError("data.task_set must be 'default' or 'similar', got '" + cfg.task_set + "'");
}

double min_center_distance(const std::vector<TaskSpec>& tasks) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (std::size_t j = i + 1; j < tasks.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < tasks[i].center.size(); ++c) {
                const double d = tasks[i].center[c] - tasks[j].center[c];
                d2 += d * d;
            }
            best = std::min(best, std::sqrt(d2));
        }
    }
    return best;
}

std::vector<int> target_tokens(const TaskSpec& task, const Tensor& features) {
    const std::size_t s = features.rows(), d = features.cols();
    std::vector<double> thresholds;
    for (int k = 1; k < task.levels; ++k) {
        thresholds.push_back(task.jitter_scale * normal_quantile(static_cast<double>(k) / task.levels));
    }
    std::vector<int> out;
    const auto x = features.data();
    for (std::size_t j = 0; j < task.target_channels.size(); ++j) {
        const std::size_t c = task.target_channels[j];
        if (c >= d) throw IndexError("target channel " + std::to_string(c) + " outside feature width");
        double m = 0.0;
        for (std::size_t t = 0; t < s; ++t) m += x[t * d + c] - pattern_value(task.pattern, t, c, s);
        m = m / static_cast<double>(s) - task.center[c];
        const int bin = static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), m) - thresholds.begin());
        out.push_back(task.response_base + static_cast<int>(j) * task.levels + bin);
    }
    return out;
}

Dataset generate(const std::vector<TaskSpec>& tasks, std::size_t per_task, std::uint64_t seed,
                 std::size_t seq_len, std::size_t d_in) {
    if (seq_len == 0 || d_in == 0) throw ConfigError("sequence length and feature width must be positive");
    Dataset data;
    data.seq_len = seq_len;
    data.d_in = d_in;
    data.tasks = tasks;
    std::uint64_t next_id = 0;
    for (const auto& task : tasks) {
        if (task.center.size() != d_in) {
            throw ConfigError("task '" + task.name + "' center has " + std::to_string(task.center.size()) +
                              " channels, expected " + std::to_string(d_in));
        }
        Rng rng(seed, "data/samples/" + std::to_string(task.id));
        for (std::size_t n = 0; n < per_task; ++n) {
            std::vector<double> offset(d_in);
            for (auto& o : offset) o = rng.normal(0.0, task.jitter_scale);
            std::vector<double> v(seq_len * d_in);
            for (std::size_t t = 0; t < seq_len; ++t) {
                for (std::size_t c = 0; c < d_in; ++c) {
                    const double x = task.center[c] + pattern_value(task.pattern, t, c, seq_len) + offset[c] +
                                     rng.normal(0.0, task.noise_scale);
                    v[t * d_in + c] = static_cast<double>(static_cast<float>(x));
                }
            }
            FeatureSequence fs;
            fs.features = Tensor({seq_len, d_in}, std::move(v));
            fs.task_id = task.id;
            fs.instruction = task.instruction;
            fs.targets = target_tokens(task, fs.features);
            fs.sample_id = next_id++;
            data.samples.push_back(std::move(fs));
        }
    }
    return data;
}

Dataset generate(const DataConfig& cfg, std::uint64_t seed) {
    return generate(make_tasks(cfg, seed), cfg.samples_per_task, seed, cfg.seq_len, cfg.d_in);
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
        throw ArgumentError("train fraction must lie in [0, 1]");
    }
    Dataset train, eval;
    for (Dataset* d : {&train, &eval}) {
        d->seq_len = data.seq_len;
        d->d_in = data.d_in;
        d->tasks = data.tasks;
    }
    for (const auto& task : data.tasks) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.samples.size(); ++i)
            if (data.samples[i].task_id == task.id) idx.push_back(i);
        Rng rng(seed, "data/split/" + std::to_string(task.id));
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < n_train ? train : eval).samples.push_back(data.samples[idx[k]]);
        }
    }
    return {std::move(train), std::move(eval)};
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "mowe-dataset";
    manifest["version"] = kFeatureVersion;
    manifest["seq_len"] = data.seq_len;
    manifest["d_in"] = data.d_in;
    manifest["blob"] = "features.bin";
    auto& tasks = manifest["tasks"] = nlohmann::json::array();
    for (const auto& t : data.tasks) {
        tasks.push_back({{"id", t.id},
                         {"name", t.name},
                         {"center", t.center},
                         {"pattern", to_string(t.pattern)},
                         {"noise_scale", t.noise_scale},
                         {"jitter_scale", t.jitter_scale},
                         {"target_channels", t.target_channels},
                         {"response_base", t.response_base},
                         {"levels", t.levels},
                         {"instruction", t.instruction},
                         {"speech_like", t.speech_like}});
    }
    auto& samples = manifest["samples"] = nlohmann::json::array();
    for (const auto& s : data.samples) {
        samples.push_back({{"id", s.sample_id}, {"task", s.task_id}, {"instruction", s.instruction},
                           {"targets", s.targets}});
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";

    std::ofstream blob(dir / "features.bin", std::ios::binary);
    blob.write(kFeatureMagic, sizeof(kFeatureMagic));
    put_u32(blob, kFeatureVersion);
    put_u32(blob, static_cast<std::uint32_t>(data.seq_len));
    put_u32(blob, static_cast<std::uint32_t>(data.d_in));
    put_u32(blob, static_cast<std::uint32_t>(data.samples.size()));
    for (const auto& s : data.samples) {
        for (double x : s.features.data()) put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
    if (!blob) throw FormatError("failed writing " + (dir / "features.bin").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw FormatError("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "mowe-dataset") throw FormatError("manifest.json: not a mowe dataset");
    Dataset data;
    data.seq_len = manifest.at("seq_len").get<std::size_t>();
    data.d_in = manifest.at("d_in").get<std::size_t>();
    for (const auto& t : manifest.at("tasks")) {
        TaskSpec task;
        task.id = t.at("id").get<int>();
        task.name = t.at("name").get<std::string>();
        task.center = t.at("center").get<std::vector<double>>();
        task.pattern = pattern_from_string(t.at("pattern").get<std::string>());
        task.noise_scale = t.at("noise_scale").get<double>();
        task.jitter_scale = t.at("jitter_scale").get<double>();
        task.target_channels = t.at("target_channels").get<std::vector<std::size_t>>();
        task.response_base = t.at("response_base").get<int>();
        task.levels = t.at("levels").get<int>();
        task.instruction = t.at("instruction").get<std::vector<int>>();
        task.speech_like = t.value("speech_like", false);
        data.tasks.push_back(std::move(task));
    }

    std::ifstream blob(dir / manifest.value("blob", std::string("features.bin")), std::ios::binary);
    if (!blob) throw FormatError("cannot open feature blob in " + dir.string());
    char magic[8];
    if (!blob.read(magic, 8) || !std::equal(magic, magic + 8, kFeatureMagic)) {
        throw FormatError("feature blob: bad magic");
    }
    if (const auto v = get_u32(blob); v != kFeatureVersion) {
        throw FormatError("feature blob: unsupported version " + std::to_string(v));
    }
    const std::size_t s = get_u32(blob), d = get_u32(blob), count = get_u32(blob);
    const auto& records = manifest.at("samples");
    if (s != data.seq_len || d != data.d_in || count != records.size()) {
        throw FormatError("feature blob header disagrees with manifest");
    }
    for (const auto& r : records) {
        std::vector<double> v(s * d);
        for (auto& x : v) x = static_cast<double>(std::bit_cast<float>(get_u32(blob)));
        FeatureSequence fs;
        fs.features = Tensor({s, d}, std::move(v));
        fs.sample_id = r.at("id").get<std::uint64_t>();
        fs.task_id = r.at("task").get<int>();
        fs.instruction = r.at("instruction").get<std::vector<int>>();
        fs.targets = r.at("targets").get<std::vector<int>>();
        data.samples.push_back(std::move(fs));
    }
    return data;
}

}  // namespace mowe
