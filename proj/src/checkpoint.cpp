// SPDX-License-Identifier: Apache-2.0
#include "mowe/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>

#include "mowe/error.hpp"

namespace mowe {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'W', 'E', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::ostream& os, U v) {
    char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, sizeof(U));
}

template <typename U>
U get(std::istream& is, const char* what) {
    unsigned char b[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw FormatError(std::string("checkpoint: truncated ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
}

std::string get_bytes(std::istream& is, std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
        throw FormatError(std::string("checkpoint: truncated ") + what);
    }
    return s;
}

struct Record {
    Shape shape;
    std::vector<double> data;
};

struct Contents {
    nlohmann::json meta;
    std::map<std::string, Record> tensors;
};

Contents read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    const std::string magic = get_bytes(in, 8, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("checkpoint: bad magic in " + path.string());
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    Contents c;
    const auto meta_len = get<std::uint32_t>(in, "metadata length");
    try {
        c.meta = nlohmann::json::parse(get_bytes(in, meta_len, "metadata"));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    const auto count = get<std::uint32_t>(in, "tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = get<std::uint32_t>(in, "tensor name");
        std::string name = get_bytes(in, name_len, "tensor name");
        const auto rank = get<std::uint32_t>(in, "tensor rank");
        Record r;
        for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(get<std::uint64_t>(in, "tensor shape"));
        r.data.resize(shape_numel(r.shape));
        for (auto& x : r.data) x = std::bit_cast<double>(get<std::uint64_t>(in, "tensor data"));
        c.tensors.emplace(std::move(name), std::move(r));
    }
    return c;
}

void overwrite(const Contents& c, MoweModel& model, const std::string& source) {
    const auto params = model.parameters();
    if (params.size() != c.tensors.size()) {
        throw FormatError("checkpoint " + source + " holds " + std::to_string(c.tensors.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
    }
    for (const auto& p : params) {
        const auto it = c.tensors.find(p.name);
        if (it == c.tensors.end()) throw FormatError("checkpoint " + source + " lacks tensor '" + p.name + "'");
        if (it->second.shape != p.tensor.shape()) {
            throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_str(it->second.shape) +
                              ", model expects " + shape_str(p.tensor.shape()));
        }
        Tensor t = p.tensor;
        std::copy(it->second.data.begin(), it->second.data.end(), t.mutable_data().begin());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MoweModel& model, const RunConfig& cfg) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
    nlohmann::json meta;
    meta["format"] = "mowe-checkpoint";
    meta["config"] = cfg;
    // The model's own config wins over `cfg` (ablation rows rewrite the pool and setup).
    meta["model"] = model.config();
    meta["seq_len"] = model.seq_len();
    const std::string meta_text = meta.dump();
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    const auto params = model.parameters();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
        for (double x : p.tensor.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
    }
    if (!out) throw FormatError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const Contents c = read_file(path);
    if (c.meta.value("format", "") != "mowe-checkpoint") throw FormatError("checkpoint metadata: wrong format tag");
    LoadedCheckpoint out;
    nlohmann::json tree = c.meta.at("config");
    if (c.meta.contains("model")) tree.update(c.meta.at("model"));
    out.config = run_config_from_json(tree);
    out.seq_len = c.meta.at("seq_len").get<std::size_t>();
    out.model = MoweModel(out.config.model_config(), out.seq_len, out.config.seed);
    overwrite(c, out.model, path.string());
    return out;
}

void restore_parameters(const std::filesystem::path& path, MoweModel& model) {
    overwrite(read_file(path), model, path.string());
}

}  // namespace mowe
