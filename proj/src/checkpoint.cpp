#include "omoq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "omoq/errors.hpp"

namespace omoq {

namespace {

constexpr char kMagic[8] = {'O', 'M', 'O', 'Q', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

using nlohmann::json;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail("checkpoint: truncated file " + path);
    return v;
}

json cnn_spec_to_json(const CnnSpec& s) {
    return json{{"channels", s.channels},   {"kernels", s.kernels},
                {"pools", s.pool_after},    {"dropout", s.dropout},
                {"fc", s.fc_sizes},         {"in_channels", s.input_channels},
                {"in_height", s.input_height}, {"in_width", s.input_width}};
}

CnnSpec cnn_spec_from_json(const json& j) {
    CnnSpec s;
    s.channels = j.at("channels").get<std::vector<size_t>>();
    s.kernels = j.at("kernels").get<std::vector<size_t>>();
    s.pool_after = j.at("pools").get<std::vector<bool>>();
    s.dropout = j.at("dropout").get<double>();
    s.fc_sizes = j.at("fc").get<std::vector<size_t>>();
    s.input_channels = j.at("in_channels").get<size_t>();
    s.input_height = j.at("in_height").get<size_t>();
    s.input_width = j.at("in_width").get<size_t>();
    return s;
}

json ff_spec_to_json(const RnnFfSpec& s) {
    return json{{"cell", cell_type_name(s.cell)}, {"directions", s.directions},
                {"layers", s.layers},             {"feature_dim", s.feature_dim},
                {"hidden", s.hidden},             {"dropout", s.dropout},
                {"fc", s.fc_sizes}};
}

RnnFfSpec ff_spec_from_json(const json& j) {
    RnnFfSpec s;
    s.cell = cell_type_from_name(j.at("cell").get<std::string>());
    s.directions = j.at("directions").get<size_t>();
    s.layers = j.at("layers").get<size_t>();
    s.feature_dim = j.at("feature_dim").get<size_t>();
    s.hidden = j.at("hidden").get<size_t>();
    s.dropout = j.at("dropout").get<double>();
    s.fc_sizes = j.at("fc").get<std::vector<size_t>>();
    return s;
}

json ft_spec_to_json(const RnnFtSpec& s) {
    return json{{"directions", s.directions}, {"layers", s.layers},
                {"feature_dim", s.feature_dim}, {"hidden", s.hidden},
                {"dropout", s.dropout},       {"collapse", collapse_name(s.collapse)}};
}

RnnFtSpec ft_spec_from_json(const json& j) {
    RnnFtSpec s;
    s.directions = j.at("directions").get<size_t>();
    s.layers = j.at("layers").get<size_t>();
    s.feature_dim = j.at("feature_dim").get<size_t>();
    s.hidden = j.at("hidden").get<size_t>();
    s.dropout = j.at("dropout").get<double>();
    s.collapse = collapse_from_name(j.at("collapse").get<std::string>());
    return s;
}

} // namespace

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("checkpoint: cannot write " + path);
    out.write(kMagic, 8);
    write_pod(out, kVersion);
    write_pod(out, static_cast<uint64_t>(ckpt.meta_json.size()));
    out.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
    write_pod(out, static_cast<uint64_t>(ckpt.arrays.size()));
    for (const auto& [name, arr] : ckpt.arrays) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(arr.ndim()));
        for (auto d : arr.shape) write_pod(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(arr.ptr()),
                  static_cast<std::streamsize>(arr.numel() * sizeof(float)));
    }
    if (!out) fail("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        fail("checkpoint: " + path + " is not a checkpoint file");
    const auto version = read_pod<uint32_t>(in, path);
    if (version != kVersion)
        fail("checkpoint: " + path + ": unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    const auto meta_len = read_pod<uint64_t>(in, path);
    ckpt.meta_json.resize(meta_len);
    in.read(ckpt.meta_json.data(), static_cast<std::streamsize>(meta_len));
    if (!in) fail("checkpoint: truncated file " + path);
    const auto count = read_pod<uint64_t>(in, path);
    ckpt.arrays.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_pod<uint32_t>(in, path);
        std::vector<size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<size_t>(read_pod<uint64_t>(in, path));
        Array<float> arr(shape);
        in.read(reinterpret_cast<char*>(arr.ptr()),
                static_cast<std::streamsize>(arr.numel() * sizeof(float)));
        if (!in) fail("checkpoint: truncated file " + path);
        ckpt.arrays.emplace_back(std::move(name), std::move(arr));
    }
    return ckpt;
}

ModelBundle ModelBundle::create(ModelFamily family, const CnnSpec& cnn_spec,
                                const RnnFfSpec& ff_spec, const RnnFtSpec& ft_spec,
                                uint32_t seed) {
    ModelBundle b;
    b.family = family;
    b.cnn_spec = cnn_spec;
    b.ff_spec = ff_spec;
    b.ft_spec = ft_spec;
    b.seed = seed;
    Rng rng = Rng::stream(seed, 0, 0x1217);
    switch (family) {
        case ModelFamily::cnn: b.cnn = std::make_unique<CnnModel<float>>(cnn_spec, rng); break;
        case ModelFamily::rnn_ff: b.ff = std::make_unique<RnnFfModel<float>>(ff_spec, rng); break;
        case ModelFamily::rnn_ft: b.ft = std::make_unique<RnnFtModel<float>>(ft_spec, rng); break;
    }
    return b;
}

std::vector<NamedParam<float>> ModelBundle::params() {
    switch (family) {
        case ModelFamily::cnn: return cnn->params();
        case ModelFamily::rnn_ff: return ff->params();
        case ModelFamily::rnn_ft: return ft->params();
    }
    return {};
}

std::vector<NamedState<float>> ModelBundle::state() {
    switch (family) {
        case ModelFamily::cnn: return cnn->state();
        case ModelFamily::rnn_ff: return ff->state();
        case ModelFamily::rnn_ft: return ft->state();
    }
    return {};
}

Checkpoint bundle_to_checkpoint(ModelBundle& bundle) {
    json meta;
    meta["format"] = "omoq-checkpoint";
    meta["model"] = model_family_name(bundle.family);
    switch (bundle.family) {
        case ModelFamily::cnn: meta["spec"] = cnn_spec_to_json(bundle.cnn_spec); break;
        case ModelFamily::rnn_ff: meta["spec"] = ff_spec_to_json(bundle.ff_spec); break;
        case ModelFamily::rnn_ft: meta["spec"] = ft_spec_to_json(bundle.ft_spec); break;
    }
    meta["feature_kind"] = feature_kind_name(bundle.feature_kind);
    meta["n_mfcc"] = bundle.n_mfcc;
    meta["standardize"] = standardize_mode_name(bundle.stats.mode);
    meta["stats_mean"] = bundle.stats.mean;
    meta["stats_std"] = bundle.stats.stdev;
    meta["seed"] = bundle.seed;
    meta["epoch"] = bundle.epoch;
    meta["l_min"] = bundle.l_min;
    meta["eval_segments"] = bundle.eval_segments;

    Checkpoint ckpt;
    ckpt.meta_json = meta.dump();
    for (auto& p : bundle.params()) ckpt.arrays.emplace_back(p.name, p.var.value());
    for (auto& s : bundle.state()) ckpt.arrays.emplace_back(s.name, *s.array);
    return ckpt;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
    json meta;
    try {
        meta = json::parse(ckpt.meta_json);
    } catch (const json::exception& e) {
        fail(std::string("checkpoint: bad metadata: ") + e.what());
    }
    if (meta.value("format", "") != "omoq-checkpoint")
        fail("checkpoint: metadata missing format tag");

    const auto family = model_family_from_name(meta.at("model").get<std::string>());
    CnnSpec cnn_spec;
    RnnFfSpec ff_spec;
    RnnFtSpec ft_spec;
    switch (family) {
        case ModelFamily::cnn: cnn_spec = cnn_spec_from_json(meta.at("spec")); break;
        case ModelFamily::rnn_ff: ff_spec = ff_spec_from_json(meta.at("spec")); break;
        case ModelFamily::rnn_ft: ft_spec = ft_spec_from_json(meta.at("spec")); break;
    }
    auto bundle = ModelBundle::create(family, cnn_spec, ff_spec, ft_spec,
                                      meta.at("seed").get<uint32_t>());
    bundle.feature_kind = feature_kind_from_name(meta.at("feature_kind").get<std::string>());
    bundle.n_mfcc = meta.value("n_mfcc", size_t(128));
    bundle.stats.mode = standardize_mode_from_name(meta.at("standardize").get<std::string>());
    bundle.stats.mean = meta.at("stats_mean").get<std::vector<double>>();
    bundle.stats.stdev = meta.at("stats_std").get<std::vector<double>>();
    bundle.epoch = meta.at("epoch").get<uint32_t>();
    bundle.l_min = meta.at("l_min").get<size_t>();
    bundle.eval_segments = meta.at("eval_segments").get<size_t>();

    auto params = bundle.params();
    auto state = bundle.state();
    size_t cursor = 0;
    auto take = [&](const std::string& name) -> const Array<float>& {
        if (cursor >= ckpt.arrays.size())
            fail("checkpoint: missing array '" + name + "'");
        const auto& [aname, arr] = ckpt.arrays[cursor];
        if (aname != name)
            fail("checkpoint: array order mismatch: expected '" + name + "', found '" + aname + "'");
        ++cursor;
        return arr;
    };
    for (auto& p : params) {
        const auto& arr = take(p.name);
        require(arr.shape == p.var.value().shape,
                "checkpoint: shape mismatch for array '" + p.name + "'");
        p.var.value() = arr;
    }
    for (auto& s : state) {
        const auto& arr = take(s.name);
        require(arr.shape == s.array->shape,
                "checkpoint: shape mismatch for array '" + s.name + "'");
        *s.array = arr;
    }
    require(cursor == ckpt.arrays.size(), "checkpoint: unexpected trailing arrays");
    return bundle;
}

void save_bundle(const std::string& path, ModelBundle& bundle) {
    const auto ckpt = bundle_to_checkpoint(bundle);
    save_checkpoint_file(path, ckpt);
}

ModelBundle load_bundle(const std::string& path) {
    return bundle_from_checkpoint(load_checkpoint_file(path));
}

} // namespace omoq
