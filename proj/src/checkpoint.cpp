#include "colontcn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace ctcn {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x00000100000001b3ULL;
    }
    return h;
}

struct HashingWriter {
    std::ofstream out;
    std::uint64_t hash = 0xcbf29ce484222325ULL;

    void write(const void* data, std::size_t len) {
        out.write(static_cast<const char*>(data), std::streamsize(len));
        hash = fnv1a(data, len, hash);
    }
    template <typename T>
    void pod(const T& v) {
        write(&v, sizeof(T));
    }
    void str(const std::string& s) {
        const auto n = std::uint32_t(s.size());
        pod(n);
        write(s.data(), s.size());
    }
};

struct HashingReader {
    std::ifstream in;
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    std::string path;

    void read(void* data, std::size_t len) {
        in.read(static_cast<char*>(data), std::streamsize(len));
        if (!in) throw DataError(path + ": truncated checkpoint");
        hash = fnv1a(data, len, hash);
    }
    template <typename T>
    T pod() {
        T v;
        read(&v, sizeof(T));
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint32_t>();
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
};

struct NamedTensor {
    Dtype dtype;
    std::vector<double> values;
};

void write_tensor(HashingWriter& w, const std::string& name, Dtype dtype,
                  const std::vector<double>& values) {
    w.str(name);
    w.pod(std::uint8_t(dtype));
    w.pod(std::uint64_t(values.size()));
    if (dtype == Dtype::F32) {
        std::vector<float> f(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) f[i] = float(values[i]);
        w.write(f.data(), f.size() * sizeof(float));
    } else {
        w.write(values.data(), values.size() * sizeof(double));
    }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["levels"] = cfg.base.levels;
    j["input_dim"] = cfg.base.input_dim;
    j["num_classes"] = cfg.base.num_classes;
    j["channels"] = cfg.base.block.channels;
    j["kernel"] = cfg.base.block.kernel;
    j["dropout"] = cfg.base.block.dropout_rate;
    j["double_conv"] = cfg.base.block.double_conv;
    j["residual"] = cfg.base.block.residual;
    j["weight_norm"] = cfg.base.block.weight_norm;
    j["refinement_stages"] = cfg.refinement_stages;
    j["refinement_levels"] = cfg.refinement_levels;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.base.levels = j.at("levels").get<int>();
        cfg.base.input_dim = j.at("input_dim").get<int>();
        cfg.base.num_classes = j.at("num_classes").get<int>();
        cfg.base.block.channels = j.at("channels").get<int>();
        cfg.base.block.kernel = j.at("kernel").get<int>();
        cfg.base.block.dropout_rate = j.at("dropout").get<double>();
        cfg.base.block.double_conv = j.at("double_conv").get<bool>();
        cfg.base.block.residual = j.at("residual").get<bool>();
        cfg.base.block.weight_norm = j.at("weight_norm").get<bool>();
        cfg.refinement_stages = j.at("refinement_stages").get<int>();
        cfg.refinement_levels = j.at("refinement_levels").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    cfg.base.use_fr = cfg.base.input_dim != cfg.base.block.channels;
    cfg.validate();
    return cfg;
}

void Checkpoint::save(const std::string& path) const {
    HashingWriter w;
    w.out.open(path, std::ios::binary | std::ios::trunc);
    if (!w.out) throw DataError("cannot write checkpoint: " + path);

    w.out.write(kMagic, sizeof(kMagic));  // magic excluded from the hash

    nlohmann::json meta;
    meta["model"] = nlohmann::json::parse(model_config_to_json(config));
    meta["iteration"] = iteration;
    meta["validation_wf1"] = validation_wf1;
    meta["seed"] = seed;
    if (!extra_meta.empty()) meta["run_config"] = nlohmann::json::parse(extra_meta);

    w.pod(kVersion);
    w.str(meta.dump());

    // Collect tensors; names are emitted sorted so the directory order is
    // lexicographic regardless of section.
    std::map<std::string, NamedTensor> tensors;
    for_each_tensor(params, [&](const std::string& name, const std::vector<double>& value) {
        tensors["param/" + name] = {Dtype::F32, value};
        tensors["state/f64/" + name] = {Dtype::F64, value};
    });
    if (optim) {
        std::size_t idx = 0;
        for_each_tensor(params, [&](const std::string& name, const std::vector<double>&) {
            tensors["state/adam_m/" + name] = {Dtype::F64, optim->m[idx]};
            tensors["state/adam_v/" + name] = {Dtype::F64, optim->v[idx]};
            ++idx;
        });
    }

    w.pod(std::uint64_t(tensors.size()));
    for (const auto& [name, t] : tensors) write_tensor(w, name, t.dtype, t.values);

    const std::uint64_t digest = w.hash;
    w.out.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    if (!w.out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    HashingReader r;
    r.path = path;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw DataError("cannot open checkpoint: " + path);

    char magic[8];
    r.in.read(magic, sizeof(magic));
    if (!r.in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw DataError(path + ": bad magic, not a checkpoint");
    const auto version = r.pod<std::uint32_t>();
    if (version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    const std::string meta_text = r.str();
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_text);
        ck.config = model_config_from_json(meta.at("model").dump());
        ck.iteration = meta.at("iteration").get<std::int64_t>();
        ck.validation_wf1 = meta.at("validation_wf1").get<double>();
        ck.seed = meta.at("seed").get<std::uint64_t>();
        if (meta.contains("run_config")) ck.extra_meta = meta["run_config"].dump();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": bad checkpoint metadata: " + e.what());
    }

    std::map<std::string, NamedTensor> tensors;
    const auto count = r.pod<std::uint64_t>();
    std::string prev_name;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        if (i > 0 && !(prev_name < name))
            throw DataError(path + ": tensor names out of order");
        prev_name = name;
        const auto dtype = Dtype(r.pod<std::uint8_t>());
        const auto n = r.pod<std::uint64_t>();
        NamedTensor t;
        t.dtype = dtype;
        t.values.resize(n);
        if (dtype == Dtype::F32) {
            std::vector<float> f(n);
            r.read(f.data(), n * sizeof(float));
            for (std::uint64_t k = 0; k < n; ++k) t.values[k] = double(f[k]);
        } else if (dtype == Dtype::F64) {
            r.read(t.values.data(), n * sizeof(double));
        } else {
            throw DataError(path + ": unknown tensor dtype");
        }
        tensors[name] = std::move(t);
    }

    const std::uint64_t expect = r.hash;
    std::uint64_t stored = 0;
    r.in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!r.in) throw DataError(path + ": missing checksum");
    if (stored != expect) throw DataError(path + ": checksum mismatch");

    ck.params = zero_params(ck.config);
    bool has_optim = tensors.count("state/adam_m/s00/head/b") > 0;
    if (has_optim) ck.optim.emplace();

    for_each_tensor(ck.params, [&](const std::string& name, std::vector<double>& value,
                                   std::vector<double>&) {
        auto exact = tensors.find("state/f64/" + name);
        auto portable = tensors.find("param/" + name);
        const NamedTensor* src = nullptr;
        if (exact != tensors.end())
            src = &exact->second;
        else if (portable != tensors.end())
            src = &portable->second;
        else
            throw DataError(path + ": missing tensor " + name);
        if (src->values.size() != value.size())
            throw DataError(path + ": tensor " + name + " has wrong size");
        value = src->values;
        if (has_optim) {
            auto m = tensors.find("state/adam_m/" + name);
            auto v = tensors.find("state/adam_v/" + name);
            if (m == tensors.end() || v == tensors.end())
                throw DataError(path + ": incomplete optimizer state");
            ck.optim->m.push_back(m->second.values);
            ck.optim->v.push_back(v->second.values);
        }
    });
    if (ck.optim) ck.optim->step = ck.iteration;
    return ck;
}

}  // namespace ctcn
