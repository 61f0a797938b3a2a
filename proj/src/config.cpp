#include "colontcn/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace ctcn {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

json merge(const json& base, const json& overrides) {
    if (!overrides.is_object() || !base.is_object()) return overrides;
    json out = base;
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        if (out.contains(it.key()) && out[it.key()].is_object() && it.value().is_object())
            out[it.key()] = merge(out[it.key()], it.value());
        else
            out[it.key()] = it.value();
    }
    return out;
}

template <typename T>
void read_field(const json& j, const char* key, T& into) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
}

void parse_model(const json& j, ModelConfig& cfg) {
    reject_unknown(j,
                   {"levels", "channels", "kernel", "dropout", "double_conv", "residual",
                    "weight_norm", "num_classes", "feature_dim", "refinement_stages",
                    "refinement_levels"},
                   "model");
    read_field(j, "levels", cfg.base.levels);
    read_field(j, "channels", cfg.base.block.channels);
    read_field(j, "kernel", cfg.base.block.kernel);
    read_field(j, "dropout", cfg.base.block.dropout_rate);
    read_field(j, "double_conv", cfg.base.block.double_conv);
    read_field(j, "residual", cfg.base.block.residual);
    read_field(j, "weight_norm", cfg.base.block.weight_norm);
    read_field(j, "num_classes", cfg.base.num_classes);
    read_field(j, "feature_dim", cfg.base.input_dim);
    read_field(j, "refinement_stages", cfg.refinement_stages);
    read_field(j, "refinement_levels", cfg.refinement_levels);
    cfg.base.use_fr = cfg.base.input_dim != cfg.base.block.channels;
}

void parse_loss(const json& j, LossConfig& cfg) {
    reject_unknown(j, {"tau", "lambda", "use_tmse", "focal_gamma"}, "loss");
    read_field(j, "tau", cfg.tau);
    read_field(j, "lambda", cfg.lambda);
    read_field(j, "use_tmse", cfg.use_tmse);
    if (j.contains("focal_gamma") && !j.at("focal_gamma").is_null()) {
        double g = 0.0;
        read_field(j, "focal_gamma", g);
        cfg.focal_gamma = g;
    }
}

void parse_optim(const json& j, OptimConfig& cfg) {
    reject_unknown(j,
                   {"lr0", "lr_final", "weight_decay", "beta1", "beta2", "eps", "total_iters",
                    "batch_size", "burn_in_iters", "eval_every"},
                   "optim");
    read_field(j, "lr0", cfg.lr0);
    read_field(j, "lr_final", cfg.lr_final);
    read_field(j, "weight_decay", cfg.weight_decay);
    read_field(j, "beta1", cfg.beta1);
    read_field(j, "beta2", cfg.beta2);
    read_field(j, "eps", cfg.eps);
    read_field(j, "total_iters", cfg.total_iters);
    read_field(j, "batch_size", cfg.batch_size);
    read_field(j, "burn_in_iters", cfg.burn_in_iters);
    read_field(j, "eval_every", cfg.eval_every);
}

void parse_synth(const json& j, SyntheticSpec& spec) {
    reject_unknown(j,
                   {"feature_dim", "ileum_presence_prob", "separation", "noise",
                    "smoothing_window", "fps", "durations"},
                   "synth");
    read_field(j, "feature_dim", spec.feature_dim);
    read_field(j, "ileum_presence_prob", spec.ileum_presence_prob);
    read_field(j, "separation", spec.separation);
    read_field(j, "noise", spec.noise);
    read_field(j, "smoothing_window", spec.smoothing_window);
    read_field(j, "fps", spec.fps);
    if (j.contains("durations")) {
        const json& jd = j.at("durations");
        for (auto it = jd.begin(); it != jd.end(); ++it) {
            const LabelClass c = label_from_name(it.key());
            if (c == LabelClass::Uncertain)
                throw ConfigError("config: uncertain has no duration entry");
            const json& row = it.value();
            reject_unknown(row, {"mean", "min", "max"}, "synth.durations." + it.key());
            DurationStats& d = spec.durations[std::size_t(int(c))];
            read_field(row, "mean", d.mean);
            read_field(row, "min", d.min);
            read_field(row, "max", d.max);
        }
    }
}

void parse_data(const json& j, RunConfig& cfg) {
    reject_unknown(j, {"manifest", "folds", "temporal_augment", "target_fps"}, "data");
    read_field(j, "manifest", cfg.manifest_path);
    read_field(j, "folds", cfg.folds_path);
    read_field(j, "temporal_augment", cfg.temporal_augment);
    read_field(j, "target_fps", cfg.target_fps);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& config_json, const std::string& overrides_json) {
    json j;
    try {
        j = config_json.empty() ? json::object() : json::parse(config_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!overrides_json.empty()) {
        json jo;
        try {
            jo = json::parse(overrides_json);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config overrides: invalid JSON: ") + e.what());
        }
        j = merge(j, jo);
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    reject_unknown(j, {"model", "loss", "optim", "synth", "data", "seed", "threads"}, "top level");

    RunConfig cfg;
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("loss")) parse_loss(j.at("loss"), cfg.loss);
    if (j.contains("optim")) parse_optim(j.at("optim"), cfg.optim);
    if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
    if (j.contains("data")) parse_data(j.at("data"), cfg);
    read_field(j, "seed", cfg.seed);
    read_field(j, "threads", cfg.threads);

    cfg.model.validate();
    cfg.optim.validate();
    cfg.synth.validate();
    if (cfg.loss.tau <= 0.0) throw ConfigError("config: loss.tau must be positive");
    if (cfg.loss.lambda < 0.0) throw ConfigError("config: loss.lambda must be >= 0");
    if (cfg.loss.focal_gamma && *cfg.loss.focal_gamma < 0.0)
        throw ConfigError("config: loss.focal_gamma must be >= 0");
    return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::string& overrides_json) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text, overrides_json);
}

std::string RunConfig::to_json() const {
    json j;
    j["model"] = {{"levels", model.base.levels},
                  {"channels", model.base.block.channels},
                  {"kernel", model.base.block.kernel},
                  {"dropout", model.base.block.dropout_rate},
                  {"double_conv", model.base.block.double_conv},
                  {"residual", model.base.block.residual},
                  {"weight_norm", model.base.block.weight_norm},
                  {"num_classes", model.base.num_classes},
                  {"feature_dim", model.base.input_dim},
                  {"refinement_stages", model.refinement_stages},
                  {"refinement_levels", model.refinement_levels}};
    j["loss"] = {{"tau", loss.tau},
                 {"lambda", loss.lambda},
                 {"use_tmse", loss.use_tmse},
                 {"focal_gamma", loss.focal_gamma ? json(*loss.focal_gamma) : json(nullptr)}};
    j["optim"] = {{"lr0", optim.lr0},
                  {"lr_final", optim.lr_final},
                  {"weight_decay", optim.weight_decay},
                  {"beta1", optim.beta1},
                  {"beta2", optim.beta2},
                  {"eps", optim.eps},
                  {"total_iters", optim.total_iters},
                  {"batch_size", optim.batch_size},
                  {"burn_in_iters", optim.burn_in_iters},
                  {"eval_every", optim.eval_every}};
    json jd = json::object();
    for (int c = 0; c < kNumClasses; ++c) {
        const DurationStats& d = synth.durations[std::size_t(c)];
        jd[label_name(LabelClass(c))] = {{"mean", d.mean}, {"min", d.min}, {"max", d.max}};
    }
    j["synth"] = {{"feature_dim", synth.feature_dim},
                  {"ileum_presence_prob", synth.ileum_presence_prob},
                  {"separation", synth.separation},
                  {"noise", synth.noise},
                  {"smoothing_window", synth.smoothing_window},
                  {"fps", synth.fps},
                  {"durations", jd}};
    j["data"] = {{"manifest", manifest_path},
                 {"folds", folds_path},
                 {"temporal_augment", temporal_augment},
                 {"target_fps", target_fps}};
    j["seed"] = seed;
    j["threads"] = threads;
    return j.dump(2);
}

}  // namespace ctcn
