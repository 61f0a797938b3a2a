#include "colontcn.h"

#include <cstring>
#include <string>

#include "colontcn/checkpoint.hpp"
#include "colontcn/commands.hpp"
#include "colontcn/config.hpp"
#include "colontcn/data.hpp"
#include "colontcn/train.hpp"

using namespace ctcn;

struct ctcn_features {
    FeatureSequence seq;
};

struct ctcn_model {
    Checkpoint ck;
};

namespace {

thread_local std::string g_last_error = "no error";

ctcn_status fail(ctcn_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
ctcn_status guarded(Fn&& fn) {
    try {
        fn();
        return CTCN_OK;
    } catch (const ConfigError& e) {
        return fail(CTCN_ERROR_CONFIG, e.what());
    } catch (const DataError& e) {
        return fail(CTCN_ERROR_DATA, e.what());
    } catch (const NumericError& e) {
        return fail(CTCN_ERROR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(CTCN_ERROR, e.what());
    } catch (...) {
        return fail(CTCN_ERROR, "unknown error");
    }
}

std::string text_or_empty(const char* s) { return s ? std::string(s) : std::string(); }

RunConfig parse_config(const char* config_json, const char* overrides_json) {
    return RunConfig::parse(text_or_empty(config_json), text_or_empty(overrides_json));
}

}  // namespace

extern "C" {

const char* ctcn_last_error(void) { return g_last_error.c_str(); }

void ctcn_version(int* major, int* minor) {
    if (major) *major = 1;
    if (minor) *minor = 0;
}

void ctcn_string_free(char* s) { delete[] s; }

ctcn_status ctcn_features_load(const char* path, ctcn_features** out) {
    if (!path || !out) return fail(CTCN_ERROR, "ctcn_features_load: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto* f = new ctcn_features{load_features(path)};
        *out = f;
    });
}

void ctcn_features_free(ctcn_features* f) { delete f; }

int64_t ctcn_features_frames(const ctcn_features* f) {
    return f ? int64_t(f->seq.frames()) : -1;
}

int ctcn_features_dim(const ctcn_features* f) { return f ? int(f->seq.dim()) : -1; }

double ctcn_features_fps(const ctcn_features* f) { return f ? f->seq.fps : -1.0; }

ctcn_status ctcn_features_row(const ctcn_features* f, int64_t frame, double* out) {
    if (!f || !out) return fail(CTCN_ERROR, "ctcn_features_row: NULL argument");
    if (frame < 0 || frame >= int64_t(f->seq.frames()))
        return fail(CTCN_ERROR, "ctcn_features_row: frame out of range");
    std::memcpy(out, f->seq.features.row(std::size_t(frame)), f->seq.dim() * sizeof(double));
    return CTCN_OK;
}

ctcn_status ctcn_model_load(const char* checkpoint_path, ctcn_model** out) {
    if (!checkpoint_path || !out) return fail(CTCN_ERROR, "ctcn_model_load: NULL argument");
    *out = nullptr;
    return guarded([&] {
        auto* m = new ctcn_model{Checkpoint::load(checkpoint_path)};
        *out = m;
    });
}

void ctcn_model_free(ctcn_model* m) { delete m; }

int ctcn_model_num_classes(const ctcn_model* m) {
    return m ? m->ck.config.base.num_classes : -1;
}

int ctcn_model_feature_dim(const ctcn_model* m) { return m ? m->ck.config.base.input_dim : -1; }

ctcn_status ctcn_model_predict(const ctcn_model* m, const ctcn_features* f, int* labels,
                               double* probs) {
    if (!m || !f || !labels) return fail(CTCN_ERROR, "ctcn_model_predict: NULL argument");
    return guarded([&] {
        if (int(f->seq.dim()) != m->ck.config.base.input_dim)
            throw DataError("predict: feature dim " + std::to_string(f->seq.dim()) +
                            " does not match model input dim " +
                            std::to_string(m->ck.config.base.input_dim));
        RngStream rng(0);
        ProbOutput out = multistage_forward(f->seq.features, m->ck.config, m->ck.params, rng,
                                            /*training=*/false);
        const SeqMatrix& p = out.last();
        for (std::size_t t = 0; t < p.rows(); ++t) {
            int best = 0;
            for (std::size_t c = 1; c < p.cols(); ++c)
                if (p(t, c) > p(t, std::size_t(best))) best = int(c);
            labels[t] = best;
        }
        if (probs) std::memcpy(probs, p.data(), p.size() * sizeof(double));
    });
}

ctcn_status ctcn_cmd_synth(const char* config_json, const char* overrides_json, int n_videos,
                           const char* out_dir) {
    if (!out_dir) return fail(CTCN_ERROR, "ctcn_cmd_synth: NULL out_dir");
    return guarded([&] { cmd::synth(parse_config(config_json, overrides_json), n_videos, out_dir); });
}

ctcn_status ctcn_cmd_train(const char* config_json, const char* overrides_json, int fold_id,
                           const char* out_dir) {
    if (!out_dir) return fail(CTCN_ERROR, "ctcn_cmd_train: NULL out_dir");
    return guarded([&] { cmd::train(parse_config(config_json, overrides_json), fold_id, out_dir); });
}

ctcn_status ctcn_cmd_eval(const char* checkpoint_path, const char* manifest_path,
                          const char* folds_path, int fold_id, const char* split,
                          const char* out_dir, int dump_labels) {
    if (!checkpoint_path || !manifest_path)
        return fail(CTCN_ERROR, "ctcn_cmd_eval: NULL argument");
    return guarded([&] {
        cmd::eval(checkpoint_path, manifest_path, text_or_empty(folds_path), fold_id,
                  text_or_empty(split), text_or_empty(out_dir), dump_labels != 0);
    });
}

ctcn_status ctcn_cmd_predict(const char* checkpoint_path, const char* const* feature_paths,
                             int n_paths, const char* out_dir, int write_probs) {
    if (!checkpoint_path || !feature_paths || !out_dir)
        return fail(CTCN_ERROR, "ctcn_cmd_predict: NULL argument");
    return guarded([&] {
        std::vector<std::string> paths;
        for (int i = 0; i < n_paths; ++i) paths.emplace_back(feature_paths[i]);
        cmd::predict(checkpoint_path, paths, out_dir, write_probs != 0);
    });
}

ctcn_status ctcn_cmd_profile(const char* config_json, const char* overrides_json,
                             const int64_t* frames, int n_frames, char** json_out) {
    if (!json_out) return fail(CTCN_ERROR, "ctcn_cmd_profile: NULL json_out");
    *json_out = nullptr;
    return guarded([&] {
        std::vector<long long> f;
        for (int i = 0; i < n_frames; ++i) f.push_back(frames[i]);
        const std::string text = cmd::profile(parse_config(config_json, overrides_json), f);
        char* buf = new char[text.size() + 1];
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *json_out = buf;
    });
}

ctcn_status ctcn_cmd_render(const char* const* label_paths, int n_paths, const char* out_svg) {
    if (!label_paths || !out_svg) return fail(CTCN_ERROR, "ctcn_cmd_render: NULL argument");
    return guarded([&] {
        std::vector<std::string> paths;
        for (int i = 0; i < n_paths; ++i) paths.emplace_back(label_paths[i]);
        cmd::render(paths, out_svg);
    });
}

ctcn_status ctcn_cmd_folds_validate(const char* folds_path, const char* manifest_path) {
    if (!folds_path) return fail(CTCN_ERROR, "ctcn_cmd_folds_validate: NULL folds_path");
    return guarded([&] { cmd::folds_validate(folds_path, text_or_empty(manifest_path)); });
}

}  // extern "C"
