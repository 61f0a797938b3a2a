// colontcn command-line front end. All domain work goes through the C API in
// colontcn.h; json.hpp is used only to assemble flag-override documents.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "colontcn.h"

namespace {

int report(ctcn_status status) {
    if (status != CTCN_OK) std::fprintf(stderr, "error: %s\n", ctcn_last_error());
    return int(status);
}

std::string read_file_or_die(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open config file: %s\n", path.c_str());
        std::exit(2);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ConfigArgs {
    std::string config_path;
    nlohmann::json overrides = nlohmann::json::object();

    void add_common(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run-config JSON file");
    }
    void set(const std::string& dotted, nlohmann::json value) {
        nlohmann::json* node = &overrides;
        std::string key = dotted;
        std::size_t dot;
        while ((dot = key.find('.')) != std::string::npos) {
            node = &(*node)[key.substr(0, dot)];
            key = key.substr(dot + 1);
        }
        (*node)[key] = std::move(value);
    }
    std::string config_text() const {
        return config_path.empty() ? std::string() : read_file_or_die(config_path);
    }
    std::string overrides_text() const {
        return overrides.empty() ? std::string() : overrides.dump();
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ColonTCN temporal segmentation toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    ConfigArgs synth_cfg;
    synth_cfg.add_common(synth);
    int synth_n = 60;
    std::string synth_out;
    std::int64_t synth_seed = -1;
    synth->add_option("--n", synth_n, "Number of videos");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Seed override");

    auto* train = app.add_subcommand("train", "Train one cross-validation fold");
    ConfigArgs train_cfg;
    train_cfg.add_common(train);
    int train_fold = 1;
    std::string train_out, train_manifest, train_folds;
    std::int64_t train_seed = -1, train_iters = -1;
    train->add_option("--fold", train_fold, "Fold id");
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--seed", train_seed, "Seed override");
    train->add_option("--manifest", train_manifest, "Dataset manifest override");
    train->add_option("--folds", train_folds, "Folds file override");
    train->add_option("--iters", train_iters, "optim.total_iters override");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ck, eval_manifest, eval_folds, eval_split = "test", eval_out;
    int eval_fold = 1;
    bool eval_dump = false;
    eval->add_option("--checkpoint", eval_ck, "Checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
    eval->add_option("--folds", eval_folds, "Folds file (omit to evaluate all videos)");
    eval->add_option("--fold", eval_fold, "Fold id");
    eval->add_option("--split", eval_split, "Split to evaluate: test|valid|train");
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_flag("--dump-labels", eval_dump, "Write per-video gt/pred label CSVs");

    auto* predict = app.add_subcommand("predict", "Per-frame labels for feature files");
    std::string pred_ck, pred_out;
    std::vector<std::string> pred_features;
    bool pred_probs = false;
    predict->add_option("--checkpoint", pred_ck, "Checkpoint file")->required();
    predict->add_option("--out", pred_out, "Output directory")->required();
    predict->add_option("features", pred_features, "CTCNFEAT files")->required();
    predict->add_flag("--probs", pred_probs, "Also write class probabilities");

    auto* profile = app.add_subcommand("profile", "Parameter / receptive-field / GFLOP profile");
    ConfigArgs prof_cfg;
    prof_cfg.add_common(profile);
    std::vector<std::int64_t> prof_frames;
    profile->add_option("--frames", prof_frames, "Sequence lengths (default 2500)");

    auto* render = app.add_subcommand("render", "Render label tracks as an SVG timeline");
    std::vector<std::string> render_tracks;
    std::string render_out;
    render->add_option("--out", render_out, "Output SVG path")->required();
    render->add_option("tracks", render_tracks, "Label CSV files")->required();

    auto* foldsv = app.add_subcommand("folds-validate", "Validate a folds document");
    std::string fv_folds, fv_manifest;
    foldsv->add_option("--folds", fv_folds, "Folds file")->required();
    foldsv->add_option("--manifest", fv_manifest, "Manifest to cross-check ids against");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (synth->parsed()) {
        if (synth_seed >= 0) synth_cfg.set("seed", synth_seed);
        return report(ctcn_cmd_synth(synth_cfg.config_text().c_str(),
                                     synth_cfg.overrides_text().c_str(), synth_n,
                                     synth_out.c_str()));
    }
    if (train->parsed()) {
        if (train_seed >= 0) train_cfg.set("seed", train_seed);
        if (!train_manifest.empty()) train_cfg.set("data.manifest", train_manifest);
        if (!train_folds.empty()) train_cfg.set("data.folds", train_folds);
        if (train_iters > 0) train_cfg.set("optim.total_iters", train_iters);
        return report(ctcn_cmd_train(train_cfg.config_text().c_str(),
                                     train_cfg.overrides_text().c_str(), train_fold,
                                     train_out.c_str()));
    }
    if (eval->parsed()) {
        return report(ctcn_cmd_eval(eval_ck.c_str(), eval_manifest.c_str(),
                                    eval_folds.empty() ? nullptr : eval_folds.c_str(), eval_fold,
                                    eval_split.c_str(), eval_out.c_str(), eval_dump ? 1 : 0));
    }
    if (predict->parsed()) {
        std::vector<const char*> paths;
        for (const std::string& p : pred_features) paths.push_back(p.c_str());
        return report(ctcn_cmd_predict(pred_ck.c_str(), paths.data(), int(paths.size()),
                                       pred_out.c_str(), pred_probs ? 1 : 0));
    }
    if (profile->parsed()) {
        if (prof_frames.empty()) prof_frames.push_back(2500);
        char* json = nullptr;
        const ctcn_status st =
            ctcn_cmd_profile(prof_cfg.config_text().c_str(), prof_cfg.overrides_text().c_str(),
                             prof_frames.data(), int(prof_frames.size()), &json);
        if (st == CTCN_OK && json) {
            std::printf("%s\n", json);
            ctcn_string_free(json);
        }
        return report(st);
    }
    if (render->parsed()) {
        std::vector<const char*> paths;
        for (const std::string& p : render_tracks) paths.push_back(p.c_str());
        return report(ctcn_cmd_render(paths.data(), int(paths.size()), render_out.c_str()));
    }
    if (foldsv->parsed()) {
        return report(ctcn_cmd_folds_validate(
            fv_folds.c_str(), fv_manifest.empty() ? nullptr : fv_manifest.c_str()));
    }
    return 2;
}
