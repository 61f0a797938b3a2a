#include "colontcn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "colontcn/checkpoint.hpp"
#include "colontcn/render.hpp"
#include "colontcn/synth.hpp"
#include "colontcn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ctcn::cmd {

void ensure_directory(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("failed writing " + path);
}

namespace {

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string cohort_of(int index, int total) {
    // Four cohorts, contiguous chunks, mirroring a multi-center collection.
    const int cohorts = 4;
    const int c = total <= 0 ? 0 : std::min(cohorts - 1, index * cohorts / total);
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", c + 1);
    return buf;
}

}  // namespace

void synth(const RunConfig& cfg, int n_videos, const std::string& out_dir) {
    if (n_videos < 0) throw ConfigError("synth: negative video count");
    ensure_directory(out_dir);
    ensure_directory(out_dir + "/features");
    ensure_directory(out_dir + "/annotations");

    RngStream rng(cfg.seed);
    const std::vector<FeatureSequence> videos = generate_synthetic(cfg.synth, n_videos, rng);

    Manifest manifest;
    manifest.feature_dim = cfg.synth.feature_dim;
    for (int i = 0; i < n_videos; ++i) {
        const FeatureSequence& v = videos[std::size_t(i)];
        const std::string feat_rel = "features/" + v.video_id + ".ctcnfeat";
        const std::string ann_rel = "annotations/" + v.video_id + ".csv";
        save_features(v, out_dir + "/" + feat_rel);
        save_annotations(segmentize(v.labels, v.video_id), out_dir + "/" + ann_rel);
        ManifestEntry e;
        e.video_id = v.video_id;
        e.features_path = feat_rel;
        e.annotations_path = ann_rel;
        e.fps = v.fps;
        e.cohort = cohort_of(i, n_videos);
        manifest.videos.push_back(std::move(e));
    }
    save_manifest(manifest, out_dir + "/manifest.json");

    if (n_videos >= 20) {
        RngStream fold_rng = rng.derive(0xf01d);
        save_folds(make_5fold(manifest, fold_rng), out_dir + "/folds_5fold.json");
        save_folds(make_4fold(manifest), out_dir + "/folds_4fold.json");
    }
    write_text_file(out_dir + "/config.json", cfg.to_json() + "\n");
}

namespace {

struct LoadedDataset {
    Manifest manifest;
    std::string dir;

    FeatureSequence load(const std::string& id, bool resample, double target_fps) const {
        for (const ManifestEntry& e : manifest.videos) {
            if (e.video_id != id) continue;
            FeatureSequence seq = load_video(manifest, e, dir);
            if (resample && seq.fps > target_fps) seq = resample_to_fps(seq, target_fps);
            return seq;
        }
        throw DataError("video id not in manifest: " + id);
    }
};

LoadedDataset open_dataset(const std::string& manifest_path) {
    LoadedDataset ds;
    ds.manifest = load_manifest(manifest_path);
    ds.dir = directory_of(manifest_path);
    return ds;
}

FoldSpec pick_fold(const std::vector<FoldSpec>& folds, int fold_id) {
    for (const FoldSpec& f : folds)
        if (f.fold_id == fold_id) return f;
    throw ConfigError("fold " + std::to_string(fold_id) + " not present in folds file");
}

TrainOptions options_from(const RunConfig& cfg) {
    TrainOptions opts;
    opts.model = cfg.model;
    opts.loss = cfg.loss;
    opts.optim = cfg.optim;
    opts.seed = cfg.seed;
    opts.temporal_augment = cfg.temporal_augment;
    opts.target_fps = cfg.target_fps;
    opts.threads = cfg.threads;
    return opts;
}

}  // namespace

void train(const RunConfig& cfg, int fold_id, const std::string& out_dir) {
    if (cfg.manifest_path.empty()) throw ConfigError("train: data.manifest is required");
    if (cfg.folds_path.empty()) throw ConfigError("train: data.folds is required");
    const LoadedDataset ds = open_dataset(cfg.manifest_path);
    const std::vector<FoldSpec> folds = load_folds(cfg.folds_path);
    validate_folds(folds);
    const FoldSpec fold = pick_fold(folds, fold_id);

    if (int(cfg.model.base.input_dim) != ds.manifest.feature_dim)
        throw ConfigError("train: model.feature_dim " + std::to_string(cfg.model.base.input_dim) +
                          " does not match manifest feature_dim " +
                          std::to_string(ds.manifest.feature_dim));

    TrainDataset data;
    // Training sources keep their native rate when augmentation will
    // subsample them; validation is always brought to the target rate.
    for (const std::string& id : fold.train_ids)
        data.train.push_back(ds.load(id, !cfg.temporal_augment, cfg.target_fps));
    for (const std::string& id : fold.valid_ids)
        data.valid.push_back(ds.load(id, true, cfg.target_fps));

    ensure_directory(out_dir);
    std::ofstream history(out_dir + "/history.jsonl", std::ios::trunc);
    if (!history) throw DataError("cannot write " + out_dir + "/history.jsonl");

    TrainOptions opts = options_from(cfg);
    TrainResult result = train_loop(
        data, opts,
        [&](const HistoryRecord& r) {
            json j = {{"type", "iter"}, {"iter", r.iter}, {"lr", r.lr}, {"loss", r.loss}};
            history << j.dump() << '\n';
        },
        [&](const EvalRecord& e) {
            json j = {{"type", "eval"},
                      {"iter", e.iter},
                      {"wf1", e.wf1},
                      {"wjacc", e.wjacc},
                      {"best", e.best}};
            history << j.dump() << '\n';
        });
    history.close();

    result.best.extra_meta = [&] {
        json echo = json::parse(cfg.to_json());
        echo["fold"] = fold_id;
        return echo.dump();
    }();
    result.best.save(out_dir + "/checkpoint.ctcn");

    const MetricsReport valid_report =
        evaluate_videos(data.valid, cfg.model, result.best.params, cfg.threads);
    write_text_file(out_dir + "/validation_report.json",
                    report_to_json(valid_report, cfg.model) + "\n");
    write_text_file(out_dir + "/config.json", [&] {
        json echo = json::parse(cfg.to_json());
        echo["fold"] = fold_id;
        return echo.dump(2) + "\n";
    }());
}

std::string report_to_json(const MetricsReport& report, const ModelConfig& model_cfg) {
    const std::int64_t ref_frames = 2500;  // sequence length used for the GFLOPs figure
    json j;
    json classes = json::array();
    for (int c = 0; c < kNumClasses; ++c) classes.push_back(label_name(LabelClass(c)));
    j["classes"] = classes;
    j["f1"] = report.f1;
    j["jaccard"] = report.jaccard;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["wf1"] = report.wf1;
    j["wjacc"] = report.wjacc;
    j["wf1_inverse"] = report.wf1_inverse;
    j["wjacc_inverse"] = report.wjacc_inverse;
    j["wmape"] = report.wmape;
    j["evaluated_frames"] = report.evaluated_frames;
    json vids = json::array();
    for (const VideoWithdrawal& v : report.videos)
        vids.push_back({{"video_id", v.video_id},
                        {"withdrawal_actual", v.actual},
                        {"withdrawal_predicted", v.predicted}});
    j["videos"] = vids;
    j["params"] = count_params(model_cfg);
    j["gflops"] = {{"frames", ref_frames},
                   {"value", double(estimate_flops(model_cfg, ref_frames)) / 1e9}};
    return j.dump(2);
}

void write_label_csv(const std::string& path, const std::vector<int>& labels,
                     const SeqMatrix* probs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "frame,label";
    if (probs)
        for (std::size_t c = 0; c < probs->cols(); ++c)
            out << ",p_" << label_name(LabelClass(int(c)));
    out << '\n';
    char buf[32];
    for (std::size_t t = 0; t < labels.size(); ++t) {
        out << t << ',' << label_name(LabelClass(labels[t]));
        if (probs) {
            for (std::size_t c = 0; c < probs->cols(); ++c) {
                std::snprintf(buf, sizeof(buf), ",%.9g", (*probs)(t, c));
                out << buf;
            }
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

std::vector<int> read_label_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open label file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty label file");
    if (line.rfind("frame,label", 0) != 0)
        throw DataError(path + ": expected header starting with frame,label");
    std::vector<int> labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::size_t c1 = line.find(',');
        if (c1 == std::string::npos)
            throw DataError(path + " line " + std::to_string(line_no) + ": malformed row");
        std::size_t c2 = line.find(',', c1 + 1);
        if (c2 == std::string::npos) c2 = line.size();
        std::string name = line.substr(c1 + 1, c2 - c1 - 1);
        if (!name.empty() && name.back() == '\r') name.pop_back();
        labels.push_back(int(label_from_name(name)));
    }
    return labels;
}

MetricsReport eval(const std::string& checkpoint_path, const std::string& manifest_path,
                   const std::string& folds_path, int fold_id, const std::string& split,
                   const std::string& out_dir, bool dump_labels) {
    const Checkpoint ck = Checkpoint::load(checkpoint_path);
    if (ck.config.base.num_classes != kNumClasses)
        throw DataError("eval: checkpoint has " + std::to_string(ck.config.base.num_classes) +
                        " classes, expected " + std::to_string(kNumClasses));
    const LoadedDataset ds = open_dataset(manifest_path);
    if (ck.config.base.input_dim != ds.manifest.feature_dim)
        throw DataError("eval: checkpoint feature dim " + std::to_string(ck.config.base.input_dim) +
                        " does not match manifest feature_dim " +
                        std::to_string(ds.manifest.feature_dim));

    std::vector<std::string> ids;
    if (folds_path.empty()) {
        for (const ManifestEntry& e : ds.manifest.videos) ids.push_back(e.video_id);
    } else {
        const FoldSpec fold = pick_fold(load_folds(folds_path), fold_id);
        if (split == "test" || split.empty())
            ids = fold.test_ids;
        else if (split == "valid")
            ids = fold.valid_ids;
        else if (split == "train")
            ids = fold.train_ids;
        else
            throw ConfigError("eval: unknown split '" + split + "'");
    }
    if (ids.empty()) throw DataError("eval: no videos selected");

    std::vector<FeatureSequence> videos;
    for (const std::string& id : ids) videos.push_back(ds.load(id, true, 5.0));

    const MetricsReport report = evaluate_videos(videos, ck.config, ck.params, 0);
    if (!out_dir.empty()) {
        ensure_directory(out_dir);
        write_text_file(out_dir + "/report.json", report_to_json(report, ck.config) + "\n");
        if (dump_labels) {
            for (const FeatureSequence& v : videos) {
                write_label_csv(out_dir + "/" + v.video_id + ".gt.csv", v.labels, nullptr);
                const std::vector<int> pred = predict_labels(v.features, ck.config, ck.params);
                write_label_csv(out_dir + "/" + v.video_id + ".pred.csv", pred, nullptr);
            }
        }
    }
    return report;
}

void predict(const std::string& checkpoint_path, const std::vector<std::string>& feature_paths,
             const std::string& out_dir, bool write_probs) {
    if (feature_paths.empty()) throw ConfigError("predict: no feature files given");
    const Checkpoint ck = Checkpoint::load(checkpoint_path);
    ensure_directory(out_dir);
    for (const std::string& path : feature_paths) {
        FeatureSequence seq = load_features(path);
        if (int(seq.dim()) != ck.config.base.input_dim)
            throw DataError("predict: " + path + " has feature dim " + std::to_string(seq.dim()) +
                            ", checkpoint expects " + std::to_string(ck.config.base.input_dim));
        if (seq.fps > 5.0) {
            seq.labels.assign(seq.frames(), 0);
            seq.mask.assign(seq.frames(), 1);
            seq = resample_to_fps(seq, 5.0);
        }
        RngStream rng(0);
        ProbOutput out = multistage_forward(seq.features, ck.config, ck.params, rng, false);
        const SeqMatrix& probs = out.last();
        std::vector<int> labels(probs.rows());
        for (std::size_t t = 0; t < probs.rows(); ++t) {
            int best = 0;
            for (std::size_t c = 1; c < probs.cols(); ++c)
                if (probs(t, c) > probs(t, std::size_t(best))) best = int(c);
            labels[t] = best;
        }
        write_label_csv(out_dir + "/" + stem_of(path) + ".labels.csv", labels,
                        write_probs ? &probs : nullptr);
    }
}

std::string profile(const RunConfig& cfg, const std::vector<long long>& frames) {
    json j;
    j["params"] = count_params(cfg.model);
    j["receptive_field"] = receptive_field(cfg.model.base);
    json rows = json::array();
    for (long long T : frames)
        rows.push_back({{"frames", T}, {"gflops", double(estimate_flops(cfg.model, T)) / 1e9}});
    j["flops"] = rows;
    return j.dump(2);
}

void render(const std::vector<std::string>& label_paths, const std::string& out_svg) {
    if (label_paths.empty()) throw ConfigError("render: no label files given");
    std::vector<TimelineTrack> tracks;
    for (const std::string& path : label_paths) {
        TimelineTrack tr;
        tr.name = stem_of(path);
        tr.labels = read_label_csv(path);
        tracks.push_back(std::move(tr));
    }
    const std::size_t T = tracks.front().labels.size();
    for (const TimelineTrack& tr : tracks)
        if (tr.labels.size() != T)
            throw DataError("render: track " + tr.name + " has different length");
    write_text_file(out_svg, render_timeline_svg(tracks));
}

void folds_validate(const std::string& folds_path, const std::string& manifest_path) {
    const std::vector<FoldSpec> folds = load_folds(folds_path);
    validate_folds(folds);
    if (!manifest_path.empty()) {
        const Manifest manifest = load_manifest(manifest_path);
        std::vector<std::string> known;
        for (const ManifestEntry& e : manifest.videos) known.push_back(e.video_id);
        std::sort(known.begin(), known.end());
        for (const FoldSpec& f : folds) {
            auto check = [&](const std::vector<std::string>& ids) {
                for (const std::string& id : ids)
                    if (!std::binary_search(known.begin(), known.end(), id))
                        throw DataError("fold " + std::to_string(f.fold_id) + ": video " + id +
                                        " not present in manifest");
            };
            check(f.train_ids);
            check(f.valid_ids);
            check(f.test_ids);
        }
    }
}

}  // namespace ctcn::cmd
