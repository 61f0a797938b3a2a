#pragma once

#include <string>
#include <vector>

#include "colontcn/config.hpp"
#include "colontcn/metrics.hpp"

namespace ctcn::cmd {

// Writes n synthetic videos (CTCNFEAT + annotation CSV each), a manifest,
// fold documents for both schemes and the resolved config echo.
void synth(const RunConfig& cfg, int n_videos, const std::string& out_dir);

// Trains one fold and writes checkpoint.ctcn, history.jsonl,
// validation_report.json and config.json into out_dir.
void train(const RunConfig& cfg, int fold_id, const std::string& out_dir);

// Evaluates a checkpoint and writes report.json (plus per-video gt/pred
// label files when dump_labels). `split` is "test", "valid" or "train";
// with an empty folds path every manifest video is evaluated.
MetricsReport eval(const std::string& checkpoint_path, const std::string& manifest_path,
                   const std::string& folds_path, int fold_id, const std::string& split,
                   const std::string& out_dir, bool dump_labels);

// Per-frame argmax labels for each feature file; writes
// <out_dir>/<video>.labels.csv, optionally with per-class probabilities.
void predict(const std::string& checkpoint_path, const std::vector<std::string>& feature_paths,
             const std::string& out_dir, bool write_probs);

// Parameter count, receptive field and GFLOPs at the given sequence lengths.
std::string profile(const RunConfig& cfg, const std::vector<long long>& frames);

// Label CSVs (predict/eval output format) -> SVG timeline.
void render(const std::vector<std::string>& label_paths, const std::string& out_svg);

void folds_validate(const std::string& folds_path, const std::string& manifest_path);

// Shared helpers.
std::string report_to_json(const MetricsReport& report, const ModelConfig& model_cfg);
void write_label_csv(const std::string& path, const std::vector<int>& labels,
                     const SeqMatrix* probs);
std::vector<int> read_label_csv(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void ensure_directory(const std::string& path);

}  // namespace ctcn::cmd
