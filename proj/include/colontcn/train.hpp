#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "colontcn/checkpoint.hpp"
#include "colontcn/data.hpp"
#include "colontcn/loss.hpp"
#include "colontcn/metrics.hpp"
#include "colontcn/model.hpp"

namespace ctcn {

struct OptimConfig {
    double lr0 = 5e-4;
    double lr_final = 1e-6;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t total_iters = 3000;
    int batch_size = 6;
    std::int64_t burn_in_iters = 500;   // earliest iteration eligible for selection
    std::int64_t eval_every = 250;      // validation cadence

    void validate() const;
};

// Linear interpolation lr0 -> lr_final across total_iters.
double lr_at(std::int64_t iter, const OptimConfig& cfg);

// One decoupled-weight-decay Adam step over all tensors. Decay applies to
// conv direction vectors and gains, not biases.
void adamw_step(ModelParams& params, OptimState& state, double lr, const OptimConfig& cfg);

OptimState init_optim_state(ModelParams& params);

struct FoldSpec {
    int fold_id = 0;
    std::string scheme;  // "5fold" or "4fold"
    std::vector<std::string> train_ids;
    std::vector<std::string> valid_ids;
    std::vector<std::string> test_ids;
};

// Throws ConfigError when splits overlap within a fold or a video appears in
// more than one test set across the scheme.
void validate_folds(const std::vector<FoldSpec>& folds);

std::vector<FoldSpec> load_folds(const std::string& path);
void save_folds(const std::vector<FoldSpec>& folds, const std::string& path);

// Fold construction over a synthetic manifest: the 5-fold scheme draws
// per-cohort test triples so every video is tested exactly once; the 4-fold
// scheme holds out one cohort for test and one for validation.
std::vector<FoldSpec> make_5fold(const Manifest& manifest, RngStream& rng);
std::vector<FoldSpec> make_4fold(const Manifest& manifest);

// ---- training ----

struct HistoryRecord {
    std::int64_t iter = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct EvalRecord {
    std::int64_t iter = 0;
    double wf1 = 0.0;
    double wjacc = 0.0;
    bool best = false;
};

struct TrainResult {
    Checkpoint best;
    std::vector<HistoryRecord> history;
    std::vector<EvalRecord> evals;
};

struct TrainDataset {
    std::vector<FeatureSequence> train;
    std::vector<FeatureSequence> valid;
};

struct TrainOptions {
    ModelConfig model;
    LossConfig loss;
    OptimConfig optim;
    std::uint64_t seed = 0;
    bool temporal_augment = false;  // only meaningful when sources exceed 5 fps
    double target_fps = 5.0;
    int threads = 0;                // 0 = hardware concurrency
    // Optional resume point: parameters + optimizer state + next iteration.
    std::optional<Checkpoint> resume;
};

// Mean combined loss over the batch, equal to the mean of per-video losses.
// When `params_grad` is non-null, mean per-sequence gradients accumulate
// into the buffers (merged in fixed sequence order).
double batch_loss(const Batch& batch, const ModelConfig& cfg, const ModelParams& params,
                  const ClassWeights& weights, const LossConfig& loss_cfg, RngStream& rng,
                  bool training, ModelParams* params_grad, int threads);

// Median-frequency class weights from the training split's unmasked frames.
ClassWeights train_split_class_weights(const std::vector<FeatureSequence>& train, int num_classes);

// Per-frame argmax labels of the last stage, dropout off.
std::vector<int> predict_labels(const SeqMatrix& features, const ModelConfig& cfg,
                                const ModelParams& params);

// Micro-aggregated metrics of a parameter set over a list of videos.
MetricsReport evaluate_videos(const std::vector<FeatureSequence>& videos, const ModelConfig& cfg,
                              const ModelParams& params, int threads);

TrainResult train_loop(const TrainDataset& data, const TrainOptions& opts,
                       const std::function<void(const HistoryRecord&)>& on_iter = nullptr,
                       const std::function<void(const EvalRecord&)>& on_eval = nullptr);

// ---- cross-validation ----

struct CvResult {
    std::vector<MetricsReport> per_fold;
    MetricsReport mean;  // per-class scores and aggregates averaged over folds
};

struct CvVideoSource {
    // Loads a video by id; invoked lazily per fold.
    std::function<FeatureSequence(const std::string&)> load;
    std::vector<std::string> all_ids;
};

CvResult run_cv(const std::vector<FoldSpec>& folds, const CvVideoSource& source,
                const TrainOptions& opts,
                const std::function<void(int, const MetricsReport&)>& on_fold = nullptr);

}  // namespace ctcn
