#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "colontcn/model.hpp"
#include "colontcn/seq.hpp"

namespace ctcn {

struct ClassWeights {
    std::vector<double> w;
};

struct LossConfig {
    double tau = 4.0;
    double lambda = 0.15;
    bool use_tmse = true;
    std::optional<double> focal_gamma;
};

using FrameMask = std::vector<std::uint8_t>;  // 1 = frame participates

// Median frequency balancing: freq_c over classes with count > 0, then
// w_c = median(positive freqs) / freq_c; absent classes get weight 0.
ClassWeights median_frequency_weights(const std::vector<std::int64_t>& class_frame_counts);

// Mean over unmasked frames of -w_label * log_prob[t, label].
double weighted_cross_entropy(const SeqMatrix& log_probs, const std::vector<int>& labels,
                              const ClassWeights& weights, const FrameMask& mask);

// Truncated MSE over consecutive frames' log-probabilities, normalized by
// (#unmasked frames * C). A pair contributes only when both frames are
// unmasked; gradient flows only through the later frame.
double truncated_mse(const SeqMatrix& log_probs, double tau, const FrameMask& mask);

// Mean over unmasked frames of -w_label * (1 - p)^gamma * log p.
double focal_weighted_ce(const SeqMatrix& log_probs, const std::vector<int>& labels,
                         const ClassWeights& weights, double gamma, const FrameMask& mask);

// Mean over all stages of (L_cls + lambda * L_T-MSE).
double combined_loss(const ProbOutput& stage_outputs, const std::vector<int>& labels,
                     const ClassWeights& weights, const LossConfig& cfg, const FrameMask& mask);

// ---- value + gradient variants used by the training path ----
// Each returns the loss and writes dL/d(log_probs) into grad (accumulating).

double weighted_cross_entropy_grad(const SeqMatrix& log_probs, const std::vector<int>& labels,
                                   const ClassWeights& weights, const FrameMask& mask,
                                   SeqMatrix& grad, double scale);

double truncated_mse_grad(const SeqMatrix& log_probs, double tau, const FrameMask& mask,
                          SeqMatrix& grad, double scale);

double focal_weighted_ce_grad(const SeqMatrix& log_probs, const std::vector<int>& labels,
                              const ClassWeights& weights, double gamma, const FrameMask& mask,
                              SeqMatrix& grad, double scale);

// Combined loss over the log-prob matrices of all stages; returns the loss
// and fills one dL/d(log_probs) matrix per stage.
double combined_loss_grad(const std::vector<const SeqMatrix*>& stage_log_probs,
                          const std::vector<int>& labels, const ClassWeights& weights,
                          const LossConfig& cfg, const FrameMask& mask,
                          std::vector<SeqMatrix>& grads);

}  // namespace ctcn
