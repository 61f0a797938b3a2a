#include "colontcn/loss.hpp"

#include <algorithm>
#include <cmath>

namespace ctcn {

namespace {

bool frame_on(const FrameMask& mask, std::size_t t) { return mask.empty() || mask[t]; }

std::size_t unmasked_count(const FrameMask& mask, std::size_t T) {
    if (mask.empty()) return T;
    std::size_t n = 0;
    for (std::size_t t = 0; t < T; ++t)
        if (mask[t]) ++n;
    return n;
}

void check_labels(const SeqMatrix& log_probs, const std::vector<int>& labels,
                  const FrameMask& mask) {
    require(labels.size() == log_probs.rows(), "loss: label count mismatch");
    require(mask.empty() || mask.size() == log_probs.rows(), "loss: mask length mismatch");
    const int C = int(log_probs.cols());
    for (std::size_t t = 0; t < labels.size(); ++t)
        if (frame_on(mask, t) && (labels[t] < 0 || labels[t] >= C))
            throw DataError("loss: label out of range at frame " + std::to_string(t));
}

}  // namespace

ClassWeights median_frequency_weights(const std::vector<std::int64_t>& counts) {
    std::int64_t total = 0;
    for (std::int64_t c : counts) {
        require(c >= 0, "median_frequency_weights: negative count");
        total += c;
    }
    if (total == 0) throw DataError("median_frequency_weights: all class counts are zero");

    std::vector<double> freqs;
    for (std::int64_t c : counts)
        if (c > 0) freqs.push_back(double(c) / double(total));
    std::vector<double> sorted = freqs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    ClassWeights w;
    w.w.resize(counts.size(), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0) w.w[c] = median / (double(counts[c]) / double(total));
    return w;
}

double weighted_cross_entropy_grad(const SeqMatrix& log_probs, const std::vector<int>& labels,
                                   const ClassWeights& weights, const FrameMask& mask,
                                   SeqMatrix& grad, double scale) {
    check_labels(log_probs, labels, mask);
    require(weights.w.size() == log_probs.cols(), "loss: weight count mismatch");
    const std::size_t T = log_probs.rows();
    const std::size_t n = unmasked_count(mask, T);
    if (n == 0) throw DataError("weighted_cross_entropy: zero unmasked frames");

    const bool with_grad = !grad.empty();
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (!frame_on(mask, t)) continue;
        const int c = labels[t];
        const double w = weights.w[std::size_t(c)];
        sum -= w * log_probs(t, std::size_t(c));
        if (with_grad) grad(t, std::size_t(c)) -= scale * w / double(n);
    }
    return sum / double(n);
}

double weighted_cross_entropy(const SeqMatrix& log_probs, const std::vector<int>& labels,
                              const ClassWeights& weights, const FrameMask& mask) {
    SeqMatrix no_grad;
    return weighted_cross_entropy_grad(log_probs, labels, weights, mask, no_grad, 0.0);
}

double truncated_mse_grad(const SeqMatrix& log_probs, double tau, const FrameMask& mask,
                          SeqMatrix& grad, double scale) {
    require(tau > 0.0, "truncated_mse: tau must be positive");
    require(mask.empty() || mask.size() == log_probs.rows(), "loss: mask length mismatch");
    const std::size_t T = log_probs.rows();
    const std::size_t C = log_probs.cols();
    const std::size_t n = unmasked_count(mask, T);
    if (n == 0) return 0.0;

    const bool with_grad = !grad.empty();
    const double norm = 1.0 / (double(n) * double(C));
    double sum = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        if (!frame_on(mask, t) || !frame_on(mask, t - 1)) continue;
        const double* cur = log_probs.row(t);
        const double* prev = log_probs.row(t - 1);
        for (std::size_t c = 0; c < C; ++c) {
            const double delta = cur[c] - prev[c];
            if (std::fabs(delta) <= tau) {
                sum += delta * delta;
                // The earlier frame is treated as a constant.
                if (with_grad) grad(t, c) += scale * 2.0 * delta * norm;
            } else {
                sum += tau * tau;
            }
        }
    }
    return sum * norm;
}

double truncated_mse(const SeqMatrix& log_probs, double tau, const FrameMask& mask) {
    SeqMatrix no_grad;
    return truncated_mse_grad(log_probs, tau, mask, no_grad, 0.0);
}

double focal_weighted_ce_grad(const SeqMatrix& log_probs, const std::vector<int>& labels,
                              const ClassWeights& weights, double gamma, const FrameMask& mask,
                              SeqMatrix& grad, double scale) {
    require(gamma >= 0.0, "focal_weighted_ce: gamma must be >= 0");
    check_labels(log_probs, labels, mask);
    require(weights.w.size() == log_probs.cols(), "loss: weight count mismatch");
    const std::size_t T = log_probs.rows();
    const std::size_t n = unmasked_count(mask, T);
    if (n == 0) throw DataError("focal_weighted_ce: zero unmasked frames");

    const bool with_grad = !grad.empty();
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (!frame_on(mask, t)) continue;
        const int c = labels[t];
        const double w = weights.w[std::size_t(c)];
        const double lp = log_probs(t, std::size_t(c));
        const double p = std::exp(lp);
        const double q = 1.0 - p;
        const double qg = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
        sum -= w * qg * lp;
        if (with_grad) {
            // d/dlp [ -w (1-e^lp)^g lp ] = -w (1-p)^(g-1) ((1-p) - g p lp)
            double d;
            if (gamma == 0.0) {
                d = -w;
            } else {
                const double qgm1 = std::pow(q, gamma - 1.0);
                d = -w * qgm1 * (q - gamma * p * lp);
            }
            grad(t, std::size_t(c)) += scale * d / double(n);
        }
    }
    return sum / double(n);
}

double focal_weighted_ce(const SeqMatrix& log_probs, const std::vector<int>& labels,
                         const ClassWeights& weights, double gamma, const FrameMask& mask) {
    SeqMatrix no_grad;
    return focal_weighted_ce_grad(log_probs, labels, weights, gamma, mask, no_grad, 0.0);
}

double combined_loss_grad(const std::vector<const SeqMatrix*>& stage_log_probs,
                          const std::vector<int>& labels, const ClassWeights& weights,
                          const LossConfig& cfg, const FrameMask& mask,
                          std::vector<SeqMatrix>& grads) {
    require(!stage_log_probs.empty(), "combined_loss: no stages");
    const bool with_grad = !grads.empty();
    if (with_grad)
        require(grads.size() == stage_log_probs.size(), "combined_loss: grad count mismatch");

    const double stage_scale = 1.0 / double(stage_log_probs.size());
    double total = 0.0;
    SeqMatrix no_grad;
    for (std::size_t s = 0; s < stage_log_probs.size(); ++s) {
        const SeqMatrix& lp = *stage_log_probs[s];
        SeqMatrix& g = with_grad ? grads[s] : no_grad;
        if (with_grad && g.empty()) g = SeqMatrix(lp.rows(), lp.cols());
        double cls;
        if (cfg.focal_gamma)
            cls = focal_weighted_ce_grad(lp, labels, weights, *cfg.focal_gamma, mask, g,
                                         stage_scale);
        else
            cls = weighted_cross_entropy_grad(lp, labels, weights, mask, g, stage_scale);
        double smooth = 0.0;
        if (cfg.use_tmse && cfg.lambda > 0.0)
            smooth = truncated_mse_grad(lp, cfg.tau, mask, g, stage_scale * cfg.lambda);
        total += cls + cfg.lambda * smooth;
    }
    return total * stage_scale;
}

double combined_loss(const ProbOutput& stage_outputs, const std::vector<int>& labels,
                     const ClassWeights& weights, const LossConfig& cfg, const FrameMask& mask) {
    std::vector<SeqMatrix> logs;
    std::vector<const SeqMatrix*> ptrs;
    logs.reserve(stage_outputs.stages.size());
    for (const SeqMatrix& probs : stage_outputs.stages) {
        SeqMatrix lp(probs.rows(), probs.cols());
        for (std::size_t i = 0; i < probs.size(); ++i) lp.data()[i] = std::log(probs.data()[i]);
        logs.push_back(std::move(lp));
    }
    for (const SeqMatrix& lp : logs) ptrs.push_back(&lp);
    std::vector<SeqMatrix> no_grads;
    return combined_loss_grad(ptrs, labels, weights, cfg, mask, no_grads);
}

}  // namespace ctcn
