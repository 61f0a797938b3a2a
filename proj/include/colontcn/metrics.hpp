#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colontcn/loss.hpp"
#include "colontcn/seq.hpp"

namespace ctcn {

// Frame-set counts per class: |GT_c|, |P_c| and |GT_c intersect P_c|.
struct ConfusionCounts {
    std::vector<std::int64_t> gt;
    std::vector<std::int64_t> pred;
    std::vector<std::int64_t> inter;

    explicit ConfusionCounts(std::size_t num_classes = 0)
        : gt(num_classes, 0), pred(num_classes, 0), inter(num_classes, 0) {}

    std::size_t num_classes() const { return gt.size(); }
    std::int64_t evaluated_frames() const {
        std::int64_t n = 0;
        for (std::int64_t c : gt) n += c;
        return n;
    }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
};

struct PerClassScores {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
};

enum class WeightMode { Support, InverseFrequency };

struct VideoWithdrawal {
    std::string video_id;
    std::int64_t actual = 0;     // A_i
    std::int64_t predicted = 0;  // P_i
};

struct MetricsReport {
    std::vector<double> f1;       // per class
    std::vector<double> jaccard;  // per class
    std::vector<double> precision;
    std::vector<double> recall;
    double wf1 = 0.0;             // support-weighted (default mode)
    double wjacc = 0.0;
    double wf1_inverse = 0.0;     // inverse-frequency weighting
    double wjacc_inverse = 0.0;
    double wmape = 0.0;           // percent
    std::int64_t evaluated_frames = 0;
    std::vector<VideoWithdrawal> videos;
};

ConfusionCounts confusion(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels,
                          const FrameMask& eval_mask, std::size_t num_classes);

// PR = I/|P| (0 when |P| = 0), RE = I/|GT|, F1 = harmonic mean (0 when
// PR+RE = 0). Classes with |GT| = 0 get NaN-free zeros here and are excluded
// from weighted averages.
PerClassScores f1_scores(const ConfusionCounts& counts);

std::vector<double> jaccard_scores(const ConfusionCounts& counts);

// Weighted average over classes with |GT_c| > 0; weights are support
// proportions (default) or normalized inverse frequencies.
double weighted_average(const std::vector<double>& per_class_scores, const ConfusionCounts& counts,
                        WeightMode mode);

// Withdrawal frames are those labeled neither `outside` nor `insertion`.
// WMAPE = mean over videos of |A_i - P_i| / A_i * 100.
double wmape(const std::vector<VideoWithdrawal>& videos);

std::int64_t withdrawal_frames(const std::vector<int>& labels, const FrameMask& mask,
                               int outside_class, int insertion_class);

// Full report from micro-aggregated counts plus per-video withdrawal rows.
MetricsReport make_report(const ConfusionCounts& counts,
                          const std::vector<VideoWithdrawal>& videos);

}  // namespace ctcn
