#include "colontcn/metrics.hpp"

#include <cmath>

namespace ctcn {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    require(num_classes() == o.num_classes(), "confusion: class count mismatch");
    for (std::size_t c = 0; c < gt.size(); ++c) {
        gt[c] += o.gt[c];
        pred[c] += o.pred[c];
        inter[c] += o.inter[c];
    }
    return *this;
}

ConfusionCounts confusion(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels,
                          const FrameMask& eval_mask, std::size_t num_classes) {
    require(pred_labels.size() == gt_labels.size(), "confusion: length mismatch");
    require(eval_mask.empty() || eval_mask.size() == gt_labels.size(),
            "confusion: mask length mismatch");
    ConfusionCounts counts(num_classes);
    for (std::size_t t = 0; t < gt_labels.size(); ++t) {
        if (!eval_mask.empty() && !eval_mask[t]) continue;
        const int g = gt_labels[t];
        const int p = pred_labels[t];
        if (g < 0 || g >= int(num_classes) || p < 0 || p >= int(num_classes))
            throw DataError("confusion: label out of range at frame " + std::to_string(t));
        ++counts.gt[std::size_t(g)];
        ++counts.pred[std::size_t(p)];
        if (g == p) ++counts.inter[std::size_t(g)];
    }
    return counts;
}

PerClassScores f1_scores(const ConfusionCounts& counts) {
    PerClassScores s;
    const std::size_t C = counts.num_classes();
    s.precision.resize(C, 0.0);
    s.recall.resize(C, 0.0);
    s.f1.resize(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const double inter = double(counts.inter[c]);
        s.precision[c] = counts.pred[c] > 0 ? inter / double(counts.pred[c]) : 0.0;
        s.recall[c] = counts.gt[c] > 0 ? inter / double(counts.gt[c]) : 0.0;
        const double pr_plus_re = s.precision[c] + s.recall[c];
        s.f1[c] = pr_plus_re > 0.0 ? 2.0 * s.precision[c] * s.recall[c] / pr_plus_re : 0.0;
    }
    return s;
}

std::vector<double> jaccard_scores(const ConfusionCounts& counts) {
    const std::size_t C = counts.num_classes();
    std::vector<double> j(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const std::int64_t uni = counts.gt[c] + counts.pred[c] - counts.inter[c];
        j[c] = uni > 0 ? double(counts.inter[c]) / double(uni) : 0.0;
    }
    return j;
}

double weighted_average(const std::vector<double>& per_class_scores, const ConfusionCounts& counts,
                        WeightMode mode) {
    require(per_class_scores.size() == counts.num_classes(),
            "weighted_average: score count mismatch");
    double weight_sum = 0.0;
    double acc = 0.0;
    for (std::size_t c = 0; c < counts.num_classes(); ++c) {
        if (counts.gt[c] <= 0) continue;  // absent classes excluded, weights renormalized
        const double w =
            mode == WeightMode::Support ? double(counts.gt[c]) : 1.0 / double(counts.gt[c]);
        weight_sum += w;
        acc += w * per_class_scores[c];
    }
    if (weight_sum == 0.0) throw DataError("weighted_average: no class has ground-truth frames");
    return acc / weight_sum;
}

std::int64_t withdrawal_frames(const std::vector<int>& labels, const FrameMask& mask,
                               int outside_class, int insertion_class) {
    std::int64_t n = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (!mask.empty() && !mask[t]) continue;
        if (labels[t] != outside_class && labels[t] != insertion_class) ++n;
    }
    return n;
}

double wmape(const std::vector<VideoWithdrawal>& videos) {
    require(!videos.empty(), "wmape: no videos");
    double sum = 0.0;
    for (const VideoWithdrawal& v : videos) {
        if (v.actual <= 0)
            throw DataError("wmape: video " + v.video_id + " has no withdrawal frames");
        sum += std::fabs(double(v.actual - v.predicted)) / double(v.actual);
    }
    return sum / double(videos.size()) * 100.0;
}

MetricsReport make_report(const ConfusionCounts& counts,
                          const std::vector<VideoWithdrawal>& videos) {
    MetricsReport r;
    const PerClassScores s = f1_scores(counts);
    r.precision = s.precision;
    r.recall = s.recall;
    r.f1 = s.f1;
    r.jaccard = jaccard_scores(counts);
    r.wf1 = weighted_average(r.f1, counts, WeightMode::Support);
    r.wjacc = weighted_average(r.jaccard, counts, WeightMode::Support);
    r.wf1_inverse = weighted_average(r.f1, counts, WeightMode::InverseFrequency);
    r.wjacc_inverse = weighted_average(r.jaccard, counts, WeightMode::InverseFrequency);
    r.evaluated_frames = counts.evaluated_frames();
    r.videos = videos;
    r.wmape = videos.empty() ? 0.0 : wmape(videos);
    return r;
}

}  // namespace ctcn
