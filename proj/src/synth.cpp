#include "colontcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ctcn {

void SyntheticSpec::validate() const {
    for (const DurationStats& d : durations)
        if (!(d.min <= d.mean && d.mean <= d.max) || d.mean <= 0.0)
            throw ConfigError("synthetic spec: need 0 < min <= mean <= max per class");
    if (ileum_presence_prob < 0.0 || ileum_presence_prob > 1.0)
        throw ConfigError("synthetic spec: ileum_presence_prob must be in [0, 1]");
    if (feature_dim < 1) throw ConfigError("synthetic spec: feature_dim must be >= 1");
    if (smoothing_window < 1) throw ConfigError("synthetic spec: smoothing_window must be >= 1");
    if (separation < 0.0 || noise < 0.0)
        throw ConfigError("synthetic spec: separation and noise must be >= 0");
    if (fps <= 0.0) throw ConfigError("synthetic spec: fps must be positive");
}

namespace {

constexpr double kSigma = 0.75;  // log-normal shape; spread within [min, max]

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Mean of a log-normal(mu, sigma) truncated to [lo, hi].
double truncated_mean(double mu, double sigma, double lo, double hi) {
    const double llo = lo > 0.0 ? std::log(lo) : -1e30;
    const double lhi = std::log(hi);
    const double a = (llo - mu) / sigma;
    const double b = (lhi - mu) / sigma;
    const double mass = std_normal_cdf(b) - std_normal_cdf(a);
    if (mass <= 0.0) return hi;
    const double num = std::exp(mu + 0.5 * sigma * sigma) *
                       (std_normal_cdf(b - sigma) - std_normal_cdf(a - sigma));
    return num / mass;
}

}  // namespace

double truncated_lognormal_mu(const DurationStats& stats, double sigma) {
    // truncated_mean is monotone increasing in mu; bisect.
    const double hi_bound = std::log(stats.max) + 2.0;
    const double lo_bound = std::log(std::max(stats.min, 1e-6)) - 12.0;
    double lo = lo_bound, hi = hi_bound;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (truncated_mean(mid, sigma, stats.min, stats.max) < stats.mean)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double sample_duration(const DurationStats& stats, RngStream& rng) {
    if (stats.max <= stats.min) return stats.max;
    const double mu = truncated_lognormal_mu(stats, kSigma);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double x = std::exp(mu + kSigma * rng.next_normal());
        if (x >= stats.min && x <= stats.max) return x;
    }
    return std::clamp(stats.mean, stats.min, stats.max);
}

namespace {

std::vector<std::vector<double>> class_mean_vectors(const SyntheticSpec& spec, RngStream& rng) {
    std::vector<std::vector<double>> means(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<double> v(std::size_t(spec.feature_dim));
        double norm = 0.0;
        for (double& x : v) {
            x = rng.next_normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x = x / norm * spec.separation;
        means[std::size_t(c)] = std::move(v);
    }
    return means;
}

struct Piece {
    LabelClass label;
    std::int64_t frames;
};

std::vector<Piece> sample_timeline(const SyntheticSpec& spec, RngStream& rng) {
    auto frames_of = [&](double seconds) {
        return std::max<std::int64_t>(1, std::llround(seconds * spec.fps));
    };
    auto draw = [&](LabelClass c) {
        return sample_duration(spec.durations[std::size_t(int(c))], rng);
    };

    std::vector<Piece> pieces;
    pieces.push_back({LabelClass::Outside, frames_of(draw(LabelClass::Outside))});
    pieces.push_back(
        {LabelClass::Insertion, frames_of(draw(LabelClass::Insertion))});

    const bool has_ileum = rng.next_double() < spec.ileum_presence_prob;
    const double cecum_seconds = draw(LabelClass::Cecum);
    if (has_ileum) {
        // The ileum visit happens in the middle of cecum exploration, so the
        // cecum duration is split into two sub-segments around it.
        const double split = rng.next_uniform(0.25, 0.75);
        const std::int64_t first = frames_of(cecum_seconds * split);
        const std::int64_t second = frames_of(cecum_seconds * (1.0 - split));
        pieces.push_back({LabelClass::Cecum, first});
        pieces.push_back({LabelClass::Ileum, frames_of(draw(LabelClass::Ileum))});
        pieces.push_back({LabelClass::Cecum, second});
    } else {
        pieces.push_back({LabelClass::Cecum, frames_of(cecum_seconds)});
    }

    for (LabelClass c : {LabelClass::Ascending, LabelClass::Transverse, LabelClass::Descending,
                         LabelClass::Sigmoid, LabelClass::Rectum})
        pieces.push_back({c, frames_of(draw(c))});
    pieces.push_back({LabelClass::Outside, frames_of(draw(LabelClass::Outside))});
    return pieces;
}

void smooth_moving_average(SeqMatrix& features, int window) {
    if (window <= 1) return;
    const std::int64_t T = std::int64_t(features.rows());
    const std::size_t D = features.cols();
    const int half = window / 2;
    SeqMatrix out(features.rows(), D);
    // Prefix sums per column over a window truncated at the boundaries.
    std::vector<double> prefix((std::size_t(T) + 1) * D, 0.0);
    for (std::int64_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < D; ++d)
            prefix[std::size_t(t + 1) * D + d] = prefix[std::size_t(t) * D + d] + features(std::size_t(t), d);
    for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - half);
        const std::int64_t hi = std::min<std::int64_t>(T - 1, t + half);
        const double inv = 1.0 / double(hi - lo + 1);
        for (std::size_t d = 0; d < D; ++d)
            out(std::size_t(t), d) =
                (prefix[std::size_t(hi + 1) * D + d] - prefix[std::size_t(lo) * D + d]) * inv;
    }
    features = std::move(out);
}

}  // namespace

std::vector<FeatureSequence> generate_synthetic(const SyntheticSpec& spec, int n_videos,
                                                RngStream& rng) {
    spec.validate();
    require(n_videos >= 0, "generate_synthetic: negative video count");

    RngStream means_rng = rng.derive(0);
    const std::vector<std::vector<double>> means = class_mean_vectors(spec, means_rng);
    std::vector<FeatureSequence> videos;
    videos.reserve(std::size_t(n_videos));
    for (int i = 0; i < n_videos; ++i) {
        RngStream vrng = rng.derive(std::uint64_t(i) + 1);
        const std::vector<Piece> pieces = sample_timeline(spec, vrng);
        std::int64_t T = 0;
        for (const Piece& p : pieces) T += p.frames;

        FeatureSequence seq;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%03d", i);
        seq.video_id = id;
        seq.fps = spec.fps;
        seq.features = SeqMatrix(std::size_t(T), std::size_t(spec.feature_dim));
        seq.labels.reserve(std::size_t(T));
        for (const Piece& p : pieces)
            seq.labels.insert(seq.labels.end(), std::size_t(p.frames), int(p.label));

        for (std::int64_t t = 0; t < T; ++t) {
            const std::vector<double>& mean = means[std::size_t(seq.labels[std::size_t(t)])];
            double* row = seq.features.row(std::size_t(t));
            for (int d = 0; d < spec.feature_dim; ++d)
                row[d] = mean[std::size_t(d)] + spec.noise * vrng.next_normal();
        }
        smooth_moving_average(seq.features, spec.smoothing_window);
        seq.mask = mask_from_labels(seq.labels);
        videos.push_back(std::move(seq));
    }
    return videos;
}

}  // namespace ctcn
