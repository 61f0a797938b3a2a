#pragma once

#include <array>
#include <vector>

#include "colontcn/data.hpp"
#include "colontcn/rng.hpp"

namespace ctcn {

struct DurationStats {
    double mean = 1.0;
    double min = 0.0;
    double max = 1.0;
};

// Controls the synthetic procedure generator. Duration defaults follow the
// per-class annotation statistics of full-procedure colonoscopy recordings.
struct SyntheticSpec {
    std::array<DurationStats, 9> durations = {{
        {29.1, 0.0, 105.0},     // outside
        {594.4, 113.0, 2608.0}, // insertion
        {133.2, 17.0, 608.0},   // cecum
        {10.0, 0.0, 132.0},     // ileum
        {140.6, 13.0, 656.0},   // ascending
        {355.0, 49.0, 1964.0},  // transverse
        {148.2, 13.0, 1132.0},  // descending
        {176.8, 25.0, 726.0},   // sigmoid
        {101.4, 5.0, 597.0},    // rectum
    }};
    double ileum_presence_prob = 26.0 / 60.0;
    int feature_dim = 16;
    double separation = 1.0;      // scale of per-class mean vectors
    double noise = 1.0;           // white-noise level added per frame
    int smoothing_window = 5;     // centered moving-average width (frames)
    double fps = 5.0;

    void validate() const;
};

// Draws one duration in seconds from a min/max-truncated log-normal whose
// truncated mean matches `stats.mean`.
double sample_duration(const DurationStats& stats, RngStream& rng);

// Solves for the log-normal location so that the truncated mean matches.
double truncated_lognormal_mu(const DurationStats& stats, double sigma);

// Per-video class order: Outside, Insertion, Cecum (with an Ileum visit
// between two cecum sub-segments in a fraction of videos), Ascending,
// Transverse, Descending, Sigmoid, Rectum, Outside. Features are the class
// mean vector plus white noise, moving-average smoothed over time.
std::vector<FeatureSequence> generate_synthetic(const SyntheticSpec& spec, int n_videos,
                                                RngStream& rng);

}  // namespace ctcn
